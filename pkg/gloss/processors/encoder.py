"""
Encoder treinável (linear ou MLP de duas camadas), cabeça linear de
classificação, otimizadores e checkpoint binário
"""

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np

from gloss.exceptions import DatasetParseError, ShapeError, ValidationError
from gloss.processors.tape import Tape, Var

logger = logging.getLogger(__name__)

ARCHITECTURES = ('linear', 'mlp2')
OPTIMIZERS = ('adam', 'sgd')
CHECKPOINT_MAGIC = b'GLCK1'

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class EncoderParams:
    """Pesos do encoder"""
    architecture: str                 # linear | mlp2
    weights: Dict[str, np.ndarray]    # linear: W, b | mlp2: W1, b1, W2, b2
    normalize: bool = True            # normalização L2 das linhas na saída

    @property
    def input_dim(self) -> int:
        key = 'W' if self.architecture == 'linear' else 'W1'
        return self.weights[key].shape[0]

    @property
    def output_dim(self) -> int:
        key = 'W' if self.architecture == 'linear' else 'W2'
        return self.weights[key].shape[1]

    def copy(self) -> 'EncoderParams':
        return EncoderParams(self.architecture, {k: v.copy() for k, v in self.weights.items()}, self.normalize)


@dataclass
class ClassifierHead:
    """Camada linear E x C"""
    weight: np.ndarray
    bias: np.ndarray   # 1 x C

    @property
    def num_classes(self) -> int:
        return self.weight.shape[1]

    def copy(self) -> 'ClassifierHead':
        return ClassifierHead(self.weight.copy(), self.bias.copy())


@dataclass
class OptimizerState:
    """Momentos por parâmetro (adam) e contador de passos"""
    kind: str = 'adam'
    eta: float = 1e-3
    step: int = 0
    first_moment: Dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: Dict[str, np.ndarray] = field(default_factory=dict)


def xavier_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_encoder(input_dim: int, embedding_dim: int = 32, architecture: str = 'linear',
                 hidden_dim: int = 64, normalize: bool = True, seed: int = 0) -> EncoderParams:
    """Inicialização Xavier-uniform determinística a partir da semente"""
    if architecture not in ARCHITECTURES:
        raise ValidationError(f"arquitetura desconhecida: {architecture}")
    rng = np.random.default_rng(seed)
    if architecture == 'linear':
        weights = {
            'W': xavier_uniform(input_dim, embedding_dim, rng),
            'b': np.zeros((1, embedding_dim)),
        }
    else:
        weights = {
            'W1': xavier_uniform(input_dim, hidden_dim, rng),
            'b1': np.zeros((1, hidden_dim)),
            'W2': xavier_uniform(hidden_dim, embedding_dim, rng),
            'b2': np.zeros((1, embedding_dim)),
        }
    return EncoderParams(architecture=architecture, weights=weights, normalize=normalize)


def init_head(embedding_dim: int, num_classes: int, seed: int = 0) -> ClassifierHead:
    rng = np.random.default_rng(seed)
    return ClassifierHead(
        weight=xavier_uniform(embedding_dim, num_classes, rng),
        bias=np.zeros((1, num_classes)),
    )


def _affine(tape: Tape, x: Var, W: Var, b: Var) -> Var:
    ones = np.ones((x.shape[0], 1))
    return tape.add(tape.matmul(x, W), tape.matmul(ones, b))


def encode(tape: Tape, params: EncoderParams, x_raw, prefix: str = 'encoder',
           overrides: Optional[Dict[str, Var]] = None) -> Tuple[Var, Dict[str, Var]]:
    """
    Forward do encoder no tape

    Args:
        overrides: Vars já gravadas que substituem parâmetros pelo nome qualificado

    Returns:
        (embeddings B x d, Vars dos parâmetros por nome qualificado)
    """
    x = tape.lift(x_raw)
    if x.shape[1] != params.input_dim:
        raise ShapeError(f"encode: entrada com {x.shape[1]} colunas, encoder espera {params.input_dim}")
    overrides = overrides or {}
    handles = {}
    for k, v in params.weights.items():
        key = f"{prefix}.{k}"
        handles[key] = overrides[key] if key in overrides else tape.variable(v, name=key)

    if params.architecture == 'linear':
        z = _affine(tape, x, handles[f'{prefix}.W'], handles[f'{prefix}.b'])
    else:
        h = tape.relu(_affine(tape, x, handles[f'{prefix}.W1'], handles[f'{prefix}.b1']))
        z = _affine(tape, h, handles[f'{prefix}.W2'], handles[f'{prefix}.b2'])

    if params.normalize:
        z = tape.l2_row_normalize(z)
    return z, handles


def classify(tape: Tape, head: ClassifierHead, z, prefix: str = 'head') -> Tuple[Var, Dict[str, Var]]:
    """Logits B x C = z·W + b"""
    z = tape.lift(z)
    if z.shape[1] != head.weight.shape[0]:
        raise ShapeError(f"classify: embeddings com {z.shape[1]} colunas, cabeça espera {head.weight.shape[0]}")
    handles = {
        f'{prefix}.weight': tape.variable(head.weight, name=f'{prefix}.weight'),
        f'{prefix}.bias': tape.variable(head.bias, name=f'{prefix}.bias'),
    }
    return _affine(tape, z, handles[f'{prefix}.weight'], handles[f'{prefix}.bias']), handles


def embed(params: EncoderParams, x_raw: np.ndarray) -> np.ndarray:
    """Embeddings sem gradiente (avaliação)"""
    z, _ = encode(Tape(), params, x_raw)
    return z.value


def predict(head: ClassifierHead, z: np.ndarray) -> np.ndarray:
    logits = np.asarray(z) @ head.weight + head.bias
    return np.argmax(logits, axis=1)


def named_parameters(params: Optional[EncoderParams] = None, head: Optional[ClassifierHead] = None) -> Dict[str, np.ndarray]:
    named = {}
    if params is not None:
        named.update({f'encoder.{k}': v for k, v in params.weights.items()})
    if head is not None:
        named.update({'head.weight': head.weight, 'head.bias': head.bias})
    return named


def assign_parameters(named: Dict[str, np.ndarray], params: Optional[EncoderParams] = None,
                      head: Optional[ClassifierHead] = None):
    for key, value in named.items():
        group, _, name = key.partition('.')
        if group == 'encoder' and params is not None:
            params.weights[name] = value
        elif group == 'head' and head is not None:
            setattr(head, name, value)


def optimizer_step(state: OptimizerState, params: Dict[str, np.ndarray],
                   grads: Dict[str, np.ndarray]) -> Dict[str, np.ndarray]:
    """
    Um passo de otimização (sgd ou adam com correção de viés)

    Returns:
        Novo dicionário de parâmetros (os arrays de entrada não são alterados)
    """
    if state.kind not in OPTIMIZERS:
        raise ValidationError(f"otimizador desconhecido: {state.kind}")
    for name, g in grads.items():
        if name not in params:
            raise ValidationError(f"gradiente para parâmetro inexistente: {name}")
        if g.shape != params[name].shape:
            raise ShapeError(f"gradiente de {name} com forma {g.shape}, parâmetro {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise ValidationError(f"gradiente não finito em {name}")

    state.step += 1
    updated = dict(params)
    for name, g in grads.items():
        if state.kind == 'sgd':
            updated[name] = params[name] - state.eta * g
            continue
        m = state.first_moment.get(name, np.zeros_like(g))
        v = state.second_moment.get(name, np.zeros_like(g))
        m = ADAM_BETA1 * m + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * v + (1.0 - ADAM_BETA2) * g * g
        state.first_moment[name] = m
        state.second_moment[name] = v
        m_hat = m / (1.0 - ADAM_BETA1 ** state.step)
        v_hat = v / (1.0 - ADAM_BETA2 ** state.step)
        updated[name] = params[name] - state.eta * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
    return updated


def save_checkpoint(path: Union[str, Path], params: EncoderParams, head: Optional[ClassifierHead] = None):
    """Formato GLCK1: arquitetura, flag de normalização, arrays nomeados em f64"""
    tag = params.architecture.encode('utf-8')
    arrays = named_parameters(params, head)
    with open(path, 'wb') as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack('<I', len(tag)))
        f.write(tag)
        f.write(struct.pack('<BI', int(params.normalize), len(arrays)))
        for name, value in arrays.items():
            key = name.encode('utf-8')
            f.write(struct.pack('<I', len(key)))
            f.write(key)
            f.write(struct.pack('<II', *value.shape))
            f.write(np.ascontiguousarray(value, dtype='<f8').tobytes())


def load_checkpoint(path: Union[str, Path]) -> Tuple[EncoderParams, Optional[ClassifierHead]]:
    data = Path(path).read_bytes()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise DatasetParseError("checkpoint sem assinatura GLCK1")
    offset = len(CHECKPOINT_MAGIC)

    def take(fmt: str):
        nonlocal offset
        size = struct.calcsize(fmt)
        if offset + size > len(data):
            raise DatasetParseError("checkpoint truncado")
        values = struct.unpack_from(fmt, data, offset)
        offset += size
        return values

    def take_bytes(n: int) -> bytes:
        nonlocal offset
        if offset + n > len(data):
            raise DatasetParseError("checkpoint truncado")
        chunk = data[offset:offset + n]
        offset += n
        return chunk

    tag_len, = take('<I')
    architecture = take_bytes(tag_len).decode('utf-8')
    normalize, count = take('<BI')
    arrays = {}
    for _ in range(count):
        key_len, = take('<I')
        name = take_bytes(key_len).decode('utf-8')
        rows, cols = take('<II')
        raw = take_bytes(rows * cols * 8)
        arrays[name] = np.frombuffer(raw, dtype='<f8').reshape(rows, cols).astype(np.float64)

    weights = {k.partition('.')[2]: v for k, v in arrays.items() if k.startswith('encoder.')}
    params = EncoderParams(architecture=architecture, weights=weights, normalize=bool(normalize))
    head = None
    if 'head.weight' in arrays:
        head = ClassifierHead(weight=arrays['head.weight'], bias=arrays['head.bias'])
    return params, head
