"""
Verificação de gradientes por diferenças finitas centrais
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from gloss.exceptions import ValidationError
from gloss.processors.encoder import classify, encode, init_encoder, init_head
from gloss.processors.graph import GraphBuilder, column_stochastic
from gloss.processors.losses import composite, cross_entropy, g_loss
from gloss.processors.lpa import gamma_split, one_hot, propagate_closed_form
from gloss.processors.tape import Tape, Var, as_matrix

logger = logging.getLogger(__name__)

ABS_TOL = 1e-8

# programa escalar: recebe o tape e a Var de entrada, devolve a raiz 1x1
TapeProgram = Callable[[Tape, Var], Var]


@dataclass
class GradientCheckReport:
    """Comparação backward vs diferenças centrais"""
    max_abs_err: float
    max_rel_err: float
    worst_index: Optional[tuple]
    n_checked: int
    n_failed: int
    tol: float
    eps: float

    @property
    def passed(self) -> bool:
        return self.n_failed == 0

    def to_dict(self) -> Dict:
        return {
            'max_abs_err': self.max_abs_err,
            'max_rel_err': self.max_rel_err,
            'worst_index': list(self.worst_index) if self.worst_index else None,
            'n_checked': self.n_checked,
            'n_failed': self.n_failed,
            'tol': self.tol,
            'eps': self.eps,
            'pass': self.passed,
        }


def _evaluate(f: TapeProgram, x: np.ndarray) -> float:
    tape = Tape()
    root = f(tape, tape.variable(x, name='x'))
    value = root.item()
    if not np.isfinite(value):
        raise ValidationError(f"programa não finito na sonda ({value})")
    return value


def gradient_check(f: TapeProgram, x, eps: float = 1e-5, tol: float = 1e-4) -> GradientCheckReport:
    """
    Compara o gradiente do tape com diferenças centrais elemento a elemento

    Um elemento passa se o erro absoluto for <= 1e-8 ou o erro relativo <= tol.

    Args:
        f: programa escalar (tape, x) -> raiz 1x1
        x: ponto de avaliação
        eps: passo das diferenças finitas
        tol: tolerância relativa
    """
    if not eps > 0:
        raise ValidationError(f"eps precisa ser positivo, recebeu {eps}")
    x = as_matrix(x)

    tape = Tape()
    x_var = tape.variable(x, name='x')
    root = f(tape, x_var)
    if not np.isfinite(root.item()):
        raise ValidationError("programa não finito no ponto de avaliação")
    analytic = tape.backward(root)[x_var]

    max_abs = max_rel = 0.0
    worst, worst_key = None, (-1.0, -1.0)
    failed = 0
    for idx in np.ndindex(*x.shape):
        plus = x.copy()
        minus = x.copy()
        plus[idx] += eps
        minus[idx] -= eps
        numeric = (_evaluate(f, plus) - _evaluate(f, minus)) / (2.0 * eps)
        abs_err = abs(analytic[idx] - numeric)
        rel_err = abs_err / max(abs(analytic[idx]), abs(numeric), 1e-300)
        if abs_err <= ABS_TOL:
            rel_err = 0.0
        if (rel_err, abs_err) > worst_key:
            worst, worst_key = idx, (rel_err, abs_err)
        max_abs = max(max_abs, abs_err)
        max_rel = max(max_rel, rel_err)
        if rel_err > tol:
            failed += 1

    report = GradientCheckReport(max_abs_err=float(max_abs), max_rel_err=float(max_rel), worst_index=worst,
                                 n_checked=int(x.size), n_failed=failed, tol=tol, eps=eps)
    logger.debug(f"gradient_check: {report.to_dict()}")
    return report


def composite_loss_program(x_raw: np.ndarray, y: np.ndarray, num_classes: int, embedding_dim: int = 4,
                           gamma: float = 0.5, sigma: float = 1.0, lam: float = 0.8,
                           architecture: str = 'linear', seed: int = 0, target: str = 'encoder.W'):
    """
    Programa da perda composta em função de um parâmetro do encoder

    O caminho completo (encoder -> grafo -> split γ -> solve -> G-Loss + CE)
    é gravado; σ fixo para que a perda seja suave no parâmetro.

    Returns:
        (programa, valor inicial do parâmetro alvo)
    """
    x_raw = np.asarray(x_raw, dtype=np.float64)
    y = np.asarray(y, dtype=int)
    params = init_encoder(x_raw.shape[1], embedding_dim, architecture, hidden_dim=embedding_dim + 2, seed=seed)
    head = init_head(embedding_dim, num_classes, seed=seed + 1)
    if target not in {f'encoder.{k}' for k in params.weights}:
        raise ValidationError(f"parâmetro desconhecido: {target}")
    split = gamma_split(y, gamma, seed=seed)
    builder = GraphBuilder('fixed', sigma)

    def program(tape: Tape, w: Var) -> Var:
        z, _ = encode(tape, params, x_raw, overrides={target: w})
        tm = column_stochastic(builder.build(z).A_norm, split)
        soft = propagate_closed_form(tm, one_hot(y[split.labeled_idx], num_classes))
        lg = g_loss(soft.node, one_hot(y[split.masked_idx], num_classes))
        logits, _ = classify(tape, head, z)
        return composite(lg, cross_entropy(logits, y), lam).total

    return program, params.weights[target.partition('.')[2]].copy()


def random_composite_check(seed: int = 0, batch_size: int = 8, input_dim: int = 6, num_classes: int = 3,
                           eps: float = 1e-5, tol: float = 1e-4, **kwargs) -> GradientCheckReport:
    """Perda composta em um batch aleatório com todas as classes presentes"""
    rng = np.random.default_rng(seed)
    y = np.concatenate([np.arange(num_classes), rng.integers(0, num_classes, batch_size - num_classes)])
    y = rng.permutation(y)
    x_raw = rng.standard_normal((batch_size, input_dim)) + y[:, None]
    program, w0 = composite_loss_program(x_raw, y, num_classes, seed=seed, **kwargs)
    return gradient_check(program, w0, eps=eps, tol=tol)
