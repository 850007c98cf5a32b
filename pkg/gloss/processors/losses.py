"""
Funções de perda: G-Loss, cross-entropy, composta e as baselines
(supervised contrastive, triplet, similaridade de cosseno)
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Optional, Sequence

import numpy as np

from gloss.exceptions import ShapeError, ValidationError
from gloss.processors.tape import LOG_EPS, Var

logger = logging.getLogger(__name__)

# deslocamento que remove a própria âncora do denominador do SCL
SELF_LOGIT_OFFSET = -1e9


class LossKind(Enum):
    """Perdas disponíveis para o treinamento"""
    GLOSS_O = "gloss_o"
    GLOSS_SQRT = "gloss_sqrt"
    CE = "ce"
    SCL = "scl"
    TRIPLET = "triplet"
    COSINE = "cosine"

    @property
    def is_graph(self) -> bool:
        return self in (LossKind.GLOSS_O, LossKind.GLOSS_SQRT)

    @property
    def is_representation(self) -> bool:
        return self is not LossKind.CE


@dataclass
class LossValue:
    """Resultado de uma perda: nó total no tape e componentes escalares"""
    total: Var
    lg: Optional[float]
    lce: Optional[float]
    lam: float
    components: Dict[str, float] = field(default_factory=dict)


def _labels(y: Sequence[int], n: int) -> np.ndarray:
    y = np.asarray(y, dtype=int).ravel()
    if y.size != n:
        raise ShapeError(f"{y.size} rótulos para {n} linhas")
    return y


def g_loss(y_hat: Var, y_true_masked: np.ndarray, normalize: bool = True) -> Var:
    """
    L_G = -(1/B_e) soma_j soma_c y_jc log ŷ_jc

    Args:
        y_hat: rótulos propagados (B_e x C) no tape
        y_true_masked: one-hot verdadeiro dos nós mascarados
        normalize: renormaliza as linhas de ŷ para somar 1 antes do log
    """
    tape = y_hat.tape
    y_true_masked = np.asarray(y_true_masked, dtype=np.float64)
    if y_true_masked.shape != y_hat.shape:
        raise ShapeError(f"g_loss: ŷ {y_hat.shape} e y {y_true_masked.shape}")
    if y_hat.shape[0] < 1:
        raise ValidationError("g_loss exige B_e >= 1")
    probs = tape.row_normalize(y_hat) if normalize else y_hat
    log_probs = tape.log_clamped(probs, LOG_EPS)
    picked = tape.masked_select(log_probs, mask=y_true_masked > 0)
    return tape.negate(tape.reduce_mean(picked))


def cross_entropy(logits: Var, y: Sequence[int]) -> Var:
    """Softmax + CE média no batch (estável por subtração do máximo)"""
    tape = logits.tape
    y = _labels(y, logits.shape[0])
    log_probs = tape.log_softmax(logits)
    picked = tape.gather(log_probs, np.arange(y.size), y)
    return tape.negate(tape.reduce_mean(picked))


def composite(lg: Optional[Var], lce: Optional[Var], lam: float) -> LossValue:
    """
    L = λ·L_G + (1-λ)·L_CE

    Com λ=0 e lg ausente, o total é o próprio nó de CE (caminho do grafo
    não é executado).
    """
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"lambda precisa estar em [0, 1], recebeu {lam}")
    if lg is None and lce is None:
        raise ValidationError("composite exige ao menos um componente")
    if lg is None:
        if lam != 0.0:
            raise ValidationError("lambda > 0 exige a perda de grafo")
        total = lce
    elif lce is None:
        if lam != 1.0:
            raise ValidationError("lambda < 1 exige a cross-entropy")
        total = lg
    else:
        tape = lg.tape
        total = tape.add(tape.scale(lg, lam), tape.scale(lce, 1.0 - lam))
    return LossValue(
        total=total,
        lg=lg.item() if lg is not None else None,
        lce=lce.item() if lce is not None else None,
        lam=lam,
    )


def weighted(loss: Var, lce: Optional[Var], lam: float, name: str) -> LossValue:
    """Combina uma perda de representação com CE (baselines integradas)"""
    if lce is None:
        return LossValue(total=loss, lg=None, lce=None, lam=1.0, components={name: loss.item()})
    if not 0.0 <= lam <= 1.0:
        raise ValidationError(f"lambda precisa estar em [0, 1], recebeu {lam}")
    tape = loss.tape
    total = tape.add(tape.scale(loss, lam), tape.scale(lce, 1.0 - lam))
    return LossValue(total=total, lg=None, lce=lce.item(), lam=lam, components={name: loss.item()})


def scl(z: Var, y: Sequence[int], tau: float) -> Var:
    """
    Supervised contrastive: média sobre âncoras com positivos de
    -(1/|P(i)|) soma_p log softmax_{a != i}(z_i·z_a/τ)_p
    """
    if tau <= 0:
        raise ValidationError(f"tau precisa ser positivo, recebeu {tau}")
    tape = z.tape
    B = z.shape[0]
    y = _labels(y, B)

    positives = (y[:, None] == y[None, :]) & ~np.eye(B, dtype=bool)
    counts = positives.sum(axis=1)
    anchors = counts > 0
    if not np.any(anchors):
        raise ValidationError("nenhuma âncora com positivo no batch")
    if not np.all(anchors):
        logger.debug("SCL: %d âncoras sem positivo ignoradas", int((~anchors).sum()))

    inv_counts = np.zeros(B)
    inv_counts[anchors] = 1.0 / counts[anchors]
    weights = positives * inv_counts[:, None] / anchors.sum()

    sims = tape.scale(tape.matmul(z, tape.transpose(z)), 1.0 / tau)
    logits = tape.add(sims, np.eye(B) * SELF_LOGIT_OFFSET)
    log_probs = tape.log_softmax(logits)
    return tape.negate(tape.reduce_sum(tape.multiply(log_probs, weights)))


def triplet(z: Var, y: Sequence[int], alpha: float) -> Var:
    """Média (batch-all) de max(0, ||z - z+||^2 - ||z - z-||^2 + α)"""
    if alpha < 0:
        raise ValidationError(f"margem precisa ser >= 0, recebeu {alpha}")
    tape = z.tape
    B = z.shape[0]
    y = _labels(y, B)

    same = y[:, None] == y[None, :]
    a_idx, p_idx, n_idx = [], [], []
    for a in range(B):
        pos = np.flatnonzero(same[a])
        pos = pos[pos != a]
        neg = np.flatnonzero(~same[a])
        if pos.size == 0 or neg.size == 0:
            continue
        pp, nn = np.meshgrid(pos, neg, indexing='ij')
        a_idx.append(np.full(pp.size, a))
        p_idx.append(pp.ravel())
        n_idx.append(nn.ravel())
    if not a_idx:
        raise ValidationError("nenhum triplet válido no batch")
    a_idx = np.concatenate(a_idx)
    p_idx = np.concatenate(p_idx)
    n_idx = np.concatenate(n_idx)

    D2 = tape.pairwise_sqdist(z)
    gap = tape.subtract(tape.gather(D2, a_idx, p_idx), tape.gather(D2, a_idx, n_idx))
    hinge = tape.relu(tape.add(gap, np.array([[alpha]])))
    return tape.reduce_mean(hinge)


def cosine_pair(z: Var, y: Sequence[int]) -> Var:
    """Média sobre os B(B-1)/2 pares de (cos(z_i, z_j) - [y_i == y_j])^2"""
    tape = z.tape
    B = z.shape[0]
    if B < 2:
        raise ValidationError(f"cosine_pair exige B >= 2, recebeu {B}")
    y = _labels(y, B)
    if np.any(np.linalg.norm(z.value, axis=1) == 0):
        raise ValidationError("embedding de norma zero em cosine_pair")

    unit = tape.l2_row_normalize(z)
    cos = tape.matmul(unit, tape.transpose(unit))
    rows, cols = np.triu_indices(B, k=1)
    targets = (y[rows] == y[cols]).astype(np.float64).reshape(-1, 1)
    err = tape.subtract(tape.gather(cos, rows, cols), targets)
    return tape.reduce_mean(tape.multiply(err, err))
