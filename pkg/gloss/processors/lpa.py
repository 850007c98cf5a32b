"""
Propagação de rótulos (LPA) em forma fechada

Ŷ_u = (I - T_uu)^-1 T_ul Y_l, gravado no tape via linear_solve. A série de
Neumann e o raio espectral servem de verificação independente.
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from gloss.exceptions import ConvergenceError, SingularPropagationError, ValidationError
from gloss.processors.graph import TransitionMatrix
from gloss.processors.tape import Var

logger = logging.getLogger(__name__)

GAMMA_WARN_RANGE = (0.1, 0.9)
MASS_TOLERANCE = 1e-9

SeedLike = Union[int, Sequence[int], np.random.SeedSequence]


@dataclass
class LabelSplit:
    """Partição γ de um minibatch"""
    labeled_idx: np.ndarray   # B_l = round(γ·B)
    masked_idx: np.ndarray    # B_e = B - B_l
    gamma: float

    @property
    def n_labeled(self) -> int:
        return int(self.labeled_idx.size)

    @property
    def n_masked(self) -> int:
        return int(self.masked_idx.size)


@dataclass
class SoftLabels:
    """Rótulos inferidos para os nós mascarados (B_e x C)"""
    Y_hat: np.ndarray
    node: Optional[Var] = None   # presente quando calculado no tape


def one_hot(y: Sequence[int], num_classes: int) -> np.ndarray:
    y = np.asarray(y, dtype=int)
    out = np.zeros((y.size, num_classes))
    out[np.arange(y.size), y] = 1.0
    return out


def labeled_count(batch_size: int, gamma: float) -> int:
    # arredondamento "meio para cima", independente do round() bancário
    return int(np.floor(gamma * batch_size + 0.5))


def gamma_split(y: Sequence[int], gamma: float, seed: SeedLike = 0, stratify: bool = True) -> LabelSplit:
    """
    Divide o batch em nós rotulados (fração γ) e mascarados

    Args:
        y: rótulos do batch
        gamma: fração de rótulos visíveis para a propagação
        seed: semente (int ou sequência, ex. [seed, epoch, batch])
        stratify: garante ao menos um rótulo visível por classe quando possível
    """
    y = np.asarray(y, dtype=int)
    B = y.size
    if not 0 < gamma < 1:
        raise ValidationError(f"gamma precisa estar em (0, 1), recebeu {gamma}")
    if B < 4:
        raise ValidationError(f"gamma_split exige B >= 4, recebeu {B}")
    n_labeled = labeled_count(B, gamma)
    if n_labeled < 1 or n_labeled > B - 1:
        raise ValidationError(f"gamma={gamma} com B={B} gera B_l={n_labeled}, B_e={B - n_labeled}")
    if not GAMMA_WARN_RANGE[0] <= gamma <= GAMMA_WARN_RANGE[1]:
        warnings.warn(f"gamma={gamma} fora da faixa recomendada {GAMMA_WARN_RANGE}", stacklevel=2)

    rng = np.random.default_rng(seed)
    order = rng.permutation(B)

    chosen = []
    classes = np.unique(y)
    if stratify and classes.size <= n_labeled:
        for c in rng.permutation(classes):
            members = order[y[order] == c]
            chosen.append(int(members[0]))
    taken = set(chosen)
    for idx in order:
        if len(chosen) >= n_labeled:
            break
        if int(idx) not in taken:
            chosen.append(int(idx))
            taken.add(int(idx))

    labeled = np.sort(np.asarray(chosen, dtype=int))
    masked = np.setdiff1d(np.arange(B), labeled)
    return LabelSplit(labeled_idx=labeled, masked_idx=masked, gamma=gamma)


def spectral_radius(M: np.ndarray, iters: int = 100, seed: int = 0) -> float:
    """
    Estimativa do módulo do autovalor dominante por iteração de potência

    Para M não negativa a iteração roda sobre M + I: o raio de Perron r vira o
    único autovalor de módulo r + 1, então blocos periódicos (ex. T_uu 2x2 com
    diagonal zero) também convergem.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValidationError(f"matriz precisa ser quadrada, recebeu {M.shape}")
    if iters < 10:
        raise ValidationError(f"iters precisa ser >= 10, recebeu {iters}")
    if M.size == 0 or not np.any(M):
        return 0.0

    shift = 1.0 if np.all(M >= 0) else 0.0
    A = M + shift * np.eye(M.shape[0])
    rng = np.random.default_rng(seed)
    x = rng.random(M.shape[0]) + 0.1
    x /= np.linalg.norm(x)
    estimate = 0.0
    for _ in range(iters):
        y = A @ x
        norm = np.linalg.norm(y)
        if norm == 0:
            return 0.0
        estimate = norm
        x = y / norm
    return float(max(0.0, estimate - shift))


def mass_excess(Y_hat: np.ndarray) -> float:
    """Maior excesso de massa por linha (soma - 1), antes da renormalização"""
    if Y_hat.size == 0:
        return 0.0
    return float(np.max(Y_hat.sum(axis=1)) - 1.0)


def propagate_closed_form(tm: TransitionMatrix, y_labeled: np.ndarray, rho_iters: int = 100) -> SoftLabels:
    """
    Ŷ_u = (I - T_uu)^-1 T_ul Y_l, diferenciável via linear_solve

    Args:
        tm: matriz de transição com blocos do split
        y_labeled: one-hot B_l x C dos nós rotulados
        rho_iters: iterações da estimativa de ρ anexada a erros de singularidade
    """
    tape = tm.T_uu.tape
    y_labeled = np.asarray(y_labeled, dtype=np.float64)
    n_masked = tm.T_uu.shape[0]
    if y_labeled.shape[0] != tm.T_ul.shape[1]:
        raise ValidationError(f"Y_l tem {y_labeled.shape[0]} linhas, T_ul tem {tm.T_ul.shape[1]} colunas")

    system = tape.subtract(np.eye(n_masked), tm.T_uu)
    rhs = tape.matmul(tm.T_ul, y_labeled)
    try:
        solution = tape.linear_solve(system, rhs)
    except SingularPropagationError as e:
        rho = spectral_radius(tm.T_uu.value, iters=max(rho_iters, 10))
        raise SingularPropagationError("propagação em forma fechada falhou", rho=rho, rcond=e.rcond) from e

    # ruído numérico negativo (~ -1e-12) é zerado
    Y_hat = tape.relu(solution)
    return SoftLabels(Y_hat=Y_hat.value, node=Y_hat)


def propagate_neumann(tm: TransitionMatrix, y_labeled: np.ndarray, tol: float = 1e-10,
                      max_iter: int = 10000) -> Tuple[SoftLabels, int]:
    """
    Soma parcial (I + T_uu + T_uu^2 + ...) T_ul Y_l até a variação máxima < tol

    Returns:
        (rótulos inferidos, iterações usadas)
    """
    if tol <= 0:
        raise ValidationError(f"tol precisa ser positivo, recebeu {tol}")
    T_uu = tm.T_uu.value
    term = tm.T_ul.value @ np.asarray(y_labeled, dtype=np.float64)
    total = term.copy()
    residual = float('inf')
    for iteration in range(1, max_iter + 1):
        term = T_uu @ term
        total += term
        residual = float(np.max(np.abs(term))) if term.size else 0.0
        if residual < tol:
            return SoftLabels(Y_hat=np.maximum(total, 0.0)), iteration
    raise ConvergenceError(f"série de Neumann não convergiu em {max_iter} iterações", residual=residual)
