"""
Grafo de similaridade por minibatch

Distâncias quadráticas -> kernel gaussiano -> normalização simétrica
-> matriz de transição coluna-estocástica. Todas as etapas ficam gravadas no
tape, então o gradiente da perda chega até os embeddings.
"""

import logging
from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

from gloss.exceptions import GraphError, ValidationError
from gloss.processors.tape import Tape, Var, as_var

logger = logging.getLogger(__name__)

SIGMA_MODES = ('sqrt', 'fixed')


@dataclass
class SimilarityGraph:
    """Grafo de um minibatch"""
    W: Var                # pesos do kernel, diagonal zero
    degree: np.ndarray    # D_ii = soma_j w_ij
    A_norm: Var           # D^-1/2 W D^-1/2
    sigma: float


@dataclass
class TransitionMatrix:
    """T coluna-estocástica e seus blocos rotulado/mascarado"""
    T: Var
    labeled_idx: np.ndarray
    masked_idx: np.ndarray
    T_uu: Var             # mascarado x mascarado
    T_ul: Var             # mascarado x rotulado

    @classmethod
    def from_array(cls, T: Any, labeled_idx, masked_idx, tape: Optional[Tape] = None) -> 'TransitionMatrix':
        """Monta a partir de uma matriz já coluna-estocástica (útil em verificações)"""
        tape = tape or Tape()
        node = tape.constant(T)
        labeled_idx = np.asarray(labeled_idx, dtype=int)
        masked_idx = np.asarray(masked_idx, dtype=int)
        return cls(
            T=node,
            labeled_idx=labeled_idx,
            masked_idx=masked_idx,
            T_uu=tape.masked_select(node, rows=masked_idx, cols=masked_idx),
            T_ul=tape.masked_select(node, rows=masked_idx, cols=labeled_idx),
        )


def pairwise_sq_distances(X: Any) -> Var:
    """Matriz B x B de ||X_i - X_j||^2 (simétrica, diagonal zero)"""
    X = as_var(X)
    if X.shape[0] < 2:
        raise ValidationError(f"são necessários ao menos 2 pontos, recebeu {X.shape[0]}")
    if not np.all(np.isfinite(X.value)):
        raise ValidationError("embeddings contêm NaN/Inf")
    return X.tape.pairwise_sqdist(X)


def gaussian_kernel(D2: Any, sigma: float) -> Var:
    """W_ij = exp(-D2_ij / (2 sigma^2)), com w_ii = 0"""
    if not (sigma > 0 and np.isfinite(sigma)):
        raise ValidationError(f"sigma precisa ser positivo e finito, recebeu {sigma}")
    D2 = as_var(D2)
    tape = D2.tape
    n = D2.shape[0]
    E = tape.exp(tape.scale(D2, -1.0 / (2.0 * sigma * sigma)))
    off_diagonal = 1.0 - np.eye(n)
    return tape.multiply(E, off_diagonal)


def degree_vector(W: Any) -> np.ndarray:
    W = W.value if isinstance(W, Var) else np.asarray(W, dtype=np.float64)
    return W.sum(axis=1)


def symmetric_normalize(W: Any) -> Var:
    """Ã = D^-1/2 W D^-1/2"""
    W = as_var(W)
    tape = W.tape
    n = W.shape[0]
    deg = tape.matmul(W, np.ones((n, 1)))
    if np.any(deg.value <= 0):
        zero_rows = np.flatnonzero(deg.value.ravel() <= 0).tolist()
        raise GraphError(f"linhas com grau nulo: {zero_rows}")
    inv_sqrt = tape.divide(np.ones((n, 1)), tape.sqrt(deg))
    scaling = tape.matmul(inv_sqrt, tape.transpose(inv_sqrt))
    return tape.multiply(W, scaling)


def column_stochastic(A_norm: Any, split) -> TransitionMatrix:
    """
    T_ij = Ã_ij / soma_m Ã_mj, com os blocos T_uu e T_ul do split

    Args:
        A_norm: matriz de adjacência normalizada
        split: LabelSplit (labeled_idx / masked_idx)
    """
    A_norm = as_var(A_norm)
    tape = A_norm.tape
    col_sums = A_norm.value.sum(axis=0)
    if np.any(col_sums <= 0):
        raise GraphError(f"colunas com soma nula: {np.flatnonzero(col_sums <= 0).tolist()}")
    T = tape.column_normalize(A_norm)
    labeled = np.asarray(split.labeled_idx, dtype=int)
    masked = np.asarray(split.masked_idx, dtype=int)
    return TransitionMatrix(
        T=T,
        labeled_idx=labeled,
        masked_idx=masked,
        T_uu=tape.masked_select(T, rows=masked, cols=masked),
        T_ul=tape.masked_select(T, rows=masked, cols=labeled),
    )


def median_sq_distance(X: Any) -> float:
    """Mediana (elemento médio inferior) das B(B-1)/2 distâncias quadráticas"""
    X = X.value if isinstance(X, Var) else np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if n < 2:
        raise ValidationError(f"são necessários ao menos 2 pontos, recebeu {n}")
    diff = X[:, None, :] - X[None, :, :]
    D2 = np.sum(diff * diff, axis=2)
    values = np.sort(D2[np.triu_indices(n, k=1)])
    return float(values[(values.size - 1) // 2])


def sigma_sqrt(X: Any) -> float:
    """
    G-Loss-SQRT: sigma = sqrt(d1 / 3), d1 = mediana das distâncias quadráticas

    sqrt(d/3) é o ponto de inflexão de k(sigma) = exp(-d / (2 sigma^2)).
    """
    d1 = median_sq_distance(X)
    if d1 <= 0:
        raise GraphError("todas as distâncias medianas são zero; informe sigma explícito (sigma_mode=fixed)")
    return float(np.sqrt(d1 / 3.0))


class GraphBuilder:
    """Constrói o grafo de similaridade de um minibatch a partir dos embeddings"""

    def __init__(self, sigma_mode: str = 'fixed', sigma: float = 0.5, sigma_multiplier: float = 1.0):
        if sigma_mode not in SIGMA_MODES:
            raise ValidationError(f"sigma_mode inválido: {sigma_mode}")
        self.sigma_mode = sigma_mode
        self.sigma = sigma
        self.sigma_multiplier = sigma_multiplier

    def resolve_sigma(self, Z: Any) -> float:
        # constante para o tape: nenhum gradiente passa pela mediana
        base = sigma_sqrt(Z) if self.sigma_mode == 'sqrt' else self.sigma
        return float(base * self.sigma_multiplier)

    def build(self, Z: Var) -> SimilarityGraph:
        sigma = self.resolve_sigma(Z)
        D2 = pairwise_sq_distances(Z)
        W = gaussian_kernel(D2, sigma)
        A_norm = symmetric_normalize(W)
        return SimilarityGraph(W=W, degree=degree_vector(W), A_norm=A_norm, sigma=sigma)
