"""
Verificação cruzada da propagação: forma fechada x série de Neumann x
passeios aleatórios (Monte Carlo)

Com T coluna-estocástica, T_ij é a probabilidade do passo j -> i. A entrada
Ŷ[i, c] é o número esperado de visitas ao nó mascarado i por passeios que
partem dos nós rotulados da classe c e terminam ao pisar de novo em um nó
rotulado.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from gloss.exceptions import SingularPropagationError, ValidationError
from gloss.processors.graph import GraphBuilder, TransitionMatrix, column_stochastic
from gloss.processors.lpa import (LabelSplit, gamma_split, mass_excess, one_hot, propagate_closed_form,
                                  propagate_neumann, spectral_radius)
from gloss.processors.tape import Tape

logger = logging.getLogger(__name__)

MAX_WALK_STEPS = 100_000


@dataclass
class LpaInstance:
    tm: TransitionMatrix
    y: np.ndarray
    split: LabelSplit
    num_classes: int

    @property
    def y_labeled(self) -> np.ndarray:
        return one_hot(self.y[self.split.labeled_idx], self.num_classes)


@dataclass
class LpaVerifyReport:
    """Desvios máximos entre os três caminhos de cálculo"""
    instances: int
    max_neumann_dev: float
    mc_instances: int
    max_monte_carlo_dev: float
    rho_max: float
    solve_failures: int
    max_mass_excess: float
    neumann_iterations: List[int] = field(default_factory=list)

    def passed(self, neumann_tol: float = 1e-8, mc_tol: float = 2e-2) -> bool:
        return (self.solve_failures == 0 and self.rho_max < 1.0
                and self.max_neumann_dev < neumann_tol and self.max_monte_carlo_dev < mc_tol)

    def to_dict(self) -> Dict:
        return {
            'instances': self.instances,
            'max_neumann_dev': self.max_neumann_dev,
            'mc_instances': self.mc_instances,
            'max_monte_carlo_dev': self.max_monte_carlo_dev,
            'rho_max': self.rho_max,
            'solve_failures': self.solve_failures,
            'max_mass_excess': self.max_mass_excess,
            'max_neumann_iterations': max(self.neumann_iterations) if self.neumann_iterations else 0,
            'pass': self.passed(),
        }


def random_instance(rng: np.random.Generator, batch_size: int, num_classes: int = 3, dim: int = 3,
                    gamma: float = 0.5, sigma: Optional[float] = None) -> LpaInstance:
    """Batch aleatório passado pelo pipeline real de grafo e split γ"""
    if batch_size < 4:
        raise ValidationError(f"batch_size precisa ser >= 4, recebeu {batch_size}")
    y = rng.integers(0, num_classes, batch_size)
    x = rng.standard_normal((batch_size, dim)) + 1.5 * y[:, None]
    builder = GraphBuilder('sqrt' if sigma is None else 'fixed', sigma or 1.0)
    split = gamma_split(y, gamma, seed=int(rng.integers(0, 2**31)))
    graph = builder.build(Tape().constant(x))
    return LpaInstance(tm=column_stochastic(graph.A_norm, split), y=y, split=split, num_classes=num_classes)


def monte_carlo_visits(T: np.ndarray, labeled_idx, masked_idx, labels_labeled, num_classes: int,
                       walks: int = 100_000, seed: int = 0) -> np.ndarray:
    """
    Estimativa de Ŷ (B_e x C) por passeios aleatórios

    De cada nó rotulado saem `walks` passeios; cada passo sorteia o destino i
    com probabilidade T[i, atual]. Visitas a nós mascarados são contadas na
    classe da origem até o passeio entrar no conjunto rotulado.
    """
    T = np.asarray(T, dtype=np.float64)
    labeled_idx = np.asarray(labeled_idx, dtype=int)
    masked_idx = np.asarray(masked_idx, dtype=int)
    labels_labeled = np.asarray(labels_labeled, dtype=int)
    n = T.shape[0]
    rng = np.random.default_rng(seed)

    cumulative = np.cumsum(T, axis=0)
    cumulative[-1, :] = 1.0
    row_of = np.full(n, -1)
    row_of[masked_idx] = np.arange(masked_idx.size)
    counts = np.zeros((masked_idx.size, num_classes))

    for source, cls in zip(labeled_idx, labels_labeled):
        position = np.full(walks, source)
        for _ in range(MAX_WALK_STEPS):
            u = rng.random(position.size)
            position = np.sum(u[:, None] > cumulative[:, position].T, axis=1)
            rows = row_of[position]
            alive = rows >= 0
            np.add.at(counts[:, cls], rows[alive], 1.0)
            position = position[alive]
            if position.size == 0:
                break
        else:
            logger.warning(f"Passeios a partir do nó {source} não terminaram em {MAX_WALK_STEPS} passos")
    return counts / walks


def verify_lpa(instances: int = 50, max_batch: int = 32, mc_instances: int = 10, mc_batch: int = 8,
               walks: int = 100_000, num_classes: int = 3, seed: int = 0) -> LpaVerifyReport:
    """
    Roda o triângulo de verificação em instâncias aleatórias

    Args:
        instances: instâncias forma fechada x Neumann (B em [4, max_batch])
        mc_instances: instâncias pequenas (B em [4, mc_batch]) também contra Monte Carlo
        walks: passeios por nó rotulado
    """
    rng = np.random.default_rng(seed)
    max_nm = max_mc = rho_max = excess_max = 0.0
    failures = 0
    iterations: List[int] = []

    def closed_form(inst: LpaInstance) -> Optional[np.ndarray]:
        nonlocal failures, rho_max, excess_max
        rho_max = max(rho_max, spectral_radius(inst.tm.T_uu.value, iters=200))
        try:
            Y = propagate_closed_form(inst.tm, inst.y_labeled).Y_hat
        except SingularPropagationError as e:
            failures += 1
            logger.error(f"Solve singular em instância aleatória: {e}")
            return None
        excess_max = max(excess_max, mass_excess(Y))
        return Y

    for _ in range(instances):
        inst = random_instance(rng, int(rng.integers(4, max_batch + 1)), num_classes)
        Y_cf = closed_form(inst)
        if Y_cf is None:
            continue
        soft, iters = propagate_neumann(inst.tm, inst.y_labeled, tol=1e-12, max_iter=200_000)
        iterations.append(iters)
        max_nm = max(max_nm, float(np.max(np.abs(Y_cf - soft.Y_hat))))

    for k in range(mc_instances):
        inst = random_instance(rng, int(rng.integers(4, mc_batch + 1)), num_classes)
        Y_cf = closed_form(inst)
        if Y_cf is None:
            continue
        Y_mc = monte_carlo_visits(inst.tm.T.value, inst.split.labeled_idx, inst.split.masked_idx,
                                  inst.y[inst.split.labeled_idx], num_classes, walks=walks, seed=seed + k)
        max_mc = max(max_mc, float(np.max(np.abs(Y_cf - Y_mc))))

    report = LpaVerifyReport(
        instances=instances,
        max_neumann_dev=max_nm,
        mc_instances=mc_instances,
        max_monte_carlo_dev=max_mc,
        rho_max=rho_max,
        solve_failures=failures,
        max_mass_excess=excess_max,
        neumann_iterations=iterations,
    )
    logger.info(f"Verificação LPA: {report.to_dict()}")
    return report
