"""
Experimentos: varredura de hiperparâmetros (γ, multiplicador de σ, λ) e
comparação entre perdas com teste t pareado sobre as sementes
"""

import itertools
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from gloss.exceptions import GLossError
from gloss.parsers.dataset import Dataset
from gloss.training.config import TrainConfig
from gloss.training.trainer import GLossTrainer, TrainReport
from gloss.utils.logging_helper import RunLogger
from gloss.validators.metrics import paired_t_test

logger = logging.getLogger(__name__)

# eixo da varredura -> atributo de TrainConfig
SWEEP_AXES = {'gamma': 'gamma', 'sigma_multiplier': 'sigma_multiplier', 'lambda': 'lam'}
METRICS = ('accuracy', 'macro_f1', 'macro_silhouette')

INTEGRATED_LOSSES = ('gloss_o', 'ce', 'scl', 'triplet', 'cosine')
STANDALONE_LOSSES = ('gloss_o', 'scl', 'triplet', 'cosine')


@dataclass
class RunOutcome:
    """Resultado de uma execução (ponto da grade x semente)"""
    setting: Dict[str, Any]
    seed: int
    ok: bool
    metrics: Dict[str, float] = field(default_factory=dict)
    total_time: float = 0.0
    avg_epoch_time: float = 0.0
    early_stop_epoch: int = 0
    error: Optional[str] = None
    report: Optional[TrainReport] = None

    def to_row(self) -> Dict[str, Any]:
        row = dict(self.setting)
        row.update({
            'seed': self.seed,
            'status': 'ok' if self.ok else 'erro',
            **{f'test_{m}': self.metrics.get(m) for m in METRICS},
            'total_time': self.total_time,
            'avg_epoch_time': self.avg_epoch_time,
            'early_stop_epoch': self.early_stop_epoch,
            'error': self.error or '',
        })
        return row


@dataclass
class SweepResult:
    rows: List[Dict[str, Any]]
    runs: List[RunOutcome]
    tornado: List[Dict[str, Any]]


@dataclass
class CompareResult:
    rows: List[Dict[str, Any]]
    runs: List[RunOutcome]
    significance: List[Dict[str, Any]]


def run_once(config: TrainConfig, train: Dataset, val: Dataset, test: Dataset,
             setting: Optional[Dict[str, Any]] = None) -> RunOutcome:
    """Uma execução completa; falhas viram RunOutcome com ok=False"""
    setting = dict(setting or {})
    try:
        trainer = GLossTrainer(config, RunLogger(f"{config.loss}-s{config.seed}"))
        report = trainer.fit(train, val, test)
    except (GLossError, ValueError, ArithmeticError) as e:
        logger.error(f"Erro na execução {setting} seed={config.seed}: {e}")
        return RunOutcome(setting=setting, seed=config.seed, ok=False, error=f"{type(e).__name__}: {e}")
    return RunOutcome(
        setting=setting,
        seed=config.seed,
        ok=True,
        metrics=report.test.to_dict(),
        total_time=report.total_time,
        avg_epoch_time=report.avg_epoch_time,
        early_stop_epoch=report.early_stop_epoch,
        report=report,
    )


def _run_job(job: Tuple[TrainConfig, Dataset, Dataset, Dataset, Dict[str, Any]]) -> RunOutcome:
    return run_once(*job)


def _execute(jobs: List[Tuple], workers: int) -> List[RunOutcome]:
    if workers <= 1 or len(jobs) <= 1:
        return [_run_job(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_job, jobs))


def _aggregate(runs: Sequence[RunOutcome]) -> Dict[str, Any]:
    ok = [r for r in runs if r.ok]
    row: Dict[str, Any] = {'runs_ok': len(ok), 'runs_failed': len(runs) - len(ok)}
    for m in METRICS:
        values = [r.metrics[m] for r in ok]
        row[f'{m}_mean'] = float(np.mean(values)) if values else None
        row[f'{m}_var'] = float(np.var(values)) if values else None
    row['total_time_mean'] = float(np.mean([r.total_time for r in ok])) if ok else None
    row['avg_epoch_time_mean'] = float(np.mean([r.avg_epoch_time for r in ok])) if ok else None
    row['early_stop_epoch_mean'] = float(np.mean([r.early_stop_epoch for r in ok])) if ok else None
    return row


def sweep(base: TrainConfig, train: Dataset, val: Dataset, test: Dataset,
          gammas: Optional[Sequence[float]] = None, sigma_multipliers: Optional[Sequence[float]] = None,
          lambdas: Optional[Sequence[float]] = None, seeds: Optional[Sequence[int]] = None,
          workers: int = 1, run_logger: Optional[RunLogger] = None) -> SweepResult:
    """
    Uma execução completa por ponto da grade e semente

    Eixos não informados ficam fixos no valor da configuração base. Cada linha
    agregada traz a média entre sementes e o desvio de F1 macro para o melhor
    ponto (dados do gráfico tornado).
    """
    log = run_logger or RunLogger('sweep')
    axes = {
        'gamma': list(gammas) if gammas else [base.gamma],
        'sigma_multiplier': list(sigma_multipliers) if sigma_multipliers else [base.sigma_multiplier],
        'lambda': list(lambdas) if lambdas else [base.lam],
    }
    seeds = list(seeds) if seeds else list(base.seeds)
    points = [dict(zip(axes, values)) for values in itertools.product(*axes.values())]
    if not points:
        raise GLossError("grade de varredura vazia")

    log.step_start('sweep', f"{len(points)} pontos x {len(seeds)} sementes")
    jobs = []
    for point in points:
        overrides = {SWEEP_AXES[k]: v for k, v in point.items()}
        for seed in seeds:
            jobs.append((replace(base, seed=seed, **overrides), train, val, test, point))
    runs = _execute(jobs, workers)

    rows = []
    for point in points:
        point_runs = [r for r in runs if r.setting == point]
        rows.append({**point, **_aggregate(point_runs)})
        for r in point_runs:
            if not r.ok:
                log.warning('sweep', f"Execução falhou em {point} seed={r.seed}: {r.error}")

    scored = [r['macro_f1_mean'] for r in rows if r['macro_f1_mean'] is not None]
    best_f1 = max(scored) if scored else None
    for row in rows:
        row['deviation_from_best'] = (best_f1 - row['macro_f1_mean']
                                      if best_f1 is not None and row['macro_f1_mean'] is not None else None)

    tornado = tornado_rows(rows, axes)
    log.step_complete('sweep', f"{len(rows)} pontos", {'best_macro_f1': best_f1})
    return SweepResult(rows=rows, runs=runs, tornado=tornado)


def tornado_rows(rows: List[Dict[str, Any]], axes: Dict[str, List[Any]]) -> List[Dict[str, Any]]:
    """
    Por hiperparâmetro varrido: maior queda de F1 macro em relação ao melhor
    ponto, variando só aquele eixo
    """
    valid = [r for r in rows if r.get('macro_f1_mean') is not None]
    if not valid:
        return []
    best = max(valid, key=lambda r: r['macro_f1_mean'])
    out = []
    for axis, values in axes.items():
        if len(values) < 2:
            continue
        line = [r for r in valid if all(r[a] == best[a] for a in axes if a != axis)]
        worst = min(line, key=lambda r: r['macro_f1_mean'])
        out.append({
            'parameter': axis,
            'best_value': best[axis],
            'worst_value': worst[axis],
            'best_macro_f1': best['macro_f1_mean'],
            'worst_macro_f1': worst['macro_f1_mean'],
            'max_deviation': best['macro_f1_mean'] - worst['macro_f1_mean'],
        })
    return sorted(out, key=lambda r: r['max_deviation'], reverse=True)


def compare(base: TrainConfig, train: Dataset, val: Dataset, test: Dataset,
            losses: Optional[Sequence[str]] = None, seeds: Optional[Sequence[int]] = None,
            mode: Optional[str] = None, reference: str = 'gloss_o', workers: int = 1,
            run_logger: Optional[RunLogger] = None) -> CompareResult:
    """
    Cada perda sob as mesmas sementes e configuração; tabela com acurácia,
    F1 macro, silhouette, tempo total, tempo por época e época de parada,
    mais testes t pareados da perda de referência contra as demais
    """
    log = run_logger or RunLogger('compare')
    mode = mode or base.mode
    losses = list(losses) if losses else list(INTEGRATED_LOSSES if mode == 'integrated' else STANDALONE_LOSSES)
    seeds = list(seeds) if seeds else list(base.seeds)

    log.step_start('compare', f"{len(losses)} perdas x {len(seeds)} sementes (modo {mode})")
    jobs = []
    for loss in losses:
        for seed in seeds:
            jobs.append((replace(base, mode=mode, loss=loss, seed=seed), train, val, test, {'loss': loss}))
    runs = _execute(jobs, workers)

    rows = []
    for loss in losses:
        loss_runs = [r for r in runs if r.setting['loss'] == loss]
        rows.append({'loss': loss, 'mode': mode, **_aggregate(loss_runs)})

    significance = []
    if reference not in losses:
        log.warning('compare', f"Perda de referência '{reference}' fora da comparação; sem testes t")
    elif len(seeds) < 2:
        log.warning('compare', "Teste t pareado exige ao menos 2 sementes")
    else:
        significance = significance_rows(runs, reference, [l for l in losses if l != reference], seeds)

    log.step_complete('compare', f"{len(rows)} perdas", {'significance_rows': len(significance)})
    return CompareResult(rows=rows, runs=runs, significance=significance)


def significance_rows(runs: Sequence[RunOutcome], reference: str, baselines: Sequence[str],
                      seeds: Sequence[int], metrics: Sequence[str] = ('accuracy', 'macro_f1')) -> List[Dict[str, Any]]:
    by_key = {(r.setting['loss'], r.seed): r for r in runs}
    out = []
    for baseline in baselines:
        paired = [(by_key.get((reference, s)), by_key.get((baseline, s))) for s in seeds]
        paired = [(a, b) for a, b in paired if a is not None and b is not None and a.ok and b.ok]
        if len(paired) < 2:
            logger.warning(f"Pares insuficientes para {reference} vs {baseline}")
            continue
        for metric in metrics:
            a = [p[0].metrics[metric] for p in paired]
            b = [p[1].metrics[metric] for p in paired]
            result = paired_t_test(a, b)
            out.append({
                'reference': reference,
                'baseline': baseline,
                'metric': metric,
                'n': result.n,
                'mu_reference': float(np.mean(a)),
                'mu_baseline': float(np.mean(b)),
                'delta_mu': result.mean_diff,
                't_stat': result.t_stat,
                'p_value': result.p_value,
                'significance': result.stars,
            })
    return out
