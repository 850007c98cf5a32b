"""
Treinamento G-Loss por minibatch

Cada passo: encode -> grafo -> split γ -> propagação em forma fechada ->
perda -> backward -> otimizador. O grafo é reconstruído a partir dos
embeddings correntes em todo passo.
"""

import logging
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from gloss.exceptions import (ConfigError, GraphError, SingularPropagationError, TestSetAccessError,
                              TrainingError, ValidationError)
from gloss.parsers.dataset import Batch, Dataset, minibatches
from gloss.processors.encoder import (ClassifierHead, EncoderParams, OptimizerState, assign_parameters,
                                      classify, embed, encode, init_encoder, init_head, named_parameters,
                                      optimizer_step, predict)
from gloss.processors.graph import GraphBuilder, column_stochastic
from gloss.processors.losses import (LossKind, LossValue, composite, cosine_pair, cross_entropy, g_loss, scl,
                                     triplet, weighted)
from gloss.processors.lpa import MASS_TOLERANCE, gamma_split, mass_excess, one_hot, propagate_closed_form, \
    spectral_radius
from gloss.processors.tape import Tape, Var
from gloss.training.config import TrainConfig
from gloss.utils.logging_helper import RunLogger
from gloss.validators.metrics import Metrics, accuracy, evaluate, macro_silhouette

logger = logging.getLogger(__name__)

PHASES = ('forward', 'graph_build', 'lpa_solve', 'backward', 'optimizer', 'io')
GRAPH_MIN_BATCH = 4

# erros de um batch que levam a descartá-lo, não a abortar a época
SKIPPABLE_ERRORS = (ValidationError, GraphError, SingularPropagationError)


class PhaseTimer:
    """Acumula tempo de parede por fase; 'io' recebe o resíduo não medido"""

    def __init__(self):
        self.totals: Dict[str, float] = {p: 0.0 for p in PHASES}

    @contextmanager
    def phase(self, name: str):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.totals[name] += time.perf_counter() - start

    def close(self, wall: float) -> Dict[str, float]:
        measured = sum(v for k, v in self.totals.items() if k != 'io')
        self.totals['io'] = max(0.0, wall - measured)
        return dict(self.totals)


class EarlyStopping:
    """Parada antecipada sobre um monitor a maximizar"""

    def __init__(self, patience: int = 10, min_change: float = 0.0):
        self.patience = patience
        self.min_change = min_change
        self.best_value = float('-inf')
        self.best_epoch = 0
        self.counter = 0

    def step(self, value: float, epoch: int) -> bool:
        """Registra o monitor da época; True se houve melhora"""
        if value > self.best_value + self.min_change:
            self.best_value = value
            self.best_epoch = epoch
            self.counter = 0
            return True
        self.counter += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.counter >= self.patience


@dataclass
class StepResult:
    """Saída de um passo de treinamento"""
    loss: LossValue
    grads: Dict[str, np.ndarray]
    diagnostics: Dict[str, Any] = field(default_factory=dict)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    lg: Optional[float]
    lce: Optional[float]
    components: Dict[str, float]
    val_accuracy: Optional[float]
    val_macro_f1: Optional[float]
    val_macro_silhouette: float
    timings: Dict[str, float]
    epoch_time: float
    rho_mean: Optional[float] = None
    rho_max: Optional[float] = None
    mass_excess_max: Optional[float] = None
    batches: int = 0
    skipped_batches: int = 0
    fallback_batches: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class TrainReport:
    """Histórico por época, parada antecipada e métricas finais de teste"""
    mode: str
    loss: str
    seed: int
    config: Dict[str, Any]
    epochs: List[EpochRecord] = field(default_factory=list)
    early_stop_epoch: int = 0
    best_epoch: int = 0
    total_time: float = 0.0
    test: Optional[Metrics] = None
    test_accesses: int = 0

    @property
    def avg_epoch_time(self) -> float:
        if not self.epochs:
            return 0.0
        return float(np.mean([e.epoch_time for e in self.epochs]))

    @property
    def train_losses(self) -> List[float]:
        return [e.train_loss for e in self.epochs]

    def summary(self) -> Dict[str, Any]:
        return {
            'mode': self.mode,
            'loss': self.loss,
            'seed': self.seed,
            'epochs_run': len(self.epochs),
            'early_stop_epoch': self.early_stop_epoch,
            'best_epoch': self.best_epoch,
            'total_time': self.total_time,
            'avg_epoch_time': self.avg_epoch_time,
            'test': self.test.to_dict() if self.test else None,
            'config': self.config,
        }


def _graph_term(tape: Tape, z: Var, batch: Batch, config: TrainConfig, num_classes: int,
                split_seed: Any, timer: PhaseTimer, diagnostics: Dict[str, Any]) -> Var:
    """L_G de um batch; levanta erro se o batch não comporta o grafo"""
    if batch.size < GRAPH_MIN_BATCH:
        raise ValidationError(f"batch com {batch.size} itens; perdas de grafo exigem B >= {GRAPH_MIN_BATCH}")
    split = gamma_split(batch.y, config.gamma, seed=split_seed, stratify=config.stratify_split)

    with timer.phase('graph_build'):
        builder = GraphBuilder(config.effective_sigma_mode, config.sigma, config.sigma_multiplier)
        graph = builder.build(z)
        tm = column_stochastic(graph.A_norm, split)
    diagnostics['sigma'] = graph.sigma
    diagnostics['n_labeled'] = split.n_labeled
    diagnostics['n_masked'] = split.n_masked

    y_labeled = one_hot(batch.y[split.labeled_idx], num_classes)
    with timer.phase('lpa_solve'):
        soft = propagate_closed_form(tm, y_labeled, rho_iters=config.rho_iters)

    diagnostics['rho'] = spectral_radius(tm.T_uu.value, iters=config.rho_iters)
    excess = mass_excess(soft.Y_hat)
    diagnostics['mass_excess'] = excess
    if excess > MASS_TOLERANCE:
        logger.info(f"Massa propagada acima de 1 em {excess:.3g} (linhas renormalizadas antes do log)")

    with timer.phase('forward'):
        return g_loss(soft.node, one_hot(batch.y[split.masked_idx], num_classes))


def _representation_term(z: Var, batch: Batch, config: TrainConfig) -> Var:
    kind = config.loss_kind
    if kind is LossKind.SCL:
        return scl(z, batch.y, config.tau)
    if kind is LossKind.TRIPLET:
        return triplet(z, batch.y, config.margin)
    return cosine_pair(z, batch.y)


def train_step(batch: Batch, params: EncoderParams, head: Optional[ClassifierHead], config: TrainConfig,
               tape: Optional[Tape] = None, num_classes: Optional[int] = None, split_seed: Any = 0,
               timer: Optional[PhaseTimer] = None) -> StepResult:
    """
    Um passo do algoritmo sobre um minibatch

    Args:
        batch: minibatch (B >= 4 para perdas de grafo)
        params: encoder
        head: cabeça linear (modo integrado) ou None (standalone)
        config: hiperparâmetros
        tape: tape vazio a usar (novo se None)
        num_classes: C (obrigatório sem cabeça)
        split_seed: semente do split γ, ex. [seed, epoch, batch]
        timer: acumulador de fases

    Returns:
        StepResult com a perda, gradientes por parâmetro e diagnósticos

    Raises:
        ValidationError/GraphError: batch sem split γ ou triplet válido
        SingularPropagationError: solve singular em modo standalone
    """
    tape = tape or Tape()
    timer = timer or PhaseTimer()
    integrated = config.mode == 'integrated'
    if integrated and head is None:
        raise ValidationError("modo integrado exige a cabeça de classificação")
    num_classes = head.num_classes if head is not None else num_classes
    if num_classes is None:
        raise ValidationError("num_classes é obrigatório sem cabeça de classificação")
    kind = config.loss_kind
    diagnostics: Dict[str, Any] = {'fallback': False}

    with timer.phase('forward'):
        z, handles = encode(tape, params, batch.x_raw)

    lg = None
    if config.uses_graph:
        try:
            lg = _graph_term(tape, z, batch, config, num_classes, split_seed, timer, diagnostics)
        except SingularPropagationError as e:
            if not integrated:
                raise
            diagnostics['fallback'] = True
            diagnostics['rho'] = e.rho
            logger.warning(f"Propagação singular, batch treinado só com CE: {e}")

    with timer.phase('forward'):
        lce = None
        if integrated:
            logits, head_handles = classify(tape, head, z)
            handles.update(head_handles)
            lce = cross_entropy(logits, batch.y)

        if kind.is_graph:
            if lg is None:
                value = composite(None, lce, 0.0)
            elif integrated:
                value = composite(lg, lce, config.lam)
            else:
                value = composite(lg, None, 1.0)
        elif kind is LossKind.CE:
            value = composite(None, lce, 0.0)
        else:
            rep = _representation_term(z, batch, config)
            value = weighted(rep, lce, config.effective_lambda_baseline, kind.value)

    with timer.phase('backward'):
        grads_by_var = tape.backward(value.total)
        grads = {name: grads_by_var[var] for name, var in handles.items()}

    return StepResult(loss=value, grads=grads, diagnostics=diagnostics)


def fit_linear_head(z_train: np.ndarray, y_train: Sequence[int], z_val: Optional[np.ndarray],
                    y_val: Optional[Sequence[int]], num_classes: int, eta: float = 1e-2,
                    epochs: int = 100, seed: int = 0, optimizer: str = 'adam') -> ClassifierHead:
    """
    Cabeça linear treinada com CE (batch completo) sobre embeddings congelados

    Returns:
        Snapshot da época com melhor acurácia de validação
    """
    z_train = np.asarray(z_train, dtype=np.float64)
    y_train = np.asarray(y_train, dtype=int)
    if not np.all(np.isfinite(z_train)):
        raise ValidationError("embeddings de treino contêm NaN/Inf")
    if z_val is None or y_val is None or len(y_val) == 0:
        z_val, y_val = z_train, y_train
    z_val = np.asarray(z_val, dtype=np.float64)
    y_val = np.asarray(y_val, dtype=int)

    head = init_head(z_train.shape[1], num_classes, seed=seed)
    state = OptimizerState(kind=optimizer, eta=eta)
    best_head, best_acc = head.copy(), accuracy(predict(head, z_val), y_val)

    for _ in range(epochs):
        tape = Tape()
        logits, handles = classify(tape, head, z_train)
        loss = cross_entropy(logits, y_train)
        grads_by_var = tape.backward(loss)
        grads = {name: grads_by_var[var] for name, var in handles.items()}
        updated = optimizer_step(state, named_parameters(head=head), grads)
        assign_parameters(updated, head=head)

        acc = accuracy(predict(head, z_val), y_val)
        if acc > best_acc:
            best_head, best_acc = head.copy(), acc
    return best_head


class GLossTrainer:
    """Orquestra épocas, parada antecipada, restauração e avaliação final"""

    def __init__(self, config: TrainConfig, run_logger: Optional[RunLogger] = None,
                 on_epoch_end: Optional[Callable[[int, 'GLossTrainer'], None]] = None):
        self.config = config.check()
        self.log = run_logger or RunLogger(f"{config.loss}-s{config.seed}")
        self.on_epoch_end = on_epoch_end
        self.params: Optional[EncoderParams] = None
        self.head: Optional[ClassifierHead] = None
        self.optimizer: Optional[OptimizerState] = None
        self.num_classes: Optional[int] = None
        self.test_accesses = 0

    @property
    def integrated(self) -> bool:
        return self.config.mode == 'integrated'

    def initialize(self, input_dim: int, num_classes: int):
        """Inicialização determinística pela semente da configuração"""
        cfg = self.config
        self.num_classes = num_classes
        self.params = init_encoder(input_dim, cfg.embedding_dim, cfg.architecture, cfg.hidden_dim,
                                   normalize=cfg.normalize_embeddings, seed=cfg.seed)
        self.head = init_head(cfg.embedding_dim, num_classes, seed=cfg.seed + 1) if self.integrated else None
        self.optimizer = OptimizerState(kind=cfg.optimizer, eta=cfg.eta)

    def _min_batch_size(self) -> int:
        if self.config.uses_graph:
            return GRAPH_MIN_BATCH
        return 2 if self.config.loss_kind.is_representation else 1

    def train_step(self, batch: Batch, split_seed: Any = 0, timer: Optional[PhaseTimer] = None) -> StepResult:
        """Passo com os parâmetros correntes, seguido da atualização"""
        timer = timer or PhaseTimer()
        step = train_step(batch, self.params, self.head, self.config, num_classes=self.num_classes,
                          split_seed=split_seed, timer=timer)
        with timer.phase('optimizer'):
            named = named_parameters(self.params, self.head)
            updated = optimizer_step(self.optimizer, {k: named[k] for k in step.grads}, step.grads)
            assign_parameters(updated, self.params, self.head)
        return step

    def _validate(self, val: Dataset) -> Tuple[Optional[float], Optional[float], float]:
        z = embed(self.params, val.features)
        silhouette = _safe_silhouette(z, val.labels)
        if not self.integrated:
            return None, None, silhouette
        metrics = evaluate(z, predict(self.head, z), val.labels, self.num_classes)
        return metrics.accuracy, metrics.macro_f1, silhouette

    def _run_epoch(self, epoch: int, train: Dataset, val: Dataset) -> EpochRecord:
        cfg = self.config
        timer = PhaseTimer()
        start = time.perf_counter()
        batches = minibatches(train, min(cfg.batch_size, train.n), seed=cfg.seed + epoch,
                              shuffle=cfg.shuffle, min_size=self._min_batch_size())

        losses, lgs, lces, rhos, excesses = [], [], [], [], []
        components: Dict[str, List[float]] = {}
        skipped = fallbacks = 0
        for b_idx, batch in enumerate(batches):
            try:
                step = self.train_step(batch, split_seed=[cfg.seed, epoch, b_idx], timer=timer)
            except SKIPPABLE_ERRORS as e:
                skipped += 1
                self.log.warning('train', f"Batch {b_idx} da época {epoch} ignorado: {e}")
                continue
            losses.append(step.loss.total.item())
            if step.loss.lg is not None:
                lgs.append(step.loss.lg)
            if step.loss.lce is not None:
                lces.append(step.loss.lce)
            for name, value in step.loss.components.items():
                components.setdefault(name, []).append(value)
            if step.diagnostics.get('rho') is not None:
                rhos.append(step.diagnostics['rho'])
            if 'mass_excess' in step.diagnostics:
                excesses.append(step.diagnostics['mass_excess'])
            if step.diagnostics.get('fallback'):
                fallbacks += 1
                self.log.warning('train', f"Batch {b_idx} da época {epoch}: fallback para CE (propagação singular)")

        if not losses:
            raise TrainingError(f"época {epoch}: todos os {len(batches)} batches foram ignorados "
                                f"(B={cfg.batch_size}, gamma={cfg.gamma}, n_treino={train.n})")

        val_acc, val_f1, val_sil = self._validate(val)
        wall = time.perf_counter() - start
        return EpochRecord(
            epoch=epoch,
            train_loss=float(np.mean(losses)),
            lg=float(np.mean(lgs)) if lgs else None,
            lce=float(np.mean(lces)) if lces else None,
            components={k: float(np.mean(v)) for k, v in components.items()},
            val_accuracy=val_acc,
            val_macro_f1=val_f1,
            val_macro_silhouette=val_sil,
            timings=timer.close(wall),
            epoch_time=wall,
            rho_mean=float(np.mean(rhos)) if rhos else None,
            rho_max=float(np.max(rhos)) if rhos else None,
            mass_excess_max=float(np.max(excesses)) if excesses else None,
            batches=len(losses),
            skipped_batches=skipped,
            fallback_batches=fallbacks,
        )

    def _train_epochs(self, train: Dataset, val: Dataset, report: TrainReport):
        cfg = self.config
        stopper = EarlyStopping(patience=cfg.patience)
        best = (self.params.copy(), self.head.copy() if self.head else None)
        monitor_name = 'val_macro_f1' if self.integrated else 'val_macro_silhouette'

        for epoch in range(1, cfg.max_epochs + 1):
            record = self._run_epoch(epoch, train, val)
            report.epochs.append(record)
            monitor = getattr(record, monitor_name)
            if stopper.step(monitor, epoch):
                best = (self.params.copy(), self.head.copy() if self.head else None)
            self.log.step_progress('epoch', f"Época {epoch}: perda={record.train_loss:.4f} {monitor_name}={monitor:.4f}",
                                   {'epoch': epoch, 'train_loss': record.train_loss, monitor_name: monitor})
            if self.on_epoch_end is not None:
                self.on_epoch_end(epoch, self)
            if stopper.should_stop:
                self.log.info('train', f"Parada antecipada na época {epoch} (paciência {cfg.patience})")
                break

        report.early_stop_epoch = len(report.epochs)
        report.best_epoch = stopper.best_epoch
        self.params, self.head = best
        self.log.info('train', f"Parâmetros restaurados da melhor época ({stopper.best_epoch})")

    def evaluate_test(self, test: Dataset) -> Metrics:
        """Métricas finais; o conjunto de teste é acessado uma única vez"""
        if self.test_accesses > 0:
            raise TestSetAccessError("conjunto de teste já avaliado nesta execução")
        self.test_accesses += 1
        z = embed(self.params, test.features)
        return evaluate(z, predict(self.head, z), test.labels, self.num_classes)

    def _new_report(self) -> TrainReport:
        return TrainReport(mode=self.config.mode, loss=self.config.loss, seed=self.config.seed,
                           config=self.config.to_dict())

    def train_integrated(self, train: Dataset, val: Dataset, test: Dataset) -> TrainReport:
        """Perda composta + CE, parada antecipada por F1 macro de validação"""
        if not self.integrated:
            raise ConfigError("train_integrated exige mode=integrated", 'mode')
        start = time.perf_counter()
        self.log.step_start('train', f"treino integrado loss={self.config.loss} lambda={self.config.lam}")
        self.initialize(train.input_dim, train.num_classes)
        report = self._new_report()
        self._train_epochs(train, val, report)

        report.test = self.evaluate_test(test)
        report.test_accesses = self.test_accesses
        report.total_time = time.perf_counter() - start
        self.log.step_complete('train', "treino integrado", report.test.to_dict())
        return report

    def train_standalone(self, train: Dataset, val: Dataset, test: Dataset) -> TrainReport:
        """Encoder só com a perda escolhida; depois cabeça linear sobre embeddings congelados"""
        if self.integrated:
            raise ConfigError("train_standalone exige mode=standalone", 'mode')
        cfg = self.config
        start = time.perf_counter()
        self.log.step_start('train', f"treino standalone loss={cfg.loss}")
        self.initialize(train.input_dim, train.num_classes)
        report = self._new_report()
        self._train_epochs(train, val, report)

        self.log.step_start('head', "cabeça linear sobre embeddings congelados")
        self.head = fit_linear_head(embed(self.params, train.features), train.labels,
                                    embed(self.params, val.features), val.labels, train.num_classes,
                                    eta=cfg.head_eta, epochs=cfg.head_epochs, seed=cfg.seed + 1,
                                    optimizer=cfg.optimizer)

        report.test = self.evaluate_test(test)
        report.test_accesses = self.test_accesses
        report.total_time = time.perf_counter() - start
        self.log.step_complete('train', "treino standalone", report.test.to_dict())
        return report

    def fit(self, train: Dataset, val: Dataset, test: Dataset) -> TrainReport:
        if self.integrated:
            return self.train_integrated(train, val, test)
        return self.train_standalone(train, val, test)

    def graph_snapshot(self, ds: Dataset, batch_index: int = 0) -> Dict[str, Any]:
        """
        Grafo de um batch designado (ordem das linhas) com os parâmetros correntes

        Returns:
            {'W', 'embeddings', 'labels', 'indices', 'sigma'}
        """
        if self.params is None:
            raise ValidationError("trainer não inicializado")
        batches = minibatches(ds, min(self.config.batch_size, ds.n), shuffle=False)
        if not 0 <= batch_index < len(batches):
            raise ValidationError(f"batch {batch_index} inexistente ({len(batches)} batches)")
        batch = batches[batch_index]
        tape = Tape()
        z, _ = encode(tape, self.params, batch.x_raw)
        graph = GraphBuilder(self.config.effective_sigma_mode, self.config.sigma,
                             self.config.sigma_multiplier).build(z)
        return {
            'W': graph.W.value.copy(),
            'embeddings': z.value.copy(),
            'labels': batch.y.copy(),
            'indices': batch.indices.copy(),
            'sigma': graph.sigma,
        }


def _safe_silhouette(z: np.ndarray, y: np.ndarray) -> float:
    try:
        return macro_silhouette(z, y)
    except ValidationError as e:
        logger.warning(f"Silhouette indisponível: {e}")
        return 0.0
