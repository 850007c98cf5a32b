"""
Métricas de avaliação: acurácia, F1 macro, silhouette macro e teste t pareado
"""

import logging
from dataclasses import asdict, dataclass
from typing import Dict, Sequence

import numpy as np
from scipy import stats
from scipy.spatial.distance import cdist
from sklearn.metrics import accuracy_score, f1_score, silhouette_samples

from gloss.exceptions import ValidationError

logger = logging.getLogger(__name__)

# limiares de significância -> marcação
SIGNIFICANCE_LEVELS = ((0.001, '****'), (0.01, '***'), (0.05, '**'))


@dataclass
class Metrics:
    """Métricas de um conjunto (validação ou teste)"""
    accuracy: float
    macro_f1: float
    macro_silhouette: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass
class TTestResult:
    """Resultado do teste t pareado bicaudal"""
    mean_diff: float
    t_stat: float
    p_value: float
    n: int

    @property
    def stars(self) -> str:
        return significance_stars(self.p_value)


def _pair(pred: Sequence[int], truth: Sequence[int]):
    pred = np.asarray(pred, dtype=int).ravel()
    truth = np.asarray(truth, dtype=int).ravel()
    if pred.size != truth.size:
        raise ValidationError(f"tamanhos diferentes: {pred.size} predições, {truth.size} rótulos")
    if pred.size < 1:
        raise ValidationError("são necessárias ao menos 1 predição")
    return pred, truth


def accuracy(pred: Sequence[int], truth: Sequence[int]) -> float:
    pred, truth = _pair(pred, truth)
    return float(accuracy_score(truth, pred))


def macro_f1(pred: Sequence[int], truth: Sequence[int], num_classes: int) -> float:
    """
    Média não ponderada do F1 por classe

    Classes ausentes em predição e verdade entram com F1 = 0.
    """
    pred, truth = _pair(pred, truth)
    if pred.max() >= num_classes or truth.max() >= num_classes or min(pred.min(), truth.min()) < 0:
        raise ValidationError(f"rótulos fora de [0, {num_classes})")
    return float(f1_score(truth, pred, labels=list(range(num_classes)), average='macro', zero_division=0))


def macro_silhouette(z: np.ndarray, y: Sequence[int]) -> float:
    """
    Silhouette macro: s(x) por ponto (distância euclidiana), média por
    classe e depois média simples entre as classes presentes

    Pontos de classes unitárias recebem s = 0.
    """
    z = np.asarray(z, dtype=np.float64)
    y = np.asarray(y, dtype=int).ravel()
    if z.ndim != 2 or z.shape[0] != y.size:
        raise ValidationError(f"embeddings {z.shape} e {y.size} rótulos")
    classes = np.unique(y)
    if classes.size < 2:
        raise ValidationError("silhouette exige ao menos 2 classes presentes")

    # silhouette_samples exige 2 <= classes <= n-1; com todas as classes unitárias o resultado é 0
    if classes.size >= y.size:
        return 0.0
    distances = cdist(z, z, metric='euclidean')
    s = silhouette_samples(distances, y, metric='precomputed')
    per_class = [float(np.mean(s[y == c])) for c in classes]
    return float(np.mean(per_class))


def evaluate(z: np.ndarray, pred: Sequence[int], truth: Sequence[int], num_classes: int) -> Metrics:
    """Calcula as três métricas de um conjunto"""
    truth = np.asarray(truth, dtype=int)
    try:
        silhouette = macro_silhouette(z, truth)
    except ValidationError as e:
        logger.warning(f"Silhouette indisponível: {e}")
        silhouette = 0.0
    return Metrics(
        accuracy=accuracy(pred, truth),
        macro_f1=macro_f1(pred, truth, num_classes),
        macro_silhouette=silhouette,
    )


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """
    Teste t pareado bicaudal sobre as diferenças a - b (n - 1 graus de liberdade)

    Diferenças todas nulas -> t = 0, p = 1. Variância nula com média não
    nula -> p = 0.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise ValidationError(f"vetores de tamanhos diferentes: {a.size} e {b.size}")
    n = a.size
    if n < 2:
        raise ValidationError(f"teste t pareado exige n >= 2, recebeu {n}")

    diffs = a - b
    mean_diff = float(np.mean(diffs))
    sd = float(np.std(diffs, ddof=1))
    if sd == 0.0:
        if mean_diff == 0.0:
            return TTestResult(mean_diff=0.0, t_stat=0.0, p_value=1.0, n=n)
        return TTestResult(mean_diff=mean_diff, t_stat=float(np.sign(mean_diff) * np.inf), p_value=0.0, n=n)

    t_stat = mean_diff / (sd / np.sqrt(n))
    p_value = float(2.0 * stats.t.sf(abs(t_stat), df=n - 1))
    return TTestResult(mean_diff=mean_diff, t_stat=float(t_stat), p_value=min(p_value, 1.0), n=n)


def significance_stars(p_value: float) -> str:
    for threshold, mark in SIGNIFICANCE_LEVELS:
        if p_value < threshold:
            return mark
    return ''
