"""
Leitura e escrita de datasets de vetores rotulados, splits estratificados e
minibatches determinísticos
"""

import csv
import logging
import re
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from gloss.exceptions import DatasetParseError, ValidationError

logger = logging.getLogger(__name__)

BINARY_MAGIC = b'GLDS1'
FORMATS = ('csv', 'binary')
SPLIT_NAMES = ('train', 'val', 'test')
HEADER_PATTERN = re.compile(r'^#\s*(.*)$')


@dataclass
class Dataset:
    """Vetores de características com rótulos inteiros 0..C-1"""
    features: np.ndarray                 # n x d_in
    labels: np.ndarray                   # n
    num_classes: int
    ids: Optional[List[str]] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.validate()

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def validate(self):
        if self.features.ndim != 2 or self.features.shape[0] < 1 or self.features.shape[1] < 1:
            raise ValidationError(f"features precisa ser n x d com n, d >= 1, recebeu {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ValidationError(f"{self.labels.shape} rótulos para {self.features.shape[0]} linhas")
        if self.num_classes < 2:
            raise ValidationError(f"são necessárias ao menos 2 classes, recebeu {self.num_classes}")
        if not np.all(np.isfinite(self.features)):
            raise ValidationError("features contêm NaN/Inf")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValidationError(f"rótulos fora de [0, {self.num_classes})")
        if self.ids is not None and len(self.ids) != self.n:
            raise ValidationError(f"{len(self.ids)} ids para {self.n} linhas")

    def take(self, indices) -> 'Dataset':
        indices = np.asarray(indices, dtype=int)
        ids = [self.ids[i] for i in indices] if self.ids is not None else None
        return Dataset(self.features[indices], self.labels[indices], self.num_classes, ids)


@dataclass
class Batch:
    """Minibatch: índices na fonte, vetores e rótulos"""
    indices: np.ndarray
    x_raw: np.ndarray
    y: np.ndarray

    @property
    def size(self) -> int:
        return int(self.indices.size)


def detect_format(path: Union[str, Path]) -> str:
    return 'csv' if Path(path).suffix.lower() in ('.csv', '.txt') else 'binary'


def _parse_header(text: str, line: int) -> dict:
    header = {}
    for token in text.split():
        key, sep, value = token.partition('=')
        if not sep or key not in ('n', 'd', 'c'):
            raise DatasetParseError(f"cabeçalho inválido: '{token}'", line)
        try:
            header[key] = int(value)
        except ValueError:
            raise DatasetParseError(f"valor não inteiro no cabeçalho: '{token}'", line)
    return header


def _is_number(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def _columns_without_header(cells: List[str]) -> Tuple[int, bool]:
    """
    (d, tem_id) a partir da primeira linha de dados, valendo para o arquivo todo

    Sem `# d=`, a última coluna é o rótulo; só uma última coluna não numérica
    conta como id. Ids numéricos exigem o cabeçalho.
    """
    if _is_number(cells[-1]):
        return len(cells) - 1, False
    return len(cells) - 2, True


def _load_csv(path: Path) -> Dataset:
    header = {}
    layout: Optional[Tuple[int, bool]] = None
    rows: List[Tuple[List[float], int, Optional[str]]] = []
    with open(path, 'r', encoding='utf-8', newline='') as f:
        for line_no, record in enumerate(csv.reader(f), start=1):
            if not record or all(not cell.strip() for cell in record):
                continue
            first = record[0].strip()
            match = HEADER_PATTERN.match(first)
            if match:
                if rows:
                    raise DatasetParseError("cabeçalho depois dos dados", line_no)
                header = _parse_header(' '.join([match.group(1)] + record[1:]), line_no)
                continue

            cells = [c.strip() for c in record]
            if 'd' in header:
                d = header['d']
                if len(cells) not in (d + 1, d + 2):
                    raise DatasetParseError(f"esperadas {d + 1} ou {d + 2} colunas, recebeu {len(cells)}", line_no)
            else:
                if layout is None:
                    layout = _columns_without_header(cells)
                d, with_id = layout
                if len(cells) != d + 1 + with_id:
                    raise DatasetParseError(f"esperadas {d + 1 + with_id} colunas como na primeira linha, "
                                            f"recebeu {len(cells)}", line_no)
            if d < 1:
                raise DatasetParseError("linha sem colunas de características", line_no)
            row_id = cells[d + 1] if len(cells) == d + 2 else None
            try:
                features = [float(c) for c in cells[:d]]
                label = int(cells[d])
            except ValueError as e:
                raise DatasetParseError(f"valor inválido: {e}", line_no)
            if not np.all(np.isfinite(features)):
                raise ValidationError(f"linha {line_no}: característica NaN/Inf")
            if label < 0:
                raise ValidationError(f"linha {line_no}: rótulo negativo {label}")
            if rows and len(features) != len(rows[0][0]):
                raise DatasetParseError(f"linha com {len(features)} características, esperado {len(rows[0][0])}", line_no)
            if 'c' in header and label >= header['c']:
                raise ValidationError(f"linha {line_no}: rótulo {label} >= C={header['c']}")
            rows.append((features, label, row_id))

    if not rows:
        raise DatasetParseError("arquivo sem linhas de dados", 1)
    if 'n' in header and header['n'] != len(rows):
        raise DatasetParseError(f"cabeçalho declara n={header['n']}, arquivo tem {len(rows)} linhas")

    features = np.array([r[0] for r in rows], dtype=np.float64)
    labels = np.array([r[1] for r in rows], dtype=np.int64)
    num_classes = header.get('c', int(labels.max()) + 1)
    has_ids = any(r[2] is not None for r in rows)
    ids = [r[2] or '' for r in rows] if has_ids else None
    return Dataset(features, labels, num_classes, ids)


def _load_binary(path: Path) -> Dataset:
    data = path.read_bytes()
    if not data.startswith(BINARY_MAGIC):
        raise DatasetParseError("arquivo binário sem assinatura GLDS1")
    offset = len(BINARY_MAGIC)
    if len(data) < offset + 24:
        raise DatasetParseError("cabeçalho binário truncado")
    n, d, c = struct.unpack_from('<QQQ', data, offset)
    offset += 24
    expected = offset + n * d * 8 + n * 4
    if len(data) != expected:
        raise DatasetParseError(f"tamanho inconsistente: esperado {expected} bytes, recebeu {len(data)}")
    features = np.frombuffer(data, dtype='<f8', count=n * d, offset=offset).reshape(n, d).astype(np.float64)
    offset += n * d * 8
    labels = np.frombuffer(data, dtype='<u4', count=n, offset=offset).astype(np.int64)
    if n and labels.max() >= c:
        raise ValidationError(f"rótulo {int(labels.max())} >= C={c}")
    return Dataset(features, labels, int(c))


def load_dataset(path: Union[str, Path], format: Optional[str] = None) -> Dataset:
    """
    Carrega um dataset em CSV ou binário GLDS1

    Args:
        path: caminho do arquivo
        format: 'csv' | 'binary' (inferido pela extensão se None)
    """
    path = Path(path)
    format = format or detect_format(path)
    if format not in FORMATS:
        raise ValidationError(f"formato desconhecido: {format}")
    if not path.exists():
        raise FileNotFoundError(f"dataset não encontrado: {path}")
    if format == 'csv':
        return _load_csv(path)
    return _load_binary(path)


def save_dataset(ds: Dataset, path: Union[str, Path], format: Optional[str] = None):
    path = Path(path)
    format = format or detect_format(path)
    if format == 'csv':
        with open(path, 'w', encoding='utf-8', newline='') as f:
            f.write(f"# n={ds.n} d={ds.input_dim} c={ds.num_classes}\n")
            writer = csv.writer(f)
            for i in range(ds.n):
                row = [repr(float(v)) for v in ds.features[i]] + [int(ds.labels[i])]
                if ds.ids is not None:
                    row.append(ds.ids[i])
                writer.writerow(row)
        return
    with open(path, 'wb') as f:
        f.write(BINARY_MAGIC)
        f.write(struct.pack('<QQQ', ds.n, ds.input_dim, ds.num_classes))
        f.write(np.ascontiguousarray(ds.features, dtype='<f8').tobytes())
        f.write(np.ascontiguousarray(ds.labels, dtype='<u4').tobytes())


def split(ds: Dataset, train_frac: float, val_frac: float, seed: int = 0) -> Tuple[Dataset, Dataset, Dataset]:
    """
    Split estratificado treino/validação/teste

    Classes com menos linhas que o número de partes vão inteiras para o treino.
    """
    if train_frac <= 0 or val_frac <= 0 or train_frac + val_frac >= 1:
        raise ValidationError(f"frações inválidas: treino={train_frac}, validação={val_frac}")
    rng = np.random.default_rng(seed)
    parts: Tuple[List[int], List[int], List[int]] = ([], [], [])
    for c in range(ds.num_classes):
        members = np.flatnonzero(ds.labels == c)
        if members.size == 0:
            continue
        members = rng.permutation(members)
        if members.size < 3:
            warnings.warn(f"classe {c} tem {members.size} linhas; atribuída apenas ao treino", stacklevel=2)
            parts[0].extend(members.tolist())
            continue
        n_train = max(1, int(np.floor(train_frac * members.size + 0.5)))
        n_val = max(1, int(np.floor(val_frac * members.size + 0.5)))
        n_train = min(n_train, members.size - 2)
        n_val = min(n_val, members.size - n_train - 1)
        parts[0].extend(members[:n_train].tolist())
        parts[1].extend(members[n_train:n_train + n_val].tolist())
        parts[2].extend(members[n_train + n_val:].tolist())
    for name, part in zip(SPLIT_NAMES, parts):
        if not part:
            raise ValidationError(f"split '{name}' ficou vazio: toda classe tem menos de 3 linhas "
                                  f"(contagens {np.bincount(ds.labels, minlength=ds.num_classes).tolist()})")
    return tuple(ds.take(np.sort(np.asarray(p, dtype=int))) for p in parts)


def minibatches(ds: Dataset, batch_size: int, seed: int = 0, shuffle: bool = True,
                min_size: int = 1) -> List[Batch]:
    """
    Sequência de minibatches cobrindo cada índice uma vez

    Args:
        min_size: último batch curto é descartado se menor que isso
    """
    if not 1 <= batch_size <= ds.n:
        raise ValidationError(f"batch_size precisa estar em [1, {ds.n}], recebeu {batch_size}")
    order = np.random.default_rng(seed).permutation(ds.n) if shuffle else np.arange(ds.n)
    batches = []
    for start in range(0, ds.n, batch_size):
        idx = order[start:start + batch_size]
        if idx.size < min_size:
            logger.debug("Batch final com %d itens descartado (mínimo %d)", idx.size, min_size)
            continue
        batches.append(Batch(indices=idx, x_raw=ds.features[idx], y=ds.labels[idx]))
    return batches


def make_blobs(n: int, d: int, num_classes: int, cluster_sep: float, seed: int = 0) -> Dataset:
    """
    Clusters gaussianos isotrópicos (desvio 1) com centros a distância
    cluster_sep entre si (vértices de um simplex regular)
    """
    if n < num_classes:
        raise ValidationError(f"n={n} menor que C={num_classes}")
    if d < num_classes:
        raise ValidationError(f"d={d} precisa ser >= C={num_classes} para centros equidistantes")
    if cluster_sep < 0:
        raise ValidationError(f"cluster_sep precisa ser >= 0, recebeu {cluster_sep}")
    rng = np.random.default_rng(seed)
    centers = np.zeros((num_classes, d))
    centers[np.arange(num_classes), np.arange(num_classes)] = cluster_sep / np.sqrt(2.0)

    counts = np.full(num_classes, n // num_classes)
    counts[:n % num_classes] += 1
    labels = np.repeat(np.arange(num_classes), counts)
    features = centers[labels] + rng.standard_normal((n, d))
    order = rng.permutation(n)
    return Dataset(features[order], labels[order], num_classes)
