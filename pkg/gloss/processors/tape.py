"""
Diferenciação reversa mínima sobre matrizes densas

Forward ansioso: cada operação gravada calcula seu valor na hora e guarda o
contexto necessário para o backward. Tudo em float64, sem broadcasting além de
escalar (1x1) contra matriz.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import get_lapack_funcs, lu_factor, lu_solve

from gloss.exceptions import ShapeError, SingularPropagationError, TapeError

LOG_EPS = 1e-12
RCOND_MIN = 1e-12

LEAF_OPS = ('variable', 'constant')


@dataclass
class Node:
    """Registro de uma operação no tape"""
    value: np.ndarray
    op: str
    parents: Tuple[int, ...]
    ctx: Dict[str, Any] = field(default_factory=dict)
    name: Optional[str] = None


@dataclass(frozen=True)
class Var:
    """Handle para um nó do tape"""
    tape: 'Tape' = field(repr=False)
    index: int

    @property
    def node(self) -> Node:
        return self.tape.nodes[self.index]

    @property
    def value(self) -> np.ndarray:
        return self.node.value

    @property
    def shape(self) -> Tuple[int, int]:
        return self.node.value.shape

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ShapeError(f"item() exige nó 1x1, recebeu {self.shape}")
        return float(self.value[0, 0])


class OpRule(NamedTuple):
    forward: Callable[..., Tuple[np.ndarray, Dict[str, Any]]]
    backward: Callable[..., Tuple[Optional[np.ndarray], ...]]


OPS: Dict[str, OpRule] = {}


def defop(name: str, forward, backward):
    OPS[name] = OpRule(forward, backward)


def as_matrix(value: Any) -> np.ndarray:
    """Converte para matriz float64 2-D (escalar -> 1x1, vetor -> coluna)"""
    arr = np.array(value, dtype=np.float64)
    if arr.ndim == 0:
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        return arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ShapeError(f"esperada matriz 2-D, recebeu ndim={arr.ndim}")
    return arr


def _is_scalar(shape: Tuple[int, ...]) -> bool:
    return shape == (1, 1)


def _check_same(op: str, a: np.ndarray, b: np.ndarray, allow_scalar: bool = True):
    if a.shape == b.shape:
        return
    if allow_scalar and (_is_scalar(a.shape) or _is_scalar(b.shape)):
        return
    raise ShapeError(f"{op}: formas incompatíveis {a.shape} e {b.shape}")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    if _is_scalar(shape):
        return np.array([[grad.sum()]])
    raise ShapeError(f"gradiente {grad.shape} não reduz para {shape}")


# --- regras elementares -------------------------------------------------------

def _matmul_fwd(a, b):
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: formas incompatíveis {a.shape} e {b.shape}")
    return a @ b, {}


def _matmul_bwd(g, ctx, out, a, b):
    return g @ b.T, a.T @ g


def _add_fwd(a, b):
    _check_same('add', a, b)
    return a + b, {}


def _add_bwd(g, ctx, out, a, b):
    return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)


def _sub_fwd(a, b):
    _check_same('subtract', a, b)
    return a - b, {}


def _sub_bwd(g, ctx, out, a, b):
    return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)


def _mul_fwd(a, b):
    _check_same('multiply', a, b)
    return a * b, {}


def _mul_bwd(g, ctx, out, a, b):
    return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)


def _scale_fwd(a, factor: float = 1.0):
    return a * float(factor), {'factor': float(factor)}


def _scale_bwd(g, ctx, out, a):
    return (g * ctx['factor'],)


def _exp_fwd(a):
    return np.exp(a), {}


def _exp_bwd(g, ctx, out, a):
    return (g * out,)


def _neg_fwd(a):
    return -a, {}


def _neg_bwd(g, ctx, out, a):
    return (-g,)


def _div_fwd(a, b):
    _check_same('elementwise_divide', a, b)
    if np.any(b == 0):
        raise ShapeError("elementwise_divide: divisor contém zeros")
    return a / b, {}


def _div_bwd(g, ctx, out, a, b):
    return _unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)


def _sqrt_fwd(a):
    if np.any(a < 0):
        raise ShapeError("sqrt: entrada negativa")
    return np.sqrt(a), {}


def _sqrt_bwd(g, ctx, out, a):
    return (0.5 * g / out,)


def _transpose_fwd(a):
    return a.T.copy(), {}


def _transpose_bwd(g, ctx, out, a):
    return (g.T,)


def _sqdist_fwd(x):
    diff = x[:, None, :] - x[None, :, :]
    return np.sum(diff * diff, axis=2), {}


def _sqdist_bwd(g, ctx, out, x):
    s = g + g.T
    return (2.0 * (s.sum(axis=1, keepdims=True) * x - s @ x),)


def _row_norm_fwd(a):
    s = a.sum(axis=1, keepdims=True)
    if np.any(s == 0):
        raise ShapeError("row_normalize: linha com soma nula")
    return a / s, {'sums': s}


def _row_norm_bwd(g, ctx, out, a):
    return ((g - (g * out).sum(axis=1, keepdims=True)) / ctx['sums'],)


def _col_norm_fwd(a):
    s = a.sum(axis=0, keepdims=True)
    if np.any(s == 0):
        raise ShapeError("column_normalize: coluna com soma nula")
    return a / s, {'sums': s}


def _col_norm_bwd(g, ctx, out, a):
    return ((g - (g * out).sum(axis=0, keepdims=True)) / ctx['sums'],)


def _solve_fwd(a, b):
    n = a.shape[0]
    if a.shape != (n, n) or b.shape[0] != n:
        raise ShapeError(f"linear_solve: formas incompatíveis {a.shape} e {b.shape}")
    lu, piv = lu_factor(a, check_finite=True)
    gecon, = get_lapack_funcs(('gecon',), (lu,))
    rcond, info = gecon(lu, np.linalg.norm(a, 1), norm='1')
    if info != 0 or not np.isfinite(rcond) or rcond < RCOND_MIN or np.any(np.diag(lu) == 0):
        raise SingularPropagationError("linear_solve: matriz numericamente singular", rcond=float(rcond))
    x = lu_solve((lu, piv), b)
    return x, {'lu': (lu, piv), 'rcond': float(rcond)}


def _solve_bwd(g, ctx, out, a, b):
    # A x = b  =>  A^T u = g, b_bar = u, A_bar = -u x^T
    u = lu_solve(ctx['lu'], g, trans=1)
    return -u @ out.T, u


def _log_fwd(a, eps: float = LOG_EPS):
    return np.log(np.maximum(a, eps)), {'eps': eps}


def _log_bwd(g, ctx, out, a):
    mask = a > ctx['eps']
    safe = np.where(mask, a, 1.0)
    return (np.where(mask, g / safe, 0.0),)


def _log_softmax_fwd(a):
    shifted = a - a.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    return shifted - lse, {}


def _log_softmax_bwd(g, ctx, out, a):
    return (g - np.exp(out) * g.sum(axis=1, keepdims=True),)


def _masked_select_fwd(a, mask=None, rows=None, cols=None):
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != a.shape:
            raise ShapeError(f"masked_select: máscara {mask.shape} para matriz {a.shape}")
        return a[mask].reshape(-1, 1), {'mask': mask}
    r = np.arange(a.shape[0]) if rows is None else np.asarray(rows, dtype=int)
    c = np.arange(a.shape[1]) if cols is None else np.asarray(cols, dtype=int)
    if r.size and (r.min() < 0 or r.max() >= a.shape[0]):
        raise ShapeError(f"masked_select: linhas fora de {a.shape}")
    if c.size and (c.min() < 0 or c.max() >= a.shape[1]):
        raise ShapeError(f"masked_select: colunas fora de {a.shape}")
    return a[np.ix_(r, c)], {'rows': r, 'cols': c}


def _masked_select_bwd(g, ctx, out, a):
    grad = np.zeros_like(a)
    if 'mask' in ctx:
        grad[ctx['mask']] = g.ravel()
    else:
        np.add.at(grad, np.ix_(ctx['rows'], ctx['cols']), g)
    return (grad,)


def _gather_fwd(a, rows, cols):
    r = np.asarray(rows, dtype=int)
    c = np.asarray(cols, dtype=int)
    if r.shape != c.shape:
        raise ShapeError(f"gather: índices {r.shape} e {c.shape}")
    return a[r, c].reshape(-1, 1), {'rows': r, 'cols': c}


def _gather_bwd(g, ctx, out, a):
    grad = np.zeros_like(a)
    np.add.at(grad, (ctx['rows'], ctx['cols']), g.ravel())
    return (grad,)


def _sum_fwd(a):
    return np.array([[a.sum()]]), {}


def _sum_bwd(g, ctx, out, a):
    return (np.full(a.shape, g[0, 0]),)


def _mean_fwd(a):
    if a.size == 0:
        raise ShapeError("reduce_mean: matriz vazia")
    return np.array([[a.mean()]]), {}


def _mean_bwd(g, ctx, out, a):
    return (np.full(a.shape, g[0, 0] / a.size),)


def _relu_fwd(a):
    return np.maximum(a, 0.0), {}


def _relu_bwd(g, ctx, out, a):
    return (g * (a > 0),)


def _l2_fwd(a):
    norms = np.linalg.norm(a, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ShapeError("l2_row_normalize: linha de norma zero")
    return a / norms, {'norms': norms}


def _l2_bwd(g, ctx, out, a):
    return ((g - out * (g * out).sum(axis=1, keepdims=True)) / ctx['norms'],)


defop('matmul', _matmul_fwd, _matmul_bwd)
defop('add', _add_fwd, _add_bwd)
defop('subtract', _sub_fwd, _sub_bwd)
defop('multiply', _mul_fwd, _mul_bwd)
defop('scale', _scale_fwd, _scale_bwd)
defop('elementwise_exp', _exp_fwd, _exp_bwd)
defop('elementwise_negate', _neg_fwd, _neg_bwd)
defop('elementwise_divide', _div_fwd, _div_bwd)
defop('sqrt', _sqrt_fwd, _sqrt_bwd)
defop('transpose', _transpose_fwd, _transpose_bwd)
defop('pairwise_sqdist', _sqdist_fwd, _sqdist_bwd)
defop('row_normalize', _row_norm_fwd, _row_norm_bwd)
defop('column_normalize', _col_norm_fwd, _col_norm_bwd)
defop('linear_solve', _solve_fwd, _solve_bwd)
defop('log_clamped', _log_fwd, _log_bwd)
defop('log_softmax', _log_softmax_fwd, _log_softmax_bwd)
defop('masked_select', _masked_select_fwd, _masked_select_bwd)
defop('gather', _gather_fwd, _gather_bwd)
defop('reduce_sum', _sum_fwd, _sum_bwd)
defop('reduce_mean', _mean_fwd, _mean_bwd)
defop('relu', _relu_fwd, _relu_bwd)
defop('l2_row_normalize', _l2_fwd, _l2_bwd)


class Tape:
    """Registro append-only de operações; backward a partir de uma raiz escalar"""

    def __init__(self):
        self.nodes: List[Node] = []
        self.adjoints: Optional[List[Optional[np.ndarray]]] = None

    def __len__(self) -> int:
        return len(self.nodes)

    def variable(self, value: Any, name: Optional[str] = None) -> Var:
        """Folha diferenciável (entra no mapa de gradientes)"""
        return self._append(Node(as_matrix(value), 'variable', (), name=name))

    def constant(self, value: Any) -> Var:
        return self._append(Node(as_matrix(value), 'constant', ()))

    def lift(self, value: Any) -> Var:
        """Aceita Var deste tape ou array (vira constante)"""
        if isinstance(value, Var):
            if value.tape is not self:
                raise TapeError("Var pertence a outro tape")
            return value
        return self.constant(value)

    def record(self, op: str, *parents: Any, **params: Any) -> Var:
        """
        Grava uma operação e calcula seu valor imediatamente

        Args:
            op: nome da operação (ver OPS)
            parents: Vars deste tape ou arrays (tratados como constantes)
            params: parâmetros não diferenciáveis da operação
        """
        rule = OPS.get(op)
        if rule is None:
            raise TapeError(f"operação desconhecida: {op}")
        handles = [self.lift(p) for p in parents]
        values = [h.value for h in handles]
        try:
            value, ctx = rule.forward(*values, **params)
        except ShapeError as e:
            if str(e).startswith(op):
                raise
            raise ShapeError(f"{op}: {e}") from e
        self.adjoints = None
        return self._append(Node(value, op, tuple(h.index for h in handles), ctx))

    def _append(self, node: Node) -> Var:
        self.nodes.append(node)
        return Var(self, len(self.nodes) - 1)

    def backward(self, root: Var) -> Dict[Var, np.ndarray]:
        """
        Propaga adjuntos a partir de uma raiz 1x1

        Returns:
            Gradientes de todas as folhas 'variable' (zeros quando não alcançadas)
        """
        if not self.nodes:
            raise TapeError("backward chamado antes de qualquer forward")
        root = self.lift(root)
        if root.shape != (1, 1):
            raise TapeError(f"raiz precisa ser escalar 1x1, recebeu {root.shape}")

        adjoints: List[Optional[np.ndarray]] = [None] * len(self.nodes)
        adjoints[root.index] = np.ones((1, 1))

        for i in range(root.index, -1, -1):
            g = adjoints[i]
            node = self.nodes[i]
            if g is None or node.op in LEAF_OPS:
                continue
            parent_values = [self.nodes[p].value for p in node.parents]
            grads = OPS[node.op].backward(g, node.ctx, node.value, *parent_values)
            for p, pg in zip(node.parents, grads):
                if pg is None:
                    continue
                adjoints[p] = pg if adjoints[p] is None else adjoints[p] + pg

        self.adjoints = adjoints
        return {
            Var(self, i): (adjoints[i] if adjoints[i] is not None else np.zeros_like(n.value))
            for i, n in enumerate(self.nodes) if n.op == 'variable'
        }

    def adjoint(self, var: Var) -> Optional[np.ndarray]:
        if self.adjoints is None:
            raise TapeError("nenhum backward executado")
        return self.adjoints[var.index]

    # atalhos usados pelos módulos de grafo, perdas e encoder
    def matmul(self, a, b): return self.record('matmul', a, b)
    def add(self, a, b): return self.record('add', a, b)
    def subtract(self, a, b): return self.record('subtract', a, b)
    def multiply(self, a, b): return self.record('multiply', a, b)
    def scale(self, a, factor: float): return self.record('scale', a, factor=factor)
    def exp(self, a): return self.record('elementwise_exp', a)
    def negate(self, a): return self.record('elementwise_negate', a)
    def divide(self, a, b): return self.record('elementwise_divide', a, b)
    def sqrt(self, a): return self.record('sqrt', a)
    def transpose(self, a): return self.record('transpose', a)
    def pairwise_sqdist(self, x): return self.record('pairwise_sqdist', x)
    def row_normalize(self, a): return self.record('row_normalize', a)
    def column_normalize(self, a): return self.record('column_normalize', a)
    def linear_solve(self, a, b): return self.record('linear_solve', a, b)
    def log_clamped(self, a, eps: float = LOG_EPS): return self.record('log_clamped', a, eps=eps)
    def log_softmax(self, a): return self.record('log_softmax', a)
    def relu(self, a): return self.record('relu', a)
    def l2_row_normalize(self, a): return self.record('l2_row_normalize', a)
    def reduce_sum(self, a): return self.record('reduce_sum', a)
    def reduce_mean(self, a): return self.record('reduce_mean', a)

    def masked_select(self, a, mask=None, rows: Optional[Sequence[int]] = None,
                      cols: Optional[Sequence[int]] = None):
        return self.record('masked_select', a, mask=mask, rows=rows, cols=cols)

    def gather(self, a, rows: Sequence[int], cols: Sequence[int]):
        return self.record('gather', a, rows=rows, cols=cols)


def as_var(value: Any, tape: Optional[Tape] = None) -> Var:
    """Var existente ou constante em um tape (novo se não informado)"""
    if isinstance(value, Var):
        return value
    return (tape or Tape()).constant(value)
