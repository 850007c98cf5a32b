import numpy as np
import pytest

from gloss.exceptions import ShapeError, SingularPropagationError, TapeError
from gloss.processors.tape import OPS, Tape, as_matrix
from gloss.validators.gradcheck import gradient_check


def _check(program, x, tol=1e-6):
    report = gradient_check(program, x, eps=1e-6, tol=tol)
    assert report.passed, report.to_dict()


class TestForward:
    def test_as_matrix_shapes(self):
        assert as_matrix(3.0).shape == (1, 1)
        assert as_matrix([1.0, 2.0]).shape == (2, 1)
        with pytest.raises(ShapeError):
            as_matrix(np.zeros((2, 2, 2)))

    def test_values_are_eager(self):
        tape = Tape()
        a = tape.variable([[1.0, 2.0], [3.0, 4.0]])
        b = tape.matmul(a, tape.transpose(a))
        np.testing.assert_allclose(b.value, [[5.0, 11.0], [11.0, 25.0]])
        assert len(tape) == 3

    def test_shape_mismatch(self):
        tape = Tape()
        with pytest.raises(ShapeError, match='matmul'):
            tape.matmul(np.ones((2, 3)), np.ones((2, 3)))
        with pytest.raises(ShapeError):
            tape.add(np.ones((2, 3)), np.ones((3, 2)))

    def test_scalar_broadcast_only(self):
        tape = Tape()
        out = tape.add(np.ones((2, 3)), np.array([[2.0]]))
        np.testing.assert_allclose(out.value, 3.0)

    def test_unknown_op(self):
        with pytest.raises(TapeError):
            Tape().record('nope', np.ones((1, 1)))

    def test_registry_covers_ops(self):
        for name in ('matmul', 'add', 'subtract', 'multiply', 'scale', 'elementwise_exp', 'elementwise_negate',
                     'elementwise_divide', 'sqrt', 'transpose', 'pairwise_sqdist', 'row_normalize',
                     'column_normalize', 'linear_solve', 'log_clamped', 'masked_select', 'reduce_sum',
                     'reduce_mean'):
            assert name in OPS

    def test_log_clamped_floor(self):
        tape = Tape()
        out = tape.log_clamped(np.array([[0.0, 1.0]]))
        assert out.value[0, 0] == pytest.approx(np.log(1e-12))
        assert out.value[0, 1] == 0.0


class TestBackward:
    def test_root_must_be_scalar(self):
        tape = Tape()
        x = tape.variable(np.ones((2, 2)))
        with pytest.raises(TapeError):
            tape.backward(x)

    def test_backward_without_forward(self):
        with pytest.raises(TapeError):
            Tape().backward(np.ones((1, 1)))

    def test_unreached_variable_gets_zeros(self):
        tape = Tape()
        x = tape.variable(np.ones((2, 2)))
        unused = tape.variable(np.ones((3, 1)))
        grads = tape.backward(tape.reduce_sum(x))
        np.testing.assert_array_equal(grads[unused], np.zeros((3, 1)))
        np.testing.assert_array_equal(grads[x], np.ones((2, 2)))

    def test_fan_out_accumulates(self):
        tape = Tape()
        x = tape.variable([[3.0]])
        y = tape.multiply(x, x)
        grads = tape.backward(tape.add(y, x))
        assert grads[x][0, 0] == pytest.approx(7.0)

    def test_constants_have_no_gradient_entry(self):
        tape = Tape()
        c = tape.constant(np.ones((2, 2)))
        x = tape.variable(np.ones((2, 2)))
        grads = tape.backward(tape.reduce_sum(tape.multiply(c, x)))
        assert c not in grads
        assert tape.adjoint(c) is not None


class TestGradients:
    """Cada operação contra diferenças centrais"""

    def test_matmul_and_transpose(self, rng):
        B = rng.standard_normal((3, 2))
        _check(lambda t, x: t.reduce_sum(t.matmul(t.transpose(x), B.T @ B)), rng.standard_normal((2, 4)))

    def test_elementwise(self, rng):
        c = rng.random((3, 3)) + 0.5

        def program(t, x):
            e = t.exp(t.scale(x, 0.5))
            q = t.divide(t.multiply(e, t.sqrt(c)), t.add(t.exp(x), np.array([[1.0]])))
            return t.reduce_mean(t.subtract(q, t.negate(e)))
        _check(program, rng.standard_normal((3, 3)))

    def test_pairwise_sqdist(self, rng):
        w = rng.random((4, 4))
        _check(lambda t, x: t.reduce_sum(t.multiply(t.pairwise_sqdist(x), w)), rng.standard_normal((4, 3)))

    def test_row_and_column_normalize(self, rng):
        w = rng.standard_normal((3, 4))
        _check(lambda t, x: t.reduce_sum(t.multiply(t.row_normalize(x), w)), rng.random((3, 4)) + 0.2)
        _check(lambda t, x: t.reduce_sum(t.multiply(t.column_normalize(x), w)), rng.random((3, 4)) + 0.2)

    def test_linear_solve_matrix_adjoint(self, rng):
        b = rng.standard_normal((4, 2))
        w = rng.standard_normal((4, 2))
        a0 = rng.standard_normal((4, 4)) + 4.0 * np.eye(4)
        _check(lambda t, a: t.reduce_sum(t.multiply(t.linear_solve(a, b), w)), a0)

    def test_linear_solve_rhs_adjoint(self, rng):
        a = rng.standard_normal((3, 3)) + 3.0 * np.eye(3)
        w = rng.standard_normal((3, 2))
        _check(lambda t, b: t.reduce_sum(t.multiply(t.linear_solve(a, b), w)), rng.standard_normal((3, 2)))

    def test_log_softmax_and_gather(self, rng):
        _check(lambda t, x: t.reduce_mean(t.gather(t.log_softmax(x), [0, 1, 2], [2, 0, 1])),
               rng.standard_normal((3, 3)))

    def test_masked_select(self, rng):
        mask = np.array([[True, False], [False, True], [True, True]])
        _check(lambda t, x: t.reduce_sum(t.exp(t.masked_select(x, mask=mask))), rng.standard_normal((3, 2)))
        _check(lambda t, x: t.reduce_sum(t.exp(t.masked_select(x, rows=[0, 2], cols=[1]))),
               rng.standard_normal((3, 2)))

    def test_log_clamped(self, rng):
        _check(lambda t, x: t.reduce_sum(t.log_clamped(x)), rng.random((2, 3)) + 0.1)

    def test_relu_and_l2(self, rng):
        x0 = rng.standard_normal((3, 4))
        x0[np.abs(x0) < 0.1] = 0.5
        w = rng.standard_normal((3, 4))
        _check(lambda t, x: t.reduce_sum(t.multiply(t.relu(x), w)), x0)
        _check(lambda t, x: t.reduce_sum(t.multiply(t.l2_row_normalize(x), w)), x0)


class TestLinearSolve:
    def test_solution(self, rng):
        a = rng.standard_normal((5, 5)) + 5.0 * np.eye(5)
        b = rng.standard_normal((5, 3))
        x = Tape().linear_solve(a, b)
        np.testing.assert_allclose(a @ x.value, b, atol=1e-12)

    def test_singular_raises(self):
        a = np.array([[1.0, 2.0], [2.0, 4.0]])
        with pytest.raises(SingularPropagationError) as info:
            Tape().linear_solve(a, np.ones((2, 1)))
        assert info.value.rcond is not None

    def test_non_square(self):
        with pytest.raises(ShapeError):
            Tape().linear_solve(np.ones((2, 3)), np.ones((2, 1)))
