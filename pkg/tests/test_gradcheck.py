import numpy as np
import pytest

from gloss.exceptions import ValidationError
from gloss.validators.gradcheck import composite_loss_program, gradient_check, random_composite_check
from gloss.validators.lpa_check import verify_lpa


class TestGradientCheck:
    def test_detects_wrong_gradient(self, rng):
        # valor alterado fora do tape: o backward continua usando o fator 2
        def program(tape, x):
            y = tape.scale(x, 2.0)
            y.node.value = y.node.value * 1.5
            return tape.reduce_sum(tape.multiply(y, y))

        report = gradient_check(program, rng.standard_normal((2, 2)))
        assert not report.passed
        assert report.worst_index is not None

    def test_invalid_eps(self):
        with pytest.raises(ValidationError):
            gradient_check(lambda t, x: t.reduce_sum(x), np.ones((1, 1)), eps=0.0)

    def test_report_fields(self):
        report = gradient_check(lambda t, x: t.reduce_sum(t.multiply(x, x)), np.ones((2, 3)))
        assert report.passed
        assert report.n_checked == 6
        assert report.to_dict()['pass'] is True


class TestCompositeLoss:
    def test_random_configurations(self):
        rng = np.random.default_rng(0)
        for seed in range(20):
            report = random_composite_check(
                seed=seed,
                batch_size=int(rng.integers(6, 13)),
                input_dim=int(rng.integers(2, 9)),
                num_classes=int(rng.integers(2, 5)),
                embedding_dim=int(rng.integers(2, 5)),
                gamma=float(rng.uniform(0.3, 0.7)),
                lam=float(rng.uniform(0.1, 0.9)),
            )
            assert report.max_rel_err < 1e-4, (seed, report.to_dict())

    @pytest.mark.parametrize('target', ['encoder.W1', 'encoder.b2'])
    def test_mlp_parameters(self, rng, target):
        y = np.array([0, 1, 2, 0, 1, 2, 0, 1])
        x = rng.standard_normal((8, 4)) + y[:, None]
        program, w0 = composite_loss_program(x, y, 3, architecture='mlp2', target=target, seed=1)
        assert gradient_check(program, w0).passed

    def test_unknown_target(self, rng):
        with pytest.raises(ValidationError):
            composite_loss_program(rng.standard_normal((6, 3)), [0, 1, 0, 1, 0, 1], 2, target='encoder.W9')


class TestVerifyLpa:
    def test_small_run(self):
        report = verify_lpa(instances=10, max_batch=16, mc_instances=2, mc_batch=6, walks=20_000, seed=3)
        assert report.solve_failures == 0
        assert report.rho_max < 1.0
        assert report.max_neumann_dev < 1e-8
        assert report.max_monte_carlo_dev < 6e-2

    @pytest.mark.slow
    def test_full_triangle(self):
        report = verify_lpa()
        assert report.passed(), report.to_dict()
