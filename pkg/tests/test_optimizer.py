import numpy as np
import pytest

from heliqsim import optimizer as opt
from heliqsim.analysis import SpectralObservables
from heliqsim.electrostatics import NotADoubleWellError
from conftest import DETUNED_VOLTAGES, SYMMETRIC_VOLTAGES


def make_obs(omega_l=11.0, omega_r=9.0, beta_l=1.0, beta_r=-1.0, entropies=None):
    if entropies is None:
        entropies = np.zeros(8)
    return SpectralObservables(omega_l=omega_l, omega_r=omega_r, beta_l=beta_l,
                               beta_r=beta_r, detuning=omega_l - omega_r,
                               zeta=0.0, entropies=np.asarray(entropies, float))


@pytest.fixture(scope="module")
def pipeline(synth_table, units):
    return opt.Pipeline(synth_table, units,
                        opt.PipelineSettings(points_per_well=120))


class TestVoltageVector:
    def test_rejects_wrong_length(self):
        with pytest.raises(ValueError, match="7"):
            opt.VoltageVector(v=np.zeros(5))

    def test_rejects_nonfinite(self):
        v = np.zeros(7)
        v[3] = np.inf
        with pytest.raises(ValueError, match="finite"):
            opt.VoltageVector(v=v)

    def test_rejects_out_of_bound(self):
        with pytest.raises(ValueError, match="sanity"):
            opt.VoltageVector(v=np.full(7, 1500.0))


class TestCosts:
    def test_config_i_zero_at_targets(self):
        assert opt.cost_config_i(make_obs()) == 0.0

    def test_config_i_quadratic_in_offset(self):
        assert opt.cost_config_i(make_obs(omega_l=11.1)) == pytest.approx(0.01)

    def test_config_i_positive_off_targets(self):
        assert opt.cost_config_i(make_obs(omega_r=9.5, beta_l=0.0)) > 0

    def test_config_iii_zero_at_targets(self):
        obs = make_obs(omega_l=9.0, omega_r=10.0,
                       entropies=[0, 0, 0, 1.5, 1.0, 1.5])
        assert opt.cost_config_iii(obs) == 0.0

    def test_config_iii_separable_entropy_penalty(self):
        obs = make_obs(omega_l=9.0, omega_r=10.0, entropies=np.zeros(6))
        assert opt.cost_config_iii(obs) == pytest.approx(1.5**2 + 1.0 + 1.5**2)

    def test_config_iii_detuning_term(self):
        # detuning +2 GHz against the -1 GHz target contributes (2+1)^2
        obs = make_obs(omega_l=11.0, omega_r=9.0,
                       entropies=[0, 0, 0, 1.5, 1.0, 1.5])
        assert opt.cost_config_iii(obs) == pytest.approx(9.0)


class TestFdGradient:
    def test_quadratic_exact(self):
        c = np.arange(7, dtype=float)
        grad = opt.fd_gradient(lambda v: ((v - c) ** 2).sum(), np.zeros(7), 0.01)
        np.testing.assert_allclose(grad, -2 * c, atol=1e-6)

    def test_zero_at_minimum(self):
        c = np.linspace(-1, 1, 7)
        grad = opt.fd_gradient(lambda v: ((v - c) ** 2).sum(), c, 1e-3)
        np.testing.assert_allclose(grad, 0.0, atol=1e-9)

    def test_linear_scaling(self):
        rng = np.random.default_rng(0)
        v0 = rng.normal(size=7)
        cost = lambda v: float(np.sin(v).sum())
        g1 = opt.fd_gradient(cost, v0, 1e-4)
        g3 = opt.fd_gradient(lambda v: 3 * cost(v), v0, 1e-4)
        np.testing.assert_allclose(g3, 3 * g1, rtol=1e-8)

    def test_one_sided_fallback(self):
        def cost(v):
            if v[0] > 0.5:
                raise NotADoubleWellError("stencil fell off the well")
            return float((v**2).sum())

        grad = opt.fd_gradient(cost, np.full(7, 0.4999), 0.01)
        assert grad[0] == pytest.approx(2 * 0.4999, abs=0.02)

    def test_both_sides_invalid_raises(self):
        def cost(v):
            raise NotADoubleWellError("nothing here")

        with pytest.raises(NotADoubleWellError):
            opt.fd_gradient(cost, np.zeros(7), 0.01)


class TestAdam:
    def test_converges_on_quadratic_with_defaults(self):
        rng = np.random.default_rng(0)
        c = rng.uniform(-0.5, 0.5, 7)
        res = opt.adam_minimize(lambda v: float(((v - c) ** 2).sum()), np.zeros(7),
                                opt.OptimizerConfig(cost_tol=1e-12))
        assert np.abs(res.voltages - c).max() < 1e-6

    def test_immediate_return_below_tolerance(self):
        res = opt.adam_minimize(lambda v: float((v**2).sum()), np.zeros(7),
                                opt.OptimizerConfig(cost_tol=1e-3))
        assert res.converged
        assert res.iterations == 0

    def test_never_worse_than_start(self):
        rng = np.random.default_rng(5)
        cost = lambda v: float(np.cos(v).sum() + 0.1 * (v**2).sum())
        v0 = rng.normal(size=7)
        res = opt.adam_minimize(cost, v0, opt.OptimizerConfig(max_iters=50))
        assert res.cost <= cost(v0)

    def test_history_records_every_iteration(self):
        res = opt.adam_minimize(lambda v: float(((v - 1) ** 2).sum()), np.zeros(7),
                                opt.OptimizerConfig(max_iters=10, cost_tol=0.0))
        assert len(res.history) == 11
        assert res.history[0]["iter"] == 0
        assert all("cost" in rec and "voltages_mv" in rec for rec in res.history)

    def test_nonfinite_cost_flags_failure(self):
        def cost(v):
            return float("nan") if v[0] != 0 else 1.0

        res = opt.adam_minimize(cost, np.zeros(7),
                                opt.OptimizerConfig(max_iters=30))
        assert res.failed


class TestParametrize:
    def test_endpoints(self):
        a, b = np.arange(7.0), np.arange(7.0)[::-1]
        np.testing.assert_array_equal(opt.parametrize(a, b, 0.0), a)
        np.testing.assert_array_equal(opt.parametrize(a, b, 1.0), b)

    def test_midpoint(self):
        a, b = np.zeros(7), np.ones(7)
        np.testing.assert_allclose(opt.parametrize(a, b, 0.5), np.full(7, 0.5))

    def test_degenerate_affine(self):
        a = np.arange(7.0)
        for lam in (-0.5, 0.3, 2.0):
            np.testing.assert_allclose(opt.parametrize(a, a, lam), a)

    def test_extrapolation(self):
        a, b = np.zeros(7), np.ones(7)
        np.testing.assert_allclose(opt.parametrize(a, b, 2.0), np.full(7, 2.0))


class TestPipeline:
    def test_cache_returns_identical_object(self, pipeline):
        r1 = pipeline.evaluate(DETUNED_VOLTAGES)
        r2 = pipeline.evaluate(DETUNED_VOLTAGES.copy())
        assert r1 is r2

    def test_deterministic_across_instances(self, synth_table, units):
        settings = opt.PipelineSettings(points_per_well=120)
        e1 = opt.Pipeline(synth_table, units, settings).evaluate(
            DETUNED_VOLTAGES).spectrum.energies
        e2 = opt.Pipeline(synth_table, units, settings).evaluate(
            DETUNED_VOLTAGES).spectrum.energies
        np.testing.assert_array_equal(e1, e2)

    def test_flat_potential_rejected(self, pipeline):
        with pytest.raises(NotADoubleWellError):
            pipeline.evaluate(np.zeros(7))

    def test_separable_limit(self, synth_table, units):
        pipe = opt.Pipeline(synth_table, units,
                            opt.PipelineSettings(points_per_well=120,
                                                 kappa_scale=0.0))
        res = pipe.evaluate(DETUNED_VOLTAGES)
        eps = res.basis
        sums = np.sort((eps.eps_l[:, None] + eps.eps_r[None, :]).ravel())
        np.testing.assert_allclose(res.spectrum.energies, sums, atol=1e-10)
        assert np.all(res.observables.entropies < 1e-10)

    def test_symmetric_voltages_give_symmetric_wells(self, pipeline):
        res = pipeline.evaluate(SYMMETRIC_VOLTAGES)
        assert res.observables.detuning == pytest.approx(0.0, abs=1e-9)


class TestSweep:
    def test_separable_sweep_has_true_crossing(self, synth_table, units):
        pipe = opt.Pipeline(synth_table, units,
                            opt.PipelineSettings(points_per_well=120,
                                                 kappa_scale=0.0))
        v_a = np.array([0.0, 26.0, 0.0, -20.0, 0.0, 19.0, 0.0])
        v_b = np.array([0.0, 19.0, 0.0, -20.0, 0.0, 26.0, 0.0])
        records = opt.sweep(pipe, v_a, v_b, np.linspace(0, 1, 11))
        gaps = [r.transitions_ghz[1] - r.transitions_ghz[0] for r in records]
        assert min(gaps) < 0.02  # gap closes at the crossing
        # away from the exact degeneracy every eigenstate stays a product;
        # at the degenerate point itself the pair is an arbitrary mixture
        for rec, gap in zip(records, gaps):
            if gap > 1e-4:
                assert np.all(rec.entropies < 1e-7)

    def test_interacting_sweep_entropy_peak_at_gap_minimum(self, pipeline):
        v_a = np.array([0.0, 26.0, 0.0, -20.0, 0.0, 19.0, 0.0])
        v_b = np.array([0.0, 19.0, 0.0, -20.0, 0.0, 26.0, 0.0])
        records = opt.sweep(pipeline, v_a, v_b, np.linspace(0, 1, 21))
        assert all(r.error is None for r in records)
        gaps = np.array([r.transitions_ghz[1] - r.transitions_ghz[0]
                         for r in records])
        k = int(np.argmin(gaps))
        assert 0 < k < len(records) - 1
        assert records[k].entropies[0] > 0.9
        assert records[k].entropies[1] > 0.9

    def test_tracking_permutation_valid(self, pipeline):
        v_a = np.array([0.0, 26.0, 0.0, -20.0, 0.0, 19.0, 0.0])
        v_b = np.array([0.0, 19.0, 0.0, -20.0, 0.0, 26.0, 0.0])
        records = opt.sweep(pipeline, v_a, v_b, np.linspace(0, 1, 9))
        for rec in records:
            assert sorted(rec.tracking) == list(range(6))

    def test_failures_recorded_and_sweep_continues(self, pipeline):
        v_a = DETUNED_VOLTAGES
        v_b = np.zeros(7)  # lambda = 1 is flat and invalid
        records = opt.sweep(pipeline, v_a, v_b, np.array([0.0, 0.05, 1.0]))
        assert records[0].error is None
        assert records[-1].error is not None
        assert "NotADoubleWell" in records[-1].error

    def test_parallel_matches_serial(self, synth_table, units):
        settings = opt.PipelineSettings(points_per_well=120)
        v_a = np.array([0.0, 26.0, 0.0, -20.0, 0.0, 19.0, 0.0])
        v_b = np.array([0.0, 19.0, 0.0, -20.0, 0.0, 26.0, 0.0])
        lams = np.linspace(0, 1, 7)
        serial = opt.sweep(opt.Pipeline(synth_table, units, settings,
                                        warm_start=False), v_a, v_b, lams)
        parallel = opt.sweep(opt.Pipeline(synth_table, units, settings), v_a, v_b,
                             lams, jobs=2)
        for r_s, r_p in zip(serial, parallel):
            np.testing.assert_array_equal(r_s.transitions_ghz, r_p.transitions_ghz)


class TestOptimizeVoltages:
    def test_polishes_toward_targets(self, synth_table, units):
        # targets chosen near the synthetic landscape so a short run converges
        pipe = opt.Pipeline(synth_table, units,
                            opt.PipelineSettings(points_per_well=120))
        obs0 = pipe.evaluate(DETUNED_VOLTAGES).observables
        targets = opt.ConfigTargets(omega_l=obs0.omega_l + 0.3,
                                    omega_r=obs0.omega_r - 0.2,
                                    beta_l=obs0.beta_l, beta_r=obs0.beta_r)
        cfg = opt.OptimizerConfig(learning_rate=0.1, max_iters=150, cost_tol=1e-3)
        res = opt.optimize_voltages(pipe, "I", cfg, seed=DETUNED_VOLTAGES,
                                    targets=targets)
        assert res.cost < opt.cost_config_i(obs0, targets)
        assert res.cost < 0.02

    def test_unknown_target_rejected(self, pipeline):
        with pytest.raises(ValueError, match="target"):
            opt.make_cost(pipeline, "II")
