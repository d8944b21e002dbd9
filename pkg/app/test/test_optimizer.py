import numpy as np
import pytest

from app.core.exceptions import ConfigurationError
from app.core.metrics import sum_capacity
from app.core.model import ChannelSet, Mode, NetworkConfig, generate_channels
from app.core.optimizer import (
    Scheme,
    Termination,
    baseline_design,
    design_for,
    design_objective,
    evaluate,
    jds_optimize,
    nas_design,
    power_audit,
    update_precoders,
)
from app.core.relay import relay_geometry, rescale_to_budget, solve_relay


@pytest.fixture
def mse_config(small_config):
    return small_config.with_updates(mode=Mode.MSE)


class TestNaiveDesign:
    def test_relay_gain_without_relay_links(self, rng):
        config = NetworkConfig.from_db(20.0, n_s=2, n_r=3, n_d=2)
        channels = generate_channels(config, 0)
        silent = ChannelSet(np.zeros_like(channels.h_r1), np.zeros_like(channels.h_r2),
                            channels.h_d1, channels.h_d2, channels.h_dr)
        design = nas_design(silent, config)
        np.testing.assert_allclose(design.g, np.sqrt(config.p_r / 3) * np.eye(3))
        np.testing.assert_allclose(design.f1, np.sqrt(config.p1 / 2) * np.eye(2))

    def test_meets_relay_budget_exactly(self, small_config):
        channels = generate_channels(small_config, 1)
        audit = power_audit(nas_design(channels, small_config), channels)
        assert audit.relay == pytest.approx(small_config.p_r, rel=1e-10)
        assert audit.source1 == pytest.approx(small_config.p1, rel=1e-10)


class TestJointDesign:
    def test_silent_sources(self, small_config, mse_config):
        for config, expected in ((small_config, 0.0), (mse_config, 4.0)):
            config = config.with_updates(p1=0.0, p2=0.0)
            channels = generate_channels(config, 0)
            design = jds_optimize(channels, config)
            np.testing.assert_array_equal(design.f1, np.zeros((2, 2)))
            np.testing.assert_array_equal(design.f2, np.zeros((2, 2)))
            np.testing.assert_array_equal(design.g, np.zeros((2, 2)))
            assert design.objective_trace[-1] == pytest.approx(expected)
            assert design.outer_iters == 1

    def test_trace_starts_at_naive_design(self, small_config):
        channels = generate_channels(small_config, 2)
        design = jds_optimize(channels, small_config)
        nas = evaluate(nas_design(channels, small_config), channels)
        assert design.objective_trace[0] == pytest.approx(nas.capacity)
        assert design.objective_trace[-1] >= design.objective_trace[0]
        assert design.termination in set(Termination)
        assert design.converged == (design.termination is Termination.TOLERANCE)
        assert design.outer_iters <= small_config.outer_max_iters

    @pytest.mark.parametrize("trial", [0, 1, 2])
    def test_improves_on_naive_design_at_20_db(self, fig_config, trial):
        channels = generate_channels(fig_config, trial)
        jds = evaluate(jds_optimize(channels, fig_config), channels)
        nas = evaluate(nas_design(channels, fig_config), channels)
        assert jds.capacity >= nas.capacity - 1e-12

    @pytest.mark.parametrize("trial", [0, 1])
    def test_mse_mode_lowers_sum_mse(self, mse_config, trial):
        channels = generate_channels(mse_config, trial)
        design = jds_optimize(channels, mse_config)
        assert design.objective_trace[-1] <= design.objective_trace[0]
        jds = evaluate(design, channels)
        nas = evaluate(nas_design(channels, mse_config), channels)
        assert jds.sum_mse <= nas.sum_mse + 1e-12
        assert 0.0 < jds.sum_mse <= 2 * mse_config.n_s

    def test_matches_blind_design_without_direct_links(self, small_config):
        channels = generate_channels(small_config, 3).without_direct_links()
        jds = jds_optimize(channels, small_config)
        nod = baseline_design(channels, small_config, Scheme.NOD)
        assert evaluate(jds, channels).capacity == pytest.approx(evaluate(nod, channels).capacity, abs=1e-6)

        geometry = relay_geometry(channels, jds.f1, jds.f2)
        assert geometry.kappa == 0.0
        assert solve_relay(geometry, small_config.p_r, small_config.mode).inner_iters == 1

    @pytest.mark.parametrize("mode", list(Mode))
    def test_accepted_sweeps_never_worsen(self, fig_config, mode):
        config = fig_config.with_updates(mode=mode)
        sign = 1.0 if mode == Mode.CAPACITY else -1.0
        for trial in range(6):
            channels = generate_channels(config, trial)
            design = jds_optimize(channels, config)
            assert np.all(sign * np.diff(design.objective_trace) >= 0.0)
            assert design.non_monotone_sweeps == 0
            assert design.termination is not Termination.WORSENED
            assert design.precoder_fallbacks <= design.outer_iters
            assert design.relay_fallbacks <= design.outer_iters
            assert design_objective(channels, design.f1, design.f2, design.g, mode) == design.objective_trace[-1]
            assert power_audit(design, channels).feasible(config)

    def test_relay_step_never_loses_to_previous_relay(self, fig_config):
        channels = generate_channels(fig_config, 0)
        start = nas_design(channels, fig_config)
        f1, f2 = update_precoders(channels, start.g, fig_config)
        geometry = relay_geometry(channels, f1, f2)
        held = rescale_to_budget(geometry, start.g, fig_config.p_r)
        held_value = sum_capacity(channels, f1, f2, held)

        design = jds_optimize(channels, fig_config.with_updates(outer_max_iters=1))
        assert design.outer_iters == 1
        if design.precoder_fallbacks == 0:
            assert design.objective_trace[-1] >= held_value
        assert design.objective_trace[-1] >= design.objective_trace[0]

    def test_deterministic(self, small_config):
        channels = generate_channels(small_config, 4)
        a = jds_optimize(channels, small_config)
        b = jds_optimize(channels, small_config)
        np.testing.assert_array_equal(a.g, b.g)
        np.testing.assert_array_equal(a.f1, b.f1)
        assert a.objective_trace == b.objective_trace


class TestBaselines:
    def test_sos_and_nod_share_the_design(self, small_config):
        channels = generate_channels(small_config, 5)
        sos = baseline_design(channels, small_config, Scheme.SOS)
        nod = baseline_design(channels, small_config, "nod")
        np.testing.assert_array_equal(sos.g, nod.g)
        np.testing.assert_array_equal(sos.f2, nod.f2)
        assert sos.direct_links and not nod.direct_links

    @pytest.mark.parametrize("trial", range(4))
    def test_direct_links_never_hurt(self, small_config, trial):
        channels = generate_channels(small_config, trial)
        sos = baseline_design(channels, small_config, Scheme.SOS)
        nod = baseline_design(channels, small_config, Scheme.NOD)
        assert evaluate(sos, channels).capacity >= evaluate(nod, channels).capacity - 1e-12

    def test_joint_design_is_not_a_baseline(self, small_config):
        with pytest.raises(ConfigurationError):
            baseline_design(generate_channels(small_config, 0), small_config, Scheme.JDS)

    @pytest.mark.parametrize("mode", list(Mode))
    def test_every_design_is_feasible(self, small_config, mode):
        config = small_config.with_updates(mode=mode)
        for trial in range(3):
            channels = generate_channels(config, trial)
            for scheme in Scheme:
                design = design_for(channels, config, scheme)
                assert power_audit(design, channels).feasible(config)
