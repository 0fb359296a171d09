"""Control vector, prior sampling and ensemble propagation."""

import numpy as np
import pytest

from floodda.controls import (ControlVector, Ensemble, PerturbationSpec,
                              WindowObsPlan, apply_control, clip_matrix,
                              element_names, propagate, sample_prior)
from floodda.solver import Hydrograph, HydroState, RatingCurve


@pytest.fixture
def prior_spec():
    return PerturbationSpec.default(n_zones=3, n_subdomains=2, master_seed=11)


class TestControlVector:

    def test_flatten_order_and_round_trip(self):
        cv = ControlVector(ks=[31.0, 29.0, 33.0], q_mult=1.2, dh=[0.1, -0.2])
        vec = cv.flatten()
        assert vec.tolist() == [31.0, 29.0, 33.0, 1.2, 0.1, -0.2]
        back = ControlVector.unflatten(vec, 3, 2)
        assert np.array_equal(back.flatten(), vec)

    def test_unflatten_rejects_bad_length(self):
        with pytest.raises(ValueError):
            ControlVector.unflatten(np.zeros(4), 3, 2)

    def test_clipping_bounds(self):
        cv = ControlVector(ks=[2.0, 70.0, 30.0], q_mult=5.0, dh=[-3.0, 3.0])
        c = cv.clipped()
        assert c.ks.tolist() == [5.0, 60.0, 30.0]
        assert c.q_mult == 3.0
        assert c.dh.tolist() == [-2.0, 2.0]

    def test_clip_matrix_matches_scalar_clipping(self):
        rng = np.random.default_rng(3)
        x = rng.normal(30, 40, size=(20, 6))
        x[:, 3] = rng.normal(1, 2, 20)
        x[:, 4:] = rng.normal(0, 3, (20, 2))
        clipped = clip_matrix(x, 3, 2)
        for row, orig in zip(clipped, x):
            cv = ControlVector.unflatten(orig, 3, 2).clipped()
            assert np.array_equal(row, cv.flatten())

    def test_element_names(self):
        assert element_names(2, 3) == ["ks0", "ks1", "q_mult", "dh1", "dh2", "dh3"]


class TestSamplePrior:

    def test_vanishing_std_gives_the_mean(self):
        spec = PerturbationSpec(mean=np.array([30.0, 30.0, 30.0, 1.0, 0.0, 0.0]),
                                std=np.full(6, 1e-12), master_seed=5,
                                n_zones=3, n_subdomains=2)
        ens = sample_prior(spec, 8)
        for m in ens.members:
            assert np.allclose(m.flatten(), spec.mean, atol=1e-9)

    def test_large_sample_statistics(self, prior_spec):
        ens = sample_prior(prior_spec, 10_000)
        ks0 = np.array([m.ks[0] for m in ens.members])
        assert abs(ks0.mean() - 30.0) < 0.1
        assert abs(ks0.std() - 3.0) < 0.1

    def test_same_seed_bit_identical(self, prior_spec):
        a = sample_prior(prior_spec, 12)
        b = sample_prior(prior_spec, 12)
        assert a.member_seeds == b.member_seeds
        for ma, mb in zip(a.members, b.members):
            assert np.array_equal(ma.flatten(), mb.flatten())

    def test_bounds_respected_under_wide_prior(self):
        spec = PerturbationSpec(mean=np.array([6.0, 58.0, 30.0, 1.0, 0.0, 0.0]),
                                std=np.array([20.0, 20.0, 20.0, 2.0, 3.0, 3.0]),
                                master_seed=7, n_zones=3, n_subdomains=2)
        ens = sample_prior(spec, 500)
        x = ens.matrix()
        assert x[:, :3].min() >= 5.0 and x[:, :3].max() <= 60.0
        assert x[:, 3].min() >= 0.2 and x[:, 3].max() <= 3.0
        assert x[:, 4:].min() >= -2.0 and x[:, 4:].max() <= 2.0

    def test_too_few_members_rejected(self, prior_spec):
        with pytest.raises(ValueError):
            sample_prior(prior_spec, 1)

    def test_nonpositive_std_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            PerturbationSpec(mean=np.zeros(6), std=np.zeros(6), master_seed=1,
                             n_zones=3, n_subdomains=2)


class TestApplyControl:

    def test_identity_control_reproduces_baseline(self, tiny_case):
        baseline = Hydrograph([0.0, 3600.0], [40.0, 90.0])
        h = np.where(tiny_case.subdomain == 0, 0.7, 0.0)
        restart = HydroState(0.0, h, np.zeros_like(h), np.zeros_like(h))
        cv = ControlVector(ks=[30.0, 30.0, 30.0], q_mult=1.0, dh=[0.0, 0.0])
        inputs = apply_control(cv, tiny_case, baseline, restart)
        assert np.array_equal(inputs.forcing.flows, baseline.flows)
        assert np.array_equal(inputs.state.h, restart.h)
        assert inputs.friction.tolist() == [30.0, 30.0, 30.0]

    def test_large_negative_dh_dries_subdomain_without_negatives(self, tiny_case):
        baseline = Hydrograph([0.0, 1.0], [40.0, 40.0])
        h = np.full((tiny_case.grid.ny, tiny_case.grid.nx), 1.0)
        restart = HydroState(0.0, h, np.ones_like(h), np.zeros_like(h))
        cv = ControlVector(ks=[30.0, 30.0, 30.0], q_mult=1.0, dh=[0.0, -5.0])
        inputs = apply_control(cv, tiny_case, baseline, restart)
        sub2 = tiny_case.subdomain == 2
        assert np.array_equal(inputs.state.h[sub2], np.zeros(sub2.sum()))
        assert inputs.state.h.min() >= 0.0
        assert np.array_equal(inputs.state.qx[sub2], np.zeros(sub2.sum()))

    def test_riverbed_depths_untouched_by_dh(self, tiny_case):
        baseline = Hydrograph([0.0, 1.0], [40.0, 40.0])
        h = np.full((tiny_case.grid.ny, tiny_case.grid.nx), 1.0)
        restart = HydroState(0.0, h, np.zeros_like(h), np.zeros_like(h))
        cv = ControlVector(ks=[30.0, 30.0, 30.0], q_mult=1.0, dh=[0.5, -0.3])
        inputs = apply_control(cv, tiny_case, baseline, restart)
        riverbed = tiny_case.subdomain == 0
        assert np.array_equal(inputs.state.h[riverbed], restart.h[riverbed])
        sub1 = tiny_case.subdomain == 1
        assert np.allclose(inputs.state.h[sub1], 1.5)

    def test_q_mult_scales_event_volume(self, tiny_case):
        baseline = Hydrograph([0.0, 3600.0, 9000.0], [40.0, 150.0, 60.0])
        h = np.zeros((tiny_case.grid.ny, tiny_case.grid.nx))
        restart = HydroState(0.0, h, h.copy(), h.copy())
        cv = ControlVector(ks=[30.0, 30.0, 30.0], q_mult=1.2, dh=[0.0, 0.0])
        inputs = apply_control(cv, tiny_case, baseline, restart)
        v_base = baseline.cumulative_volume(9000.0)
        v_scaled = inputs.forcing.cumulative_volume(9000.0)
        assert abs(v_scaled - 1.2 * v_base) / v_base < 1e-12


class TestPropagate:

    @pytest.fixture
    def setup(self, tiny_case):
        baseline = Hydrograph([0.0, 1800.0, 3600.0], [40.0, 200.0, 60.0])
        outlet = RatingCurve(a=75 * 30 * np.sqrt(1e-3))
        h = np.where(tiny_case.subdomain == 0, 0.6, 0.0)
        init = HydroState(0.0, h, np.zeros_like(h), np.zeros_like(h))
        plan = WindowObsPlan(gauge_times=[1800.0, 3600.0], wsr_times=[3600.0],
                             eval_times=[3600.0])
        return baseline, outlet, init, plan

    def make_ens(self, q_mults, seeds=None):
        members = [ControlVector(ks=[30.0, 30.0, 30.0], q_mult=q, dh=[0.0, 0.0])
                   for q in q_mults]
        return Ensemble(members=members,
                        member_seeds=seeds or list(range(len(members))))

    def test_identical_members_identical_equivalents(self, tiny_case, setup):
        baseline, outlet, init, plan = setup
        ens = self.make_ens([1.0, 1.0])
        ens.states = [init.copy(), init.copy()]
        _, eq = propagate(ens, tiny_case, baseline, outlet, (0.0, 3600.0), plan)
        assert np.array_equal(eq.gauge[0], eq.gauge[1])
        assert np.array_equal(eq.wsr[0], eq.wsr[1])

    def test_member_permutation_permutes_outputs(self, tiny_case, setup):
        baseline, outlet, init, plan = setup
        ens = self.make_ens([0.8, 1.3], seeds=[100, 200])
        ens.states = [init.copy(), init.copy()]
        _, eq = propagate(ens, tiny_case, baseline, outlet, (0.0, 3600.0), plan)
        rev = self.make_ens([1.3, 0.8], seeds=[200, 100])
        rev.states = [init.copy(), init.copy()]
        _, eq_rev = propagate(rev, tiny_case, baseline, outlet, (0.0, 3600.0), plan)
        assert np.array_equal(eq.gauge[0], eq_rev.gauge[1])
        assert np.array_equal(eq.gauge[1], eq_rev.gauge[0])

    def test_worker_count_does_not_change_results(self, tiny_case, setup):
        baseline, outlet, init, plan = setup
        outs = []
        for workers in (1, 2):
            ens = self.make_ens([0.8, 1.0, 1.3])
            ens.states = [init.copy() for _ in range(3)]
            new_ens, eq = propagate(ens, tiny_case, baseline, outlet,
                                    (0.0, 3600.0), plan, workers=workers)
            outs.append((new_ens, eq))
        a, b = outs
        assert np.array_equal(a[1].gauge, b[1].gauge)
        assert np.array_equal(a[1].wsr, b[1].wsr)
        for sa, sb in zip(a[0].states, b[0].states):
            assert np.array_equal(sa.h, sb.h)
            assert np.array_equal(sa.qx, sb.qx)

    def test_restart_states_advance_to_window_end(self, tiny_case, setup):
        baseline, outlet, init, plan = setup
        ens = self.make_ens([1.0, 1.1])
        ens.states = [init.copy(), init.copy()]
        new_ens, eq = propagate(ens, tiny_case, baseline, outlet,
                                (0.0, 3600.0), plan)
        assert all(s.t == 3600.0 for s in new_ens.states)
        assert eq.gauge.shape == (2, 2, 3)
        assert eq.wsr.shape == (2, 1, tiny_case.n_subdomains)
        assert set(eq.eval_depth) == {3600.0}

    def test_obs_time_outside_window_rejected(self, tiny_case, setup):
        baseline, outlet, init, _ = setup
        ens = self.make_ens([1.0, 1.1])
        ens.states = [init.copy(), init.copy()]
        plan = WindowObsPlan(gauge_times=[5000.0])
        with pytest.raises(ValueError, match="outside window"):
            propagate(ens, tiny_case, baseline, outlet, (0.0, 3600.0), plan)
