import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_bumps
from semiflow.chernoff import (
    NonDyadicTimeError,
    NonFiniteStateError,
    apply_partition,
    chernoff_limit,
    discrete_semigroup_identity_residual,
    dyadic_partition,
    evolve_path,
    semigroup_defect,
    smallest_dyadic_level,
)
from semiflow.diagnostics import lipschitz_certificate, random_ball_state
from semiflow.families_nonlinear import make_ode_family, vector_field_preset
from semiflow.state_space import VectorState, sample_function


class TestDyadicPartition:
    def test_unit_time_level_three(self):
        p = dyadic_partition(1.0, 3)
        assert p.step_count == 8
        assert p.step == 0.125

    def test_zero_time(self):
        assert dyadic_partition(0.0, 5).step_count == 0

    def test_non_dyadic_rejected_with_hint(self):
        with pytest.raises(NonDyadicTimeError):
            dyadic_partition(0.3, 4)

    def test_rejection_reports_smallest_level(self):
        with pytest.raises(NonDyadicTimeError, match="smallest admissible level is 5"):
            dyadic_partition(0.03125, 4)

    def test_smallest_level_search(self):
        assert smallest_dyadic_level(0.75) == 2
        assert smallest_dyadic_level(1.0) == 0
        # the stored double 0.3 is itself a dyadic rational k * 2^-54
        assert smallest_dyadic_level(0.3) == 54

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 12), st.integers(0, 4096))
    def test_representable_times_accepted(self, n, k):
        t = k * 2.0**-n
        p = dyadic_partition(t, n)
        assert p.step_count == k
        assert p.step_count * p.step == t


class TestApplyPartition:
    def test_zero_steps_identity(self, ode_decay_family):
        x = VectorState([0.7])
        assert apply_partition(ode_decay_family, dyadic_partition(0.0, 4), x) is x

    def test_two_step_arithmetic(self, ode_decay_family):
        # (1 - 1/2)^2 = 0.25
        out = apply_partition(ode_decay_family, dyadic_partition(1.0, 1),
                              VectorState([1.0]))
        assert out.coordinates[0] == 0.25

    def test_level_ten_matches_direct_power(self, ode_decay_family):
        out = apply_partition(ode_decay_family, dyadic_partition(1.0, 10),
                              VectorState([1.0]))
        direct = 1.0
        for _ in range(1024):
            direct *= 1.0 - 2.0**-10
        assert out.coordinates[0] == pytest.approx(direct, abs=0.0)
        assert abs(out.coordinates[0] - math.exp(-1)) <= 2e-4

    def test_nonfinite_abort_carries_step_index(self):
        from semiflow.chernoff import GeneratingFamilyDescriptor

        def bad_step(t, x):
            return VectorState([x.coordinates[0] * (1e200 if t > 0 else 1.0)])

        fam = GeneratingFamilyDescriptor(
            name="blowup", state_kind="vector", step=bad_step,
            alpha=lambda R, t: R, beta=lambda R, t: 1.0,
            zero_state=VectorState([0.0]))
        with pytest.raises(NonFiniteStateError) as exc:
            apply_partition(fam, dyadic_partition(1.0, 2), VectorState([1.0]))
        assert exc.value.step_index == 1


class TestChernoffLimit:
    def test_t_zero_returns_input(self, ode_decay_family):
        x = VectorState([2.0])
        out, rep = chernoff_limit(ode_decay_family, 0.0, x)
        assert out is x
        assert rep.converged and rep.steps_total == 0

    def test_ode_exponential(self, ode_decay_family):
        out, rep = chernoff_limit(ode_decay_family, 1.0, VectorState([1.0]),
                                  tol=1e-4, n_min=4, n_max=12)
        assert rep.converged
        assert abs(out.coordinates[0] - math.exp(-1)) <= 5e-4

    def test_deltas_decrease_for_euler(self, ode_decay_family):
        _, rep = chernoff_limit(ode_decay_family, 1.0, VectorState([1.0]),
                                tol=1e-6, n_min=2, n_max=12)
        assert all(b < a for a, b in zip(rep.deltas, rep.deltas[1:]))

    def test_non_dyadic_time_rejected(self, ode_decay_family):
        with pytest.raises(NonDyadicTimeError):
            chernoff_limit(ode_decay_family, math.pi / 4, VectorState([1.0]))

    def test_nonconvergence_flagged(self, ode_decay_family):
        _, rep = chernoff_limit(ode_decay_family, 1.0, VectorState([1.0]),
                                tol=1e-12, n_min=2, n_max=4)
        assert not rep.converged
        assert rep.n_last == 4

    def test_report_json_fields(self, ode_decay_family):
        _, rep = chernoff_limit(ode_decay_family, 0.5, VectorState([1.0]))
        d = rep.to_json_dict()
        assert set(d) == {"t", "n_min", "n_last", "tol", "deltas", "converged",
                          "steps_total"}


class TestSemigroupDefect:
    def test_zero_s_is_noise(self, ode_decay_family):
        d = semigroup_defect(ode_decay_family, 0.0, 0.5, VectorState([1.0]))
        assert d <= 1e-12

    def test_ode_defect_small(self, ode_decay_family):
        tol = 1e-4
        d = semigroup_defect(ode_decay_family, 0.5, 0.5, VectorState([1.0]),
                             tol=tol)
        assert d <= 3 * tol

    def test_heat_defect_small(self, heat_family, bump_medium):
        tol = 1e-3
        d = semigroup_defect(heat_family, 0.25, 0.25, bump_medium, tol=tol,
                             n_min=4, n_max=12)
        assert d <= 3 * tol


class TestDiscreteIdentity:
    def test_ode_exact(self, ode_decay_family):
        r = discrete_semigroup_identity_residual(
            ode_decay_family, 0.5, 0.5, 1, VectorState([1.0]))
        assert r <= 1e-12

    def test_gexp_exact(self, gexp_family, bump_medium):
        r = discrete_semigroup_identity_residual(
            gexp_family, 0.25, 0.75, 2, bump_medium)
        assert r <= 1e-12

    def test_zero_s_exact(self, heat_family, bump_medium):
        r = discrete_semigroup_identity_residual(
            heat_family, 0.0, 0.5, 3, bump_medium)
        assert r == 0.0


class TestEvolvePath:
    def test_single_zero_time(self, ode_decay_family):
        x = VectorState([1.0])
        states = evolve_path(ode_decay_family, [0.0], x)
        assert states == [x]

    def test_exponential_trajectory(self, ode_decay_family):
        states = evolve_path(ode_decay_family, [0.5, 1.0], VectorState([1.0]),
                             tol=1e-4, n_min=4, n_max=12)
        assert abs(states[0].coordinates[0] - math.exp(-0.5)) <= 5e-4
        assert abs(states[1].coordinates[0] - math.exp(-1.0)) <= 5e-4

    def test_non_dyadic_time_gate(self, ode_rotation_family):
        with pytest.raises(NonDyadicTimeError):
            evolve_path(ode_rotation_family, [math.pi / 4],
                        VectorState([1.0, 0.0]))

    def test_not_increasing_rejected(self, ode_decay_family):
        with pytest.raises(ValueError):
            evolve_path(ode_decay_family, [0.5, 0.5], VectorState([1.0]))


class TestIteratedEnvelopes:
    """Uniform-in-level bounds that the declared envelopes must reproduce."""

    R = 1.0
    T = 0.5

    def test_boundedness_heat(self, heat_family):
        rng = np.random.default_rng(11)
        for _ in range(5):
            x = random_ball_state(heat_family, rng, self.R)
            for n in (2, 4, 6):
                u = apply_partition(heat_family, dyadic_partition(self.T, n), x)
                assert heat_family.norm_of(u) <= \
                    heat_family.alpha(self.R, self.T) + 1e-10

    def test_boundedness_ode(self, ode_decay_family):
        rng = np.random.default_rng(12)
        for _ in range(5):
            x = random_ball_state(ode_decay_family, rng, self.R)
            for n in (2, 4, 6):
                u = apply_partition(ode_decay_family,
                                    dyadic_partition(self.T, n), x)
                assert ode_decay_family.norm_of(u) <= \
                    ode_decay_family.alpha(self.R, self.T) + 1e-10

    @pytest.mark.parametrize("family_name", ["heat", "ode"])
    def test_uniform_lipschitz_in_state(self, family_name, heat_family,
                                        ode_decay_family):
        fam = heat_family if family_name == "heat" else ode_decay_family
        rng = np.random.default_rng(13)
        bound = fam.beta(fam.alpha(self.R, self.T), self.T)
        for _ in range(5):
            x = random_ball_state(fam, rng, self.R)
            y = random_ball_state(fam, rng, self.R)
            dxy = fam.distance(x, y)
            for n in (2, 4, 6):
                part = dyadic_partition(self.T, n)
                du = fam.distance(apply_partition(fam, part, x),
                                  apply_partition(fam, part, y))
                assert du <= bound * dxy + 1e-10

    def test_level_refinement_bound_heat(self, heat_family, bump_medium):
        # d(u_n, x) <= beta(alpha(R,t),t) * gamma_hat(x,t) * t on the
        # certified Lipschitz set
        t = 0.5
        cert = lipschitz_certificate(heat_family, bump_medium, t, [4, 5, 6, 7])
        assert cert.verdict == "bounded"
        R = heat_family.norm_of(bump_medium)
        bound = heat_family.beta(heat_family.alpha(R, t), t) * cert.gamma_hat * t
        for n in (3, 5, 7):
            u = apply_partition(heat_family, dyadic_partition(t, n), bump_medium)
            assert heat_family.distance(u, bump_medium) <= bound + 1e-8

    def test_level_refinement_bound_ode(self, ode_decay_family):
        t = 0.5
        x = VectorState([1.0])
        cert = lipschitz_certificate(ode_decay_family, x, t, [4, 5, 6, 7])
        assert cert.gamma_hat == pytest.approx(1.0, abs=1e-12)  # |f(x)| = 1
        R = 1.0
        bound = (ode_decay_family.beta(ode_decay_family.alpha(R, t), t)
                 * cert.gamma_hat * t)
        for n in (3, 5, 7):
            u = apply_partition(ode_decay_family, dyadic_partition(t, n), x)
            assert ode_decay_family.distance(u, x) <= bound + 1e-8


class TestFamilyContract:
    def test_step_zero_bit_exact(self, heat_family, gexp_family,
                                 robust_gbm_family, grid_medium):
        f = random_bumps(grid_medium, seed=5)
        for fam in (heat_family, gexp_family):
            out = fam.step(0.0, f)
            assert out is f or np.array_equal(out.values, f.values)

    def test_envelope_law_violation_detected(self):
        from semiflow.chernoff import GeneratingFamilyDescriptor, \
            check_family_contract
        fam = GeneratingFamilyDescriptor(
            name="bad", state_kind="vector", step=lambda t, x: x,
            alpha=lambda R, t: R + math.sqrt(t),  # fails the composition law
            beta=lambda R, t: 1.0,
            zero_state=VectorState([0.0]))
        with pytest.raises(ValueError, match="alpha composition"):
            check_family_contract(fam)
