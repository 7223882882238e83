import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochacc.errors import InvalidInput
from stochacc.potential import (
    PotentialSpec,
    bump_gradient_factor,
    bump_slope_max,
    dt_potential,
    eval_potential,
    grad_q_potential,
    radial_bump,
)

SPEC = PotentialSpec()
SPEC_A1 = PotentialSpec(amplitude=1.0, omega=(1.0,))


def fd_gradient(spec, q, phi, h):
    """Central-difference gradient of eval_potential, the independent oracle."""
    g = np.zeros(spec.d)
    for k in range(spec.d):
        qp = q.copy()
        qm = q.copy()
        qp[k] += h
        qm[k] -= h
        g[k] = (eval_potential(spec, qp, phi) - eval_potential(spec, qm, phi)) / (2 * h)
    return g


def sphere_point(rng, d, radius):
    u = rng.normal(size=d)
    return radius * u / np.linalg.norm(u)


class TestRadialBump:
    def test_center_value(self):
        assert radial_bump(0.0) == 1.0

    def test_vanishes_at_and_beyond_half(self):
        assert radial_bump(0.5) == 0.0
        assert radial_bump(0.75) == 0.0
        assert radial_bump(123.0) == 0.0

    def test_monotone_decreasing_inside(self):
        r = np.linspace(0.0, 0.4999, 2000)
        vals = radial_bump(r)
        assert np.all(np.diff(vals) <= 0.0)

    def test_gradient_factor_matches_bump_derivative(self):
        # chi'(r) = r * g(r^2) with g the shared factor
        r = np.linspace(1e-3, 0.49, 500)
        h = 1e-7
        fd = (radial_bump(r + h) - radial_bump(r - h)) / (2 * h)
        analytic = r * bump_gradient_factor(r * r)
        assert np.max(np.abs(fd - analytic)) < 1e-5

    def test_slope_max_frozen_value(self):
        assert bump_slope_max() == pytest.approx(4.340714171420677, abs=1e-9)


class TestSpecValidation:
    def test_defaults(self):
        assert SPEC.d == 8
        assert SPEC.m == 1
        assert SPEC.amplitude == 0.25
        assert SPEC.omega == (4.0,)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"d": 1},
            {"d": 2.5},
            {"m": 0},
            {"amplitude": 0.0},
            {"amplitude": -1.0},
            {"omega": (1.0, 2.0)},
            {"omega": (float("nan"),)},
        ],
    )
    def test_rejects_bad_fields(self, kwargs):
        with pytest.raises(InvalidInput):
            PotentialSpec(**kwargs)

    def test_bounds(self):
        assert SPEC.v_max == 2 * SPEC.amplitude
        assert SPEC.grad_norm_max == pytest.approx(2 * SPEC.amplitude * bump_slope_max())

    def test_config_round_trip(self):
        cfg = SPEC.to_config()
        assert cfg == {"d": 8, "m": 1, "amplitude": 0.25, "omega": [4.0]}
        assert PotentialSpec.from_config(cfg) == SPEC

    def test_config_rejects_unknown_keys(self):
        with pytest.raises(InvalidInput):
            PotentialSpec.from_config({"d": 8, "m": 1, "amplitude": 0.25, "omega": [4.0], "x": 1})


class TestEvalPotential:
    def test_outside_support_is_zero(self):
        q = np.zeros(8)
        q[0] = 0.6
        assert eval_potential(SPEC, q, 0.3) == 0.0

    def test_phase_node_is_zero(self):
        assert eval_potential(SPEC, np.zeros(8), np.pi) == 0.0

    def test_center_value_unit_amplitude(self):
        assert eval_potential(SPEC_A1, np.zeros(8), 0.0) == pytest.approx(2.0, abs=1e-15)

    def test_nonnegative_and_bounded(self):
        rng = np.random.default_rng(1)
        q = rng.uniform(-0.6, 0.6, size=(4000, 8))
        phi = rng.uniform(0, 2 * np.pi, size=(4000, 1))
        v = eval_potential(SPEC, q, phi)
        assert np.all(v >= 0.0)
        assert np.all(v <= SPEC.v_max)


class TestGradQPotential:
    def test_zero_outside_support(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            q = sphere_point(rng, 8, rng.uniform(0.5, 3.0))
            assert np.all(grad_q_potential(SPEC, q, 1.0) == 0.0)

    def test_zero_at_origin(self):
        assert np.all(grad_q_potential(SPEC, np.zeros(8), 1.0) == 0.0)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        h = 1e-5
        for _ in range(60):
            # stay away from the support boundary where FD straddles the kink
            q = sphere_point(rng, 8, rng.uniform(0.05, 0.45))
            phi = rng.uniform(0, 2 * np.pi)
            g = grad_q_potential(SPEC, q, phi)
            fd = fd_gradient(SPEC, q, phi, h)
            denom = max(np.linalg.norm(g), 1e-12)
            assert np.linalg.norm(g - fd) / denom < 1e-6

    def test_second_order_fd_convergence(self):
        rng = np.random.default_rng(4)
        ratios = []
        for _ in range(20):
            q = sphere_point(rng, 8, rng.uniform(0.1, 0.4))
            phi = rng.uniform(0, 2 * np.pi)
            g = grad_q_potential(SPEC, q, phi)
            e1 = np.linalg.norm(fd_gradient(SPEC, q, phi, 2e-4) - g)
            e2 = np.linalg.norm(fd_gradient(SPEC, q, phi, 1e-4) - g)
            if e2 > 1e-13:
                ratios.append(e1 / e2)
        # second order: halving the step divides the error by ~4
        assert 3.0 < np.median(ratios) < 5.0

    def test_batch_matches_scalar(self):
        rng = np.random.default_rng(5)
        q = rng.uniform(-0.4, 0.4, size=(50, 8))
        phi = rng.uniform(0, 2 * np.pi, size=(50, 1))
        batch = grad_q_potential(SPEC, q, phi)
        for i in range(50):
            row = grad_q_potential(SPEC, q[i], phi[i])
            np.testing.assert_array_equal(batch[i], row)


class TestDtPotential:
    def test_zero_frequency(self):
        spec = PotentialSpec(omega=(0.0,))
        assert dt_potential(spec, np.zeros(8), 1.2345) == 0.0

    def test_zero_phase(self):
        assert dt_potential(SPEC, np.zeros(8), 0.0) == 0.0

    def test_reference_value(self):
        got = dt_potential(SPEC_A1, np.zeros(8), np.pi / 2)
        assert got == pytest.approx(-1.0, abs=1e-15)


def test_support_exactness_bulk():
    # 1e6 points on or outside the support sphere: all three ops exactly zero
    rng = np.random.default_rng(6)
    n = 1_000_000
    u = rng.normal(size=(n, 8))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    radii = 0.5 + rng.exponential(0.5, size=n)
    radii[: n // 2] = 0.5  # half exactly on the boundary
    q = u * radii[:, None]
    phi = rng.uniform(0, 2 * np.pi, size=(n, 1))
    assert np.all(eval_potential(SPEC, q, phi) == 0.0)
    assert np.all(grad_q_potential(SPEC, q, phi) == 0.0)
    assert np.all(dt_potential(SPEC, q, phi) == 0.0)


def test_gradient_norm_bound_bulk():
    # declared sup-norm dominates 1e6 sampled gradient norms
    rng = np.random.default_rng(7)
    n = 1_000_000
    q = rng.uniform(-0.5, 0.5, size=(n, 8))
    phi = rng.uniform(0, 2 * np.pi, size=(n, 1))
    norms = np.linalg.norm(grad_q_potential(SPEC, q, phi), axis=1)
    assert norms.max() <= SPEC.grad_norm_max * (1 + 1e-12)


def test_gradient_norm_bound_is_tight():
    # a 1-d scan at the maximizing phase should approach the declared bound
    r = np.linspace(0.0, 0.5, 20001)
    q = np.zeros((r.size, 8))
    q[:, 0] = r
    norms = np.linalg.norm(grad_q_potential(SPEC, q, np.array([0.0])), axis=1)
    assert norms.max() > 0.999 * SPEC.grad_norm_max


@settings(max_examples=200, deadline=None)
@given(
    radius=st.floats(min_value=0.5, max_value=50.0, allow_nan=False),
    phi=st.floats(min_value=-10.0, max_value=10.0, allow_nan=False),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
def test_property_outside_support_zero(radius, phi, seed):
    rng = np.random.default_rng(seed)
    q = sphere_point(rng, SPEC.d, radius)
    assert eval_potential(SPEC, q, phi) == 0.0
    assert np.all(grad_q_potential(SPEC, q, phi) == 0.0)
    assert dt_potential(SPEC, q, phi) == 0.0


@settings(max_examples=200, deadline=None)
@given(
    radius=st.floats(min_value=0.0, max_value=0.4999, allow_nan=False),
    phi=st.floats(min_value=-10.0, max_value=10.0, allow_nan=False),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
def test_property_value_in_range(radius, phi, seed):
    rng = np.random.default_rng(seed)
    q = sphere_point(rng, SPEC.d, radius) if radius > 0 else np.zeros(SPEC.d)
    v = eval_potential(SPEC, q, phi)
    assert 0.0 <= v <= SPEC.v_max
