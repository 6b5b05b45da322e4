import numpy as np
import pytest

from micropolar.errors import ConfigurationError, NumericalError
from micropolar.galerkin import GalerkinConfig, initial_data, microinertia_from_axis
from micropolar.rigidity import (
    a_from_axis,
    axis_field,
    axis_from_vector,
    rigidity_check,
    rigidity_check_state,
    rotation_factorization_check,
    scalar_invariants,
    spectrum_deviation,
    spectrum_persistence_check,
)


def _axes(rng, n, max_tilt):
    """Unit vectors with polar angle below ``max_tilt``."""
    th = rng.uniform(0, max_tilt, n)
    ph = rng.uniform(0, 2 * np.pi, n)
    return np.array([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)])


class TestSpectrum:
    def test_axis_form_has_target_spectrum(self, generic, rng):
        J = axis_from_vector(_axes(rng, 500, np.pi), generic)
        assert spectrum_persistence_check(J, generic) < 1e-13
        det, tr = scalar_invariants(J, generic)
        assert det < 1e-12 and tr < 1e-12

    def test_deviation_detects_perturbation(self, generic):
        J = np.repeat(generic.J_eq[:, :, None], 4, axis=2)
        J[0, 0, 2] += 1e-3
        dev = spectrum_deviation(J, generic)
        assert dev.shape == (4,)
        assert np.isclose(dev[2], 1e-3) and dev[0] == 0

    def test_shape_validation(self, generic):
        with pytest.raises(ConfigurationError):
            spectrum_deviation(np.zeros((2, 2, 3)), generic)


class TestAxis:
    def test_roundtrip(self, generic, rng):
        n = _axes(rng, 200, 1.2)
        ax = axis_field(axis_from_vector(n, generic), generic)
        assert np.allclose(ax.n, n, atol=1e-12)
        assert ax.reconstruction_error < 1e-12
        assert np.all(ax.n[2] >= 0)

    def test_ill_defined(self, generic):
        J = np.repeat(generic.J_eq[:, :, None], 3, axis=2)
        J[2, 2, 1] += 0.1
        with pytest.raises(NumericalError, match="point 1"):
            axis_field(J, generic)

    def test_a_from_axis(self, oblate, rng):
        n = _axes(rng, 50, 1.0)
        K = axis_from_vector(n, oblate) - oblate.J_eq[:, :, None]
        assert np.allclose(a_from_axis(n, oblate), K[:2, 2])


class TestRigidity:
    def test_holds_in_cone(self, oblate, rng):
        # ||K||_inf <= nu - lam keeps the axis in the cone n3^2 >= 1/2
        n = _axes(rng, 2000, np.pi / 4 * 0.99)
        K = microinertia_from_axis(n, oblate)
        rep = rigidity_check(K, oblate)
        assert rep.applicable and rep.holds and rep.violations == 0
        assert rep.margin >= -1e-12
        assert rep.min_abs_n3 >= np.sqrt(0.5) - 1e-6

    def test_bound_is_sharp_at_cone_edge(self, oblate):
        n = np.array([[np.sqrt(0.5)], [0.0], [np.sqrt(0.5)]])
        K = microinertia_from_axis(n, oblate)
        Kn = np.sqrt(np.sum(K ** 2))
        an = np.hypot(K[0, 2], K[1, 2])[0]
        assert np.isclose(Kn, 2 * an)

    def test_violation_reported(self, oblate):
        K = np.zeros((3, 3, 5))
        K[0, 0, 3] = 0.1   # not spectrum preserving, a = 0
        rep = rigidity_check(K, oblate)
        assert not rep.holds and rep.violations == 1

    def test_not_applicable_for_large_K(self, oblate, rng):
        n = _axes(rng, 100, np.pi / 2)
        rep = rigidity_check(microinertia_from_axis(n, oblate), oblate)
        assert not rep.applicable and rep.holds

    def test_on_state(self, oblate):
        cfg = GalerkinConfig(n=2, dt=0.1, t_end=1)
        Z = initial_data("random-band", 1e-2, 0, oblate, cfg)
        rep = rigidity_check_state(Z, oblate, tol=1e-6)
        assert rep.applicable and rep.max_deviation < 1e-4


class TestRotation:
    def test_factorization(self, oblate, rng):
        n = _axes(rng, 1, 0.5)[:, 0]
        J0 = axis_from_vector(n, oblate)
        err = rotation_factorization_check(J0, np.array([0.1, -0.2, 0.3]), oblate, t_end=2.0)
        assert err < 1e-10
