import numpy as np
import pytest

from micropolar import kernels
from micropolar import _kernels_py
from micropolar.core import (
    PhysParams,
    State,
    commutator,
    commutator_block_form,
    couple_stress,
    engine_for,
    frob,
    lift_perp,
    matmul,
    precession_split,
    rhs_a,
    rhs_perturbative,
    stress_tensor,
    sym,
    sym_from6,
    sym_to6,
    temporal_derivatives,
    ten,
    vc,
)
from micropolar.errors import ConfigurationError, NumericalError
from micropolar.fields import Grid, SpectralField, coeffs_to_physical, random_field
from micropolar.galerkin import GalerkinConfig, initial_data


def _sym(rng, n=100):
    A = rng.standard_normal((3, 3, n))
    return 0.5 * (A + A.swapaxes(0, 1))


class TestAlgebra:
    def test_ten_vc_duality(self, rng):
        a, b = rng.standard_normal((3, 50)), rng.standard_normal((3, 50))
        assert np.allclose(vc(ten(a)), a, atol=1e-15)
        assert np.allclose(np.einsum("ij...,j...->i...", ten(a), b), np.cross(a, b, axis=0), atol=1e-14)
        assert np.allclose(ten(a), -ten(a).swapaxes(0, 1))

    def test_half_commutator_is_sym_product(self, rng):
        A = ten(rng.standard_normal((3, 50)))
        S = _sym(rng, 50)
        assert np.abs(0.5 * commutator(A, S) - sym(matmul(A, S))).max() < 1e-13

    def test_commutator_orthogonal_to_symmetric(self, rng):
        M = ten(rng.standard_normal((3, 50)))
        S = _sym(rng, 50)
        assert np.abs(frob(commutator(M, S), S)).max() < 1e-12

    def test_block_form(self, rng):
        w = rng.standard_normal((3, 50))
        J = _sym(rng, 50)
        assert np.abs(commutator_block_form(w, J) - commutator(ten(w), J)).max() < 1e-13

    def test_sym6_roundtrip(self, rng):
        S = _sym(rng, 10)
        assert np.array_equal(sym_from6(sym_to6(S)), S)

    def test_lift_perp(self):
        assert np.allclose(lift_perp(np.array([1.0, 2.0])), [-2.0, 1.0, 0.0])

    def test_precession_split_sums_to_full(self, oblate, rng):
        th = 1e-2 * rng.standard_normal((3, 20))
        K = 1e-2 * _sym(rng, 20)
        K[2, 2] = 0.0
        w = oblate.omega_eq[:, None] + th
        J = oblate.J_eq[:, :, None] + K
        full = np.cross(w, np.einsum("ij...,j...->i...", J, w), axis=0)
        f1, f2, f3 = precession_split(oblate.omega_eq, th, oblate.J_eq, K)
        assert np.abs(full - (f1 + f2 + f3)).max() < 1e-15


class TestParams:
    def test_derived(self, generic):
        assert np.isclose(generic.alpha_tilde, 0.4 + 4 * 0.9 / 3)
        assert np.isclose(generic.gamma_tilde, 0.9 + 1.7)
        assert np.isclose(generic.tau_tilde, 0.8 / 2.6)
        assert np.allclose(generic.J_eq, np.diag([1.2, 1.2, 2.1]))
        assert generic.oblate

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            PhysParams.unit(lam=1.0, nu=1.0)
        with pytest.raises(ConfigurationError):
            PhysParams(1, -1, 1, 1, 1, 1, 1, 2)
        with pytest.raises(ConfigurationError):
            PhysParams(1, 1, 1, 1, 1, float("nan"), 1, 2)

    def test_from_dict_strict(self, oblate):
        d = oblate.to_dict()
        assert PhysParams.from_dict(d) == oblate
        with pytest.raises(ConfigurationError, match="unknown"):
            PhysParams.from_dict({**d, "chi": 1.0})
        with pytest.raises(ConfigurationError, match="missing"):
            PhysParams.from_dict({k: v for k, v in d.items() if k != "nu"})
        with pytest.raises(ConfigurationError, match="number"):
            PhysParams.from_dict({**d, "mu": "one"})


class TestConstitutive:
    def test_stress_of_pure_microrotation(self, generic, rng):
        g = Grid(1, 8)
        th = random_field(g, "vector", rng)
        T = stress_tensor(SpectralField.zeros(g, "vector"), SpectralField.zeros(g, "scalar"), th, generic)
        assert np.allclose(T.coeffs, -generic.kappa * ten(th.coeffs))

    def test_couple_stress_trace(self, generic, rng):
        g = Grid(2, 9)
        th = random_field(g, "vector", rng)
        M = couple_stress(th, generic)
        dv = np.einsum("i...,i...->...", 1j * g.wavenumbers, th.coeffs)
        tr = M.coeffs[0, 0] + M.coeffs[1, 1] + M.coeffs[2, 2]
        assert np.allclose(tr, 3 * generic.alpha * dv)


class TestRightHandSide:
    @pytest.fixture
    def state(self, generic):
        cfg = GalerkinConfig(n=2, dt=0.01, t_end=0.1)
        return initial_data("random-band", 3e-2, 7, generic, cfg, band=2, width=2.0)

    def test_pointwise_rhs_shapes_and_constraints(self, state, generic):
        d, p = rhs_perturbative(state, generic)
        g = state.grid_n
        assert d.du.coeffs.shape == state.u.coeffs.shape
        div = np.einsum("i...,i...->...", g.wavenumbers, d.du.coeffs)
        assert np.abs(div).max() < 1e-12
        assert np.abs(d.dK.coeffs - d.dK.coeffs.swapaxes(0, 1)).max() < 1e-15

    def test_a_equation_matches_K_equation(self, state, generic):
        d, _ = rhs_perturbative(state, generic)
        da = rhs_a(state, generic)
        assert np.abs(da.coeffs - d.dK.coeffs[:2, 2]).max() < 1e-12 * max(1.0, np.abs(da.coeffs).max()) * 10

    def test_temporal_derivative_consistency(self, state, generic):
        ts = temporal_derivatives(state, generic, j_max=2)
        d, _ = rhs_perturbative(state, generic)
        assert np.allclose(ts[0].du.coeffs, d.du.coeffs)
        # second derivative against a centred difference of the first
        h = 1e-5
        eng = engine_for(state, generic)
        fwd = State(state.u + h * ts[0].du, state.theta + h * ts[0].dtheta, state.K + h * ts[0].dK)
        bwd = State(state.u - h * ts[0].du, state.theta - h * ts[0].dtheta, state.K - h * ts[0].dK)
        fd = (rhs_perturbative(fwd, generic)[0].dtheta.coeffs - rhs_perturbative(bwd, generic)[0].dtheta.coeffs) / (2 * h)
        ref = ts[1].dtheta.coeffs
        assert np.abs(fd - ref).max() < 1e-6 * np.abs(ref).max()
        with pytest.raises(ConfigurationError):
            temporal_derivatives(state, generic, j_max=0)
        assert eng.N >= 11

    def test_degenerate_microinertia_is_reported(self, generic):
        g = Grid(1, 8)
        Z = State.zeros(1, 8)
        c = np.zeros((3, 3) + Grid(2, 8).shape, dtype=complex)
        c[0, 0, 2, 2, 2] = -1.1
        Z = State(Z.u, Z.theta, SpectralField(Grid(2, 8), "sym", c))
        with pytest.raises(NumericalError, match="grid point"):
            rhs_perturbative(Z, generic)
        assert g.n_modes == 1


class TestKernels:
    """Compiled and fallback kernels agree."""

    @pytest.fixture
    def data(self, rng):
        A = _sym(rng, 200) + 3 * np.eye(3)[:, :, None]
        return A, rng.standard_normal((3, 200)), rng.standard_normal((3, 3, 200))

    @pytest.mark.parametrize("name", ["matvec", "sym_solve", "sym_eigvalsh"])
    def test_backends_agree(self, data, name):
        A, v, _ = data
        fn = getattr(kernels, name)
        args = (A, v) if name != "sym_eigvalsh" else (A,)
        ref = fn(*args, backend=_kernels_py)
        assert np.allclose(fn(*args), ref, atol=1e-12)

    def test_reference_values(self, data):
        A, v, B = data
        assert np.allclose(kernels.matvec(A, v, backend=_kernels_py), np.einsum("ij...,j...->i...", A, v))
        assert np.allclose(kernels.matmat(A, B), np.einsum("ij...,jk...->ik...", A, B))
        assert np.allclose(kernels.cross(v, v[::-1]), np.cross(v, v[::-1], axis=0))
        x = kernels.sym_solve(A, v)
        assert np.allclose(np.einsum("ij...,j...->i...", A, x), v)
        ev = kernels.sym_eigvalsh(A)
        ref = np.linalg.eigvalsh(np.moveaxis(A, -1, 0)).T
        assert np.allclose(ev, ref, atol=1e-10)
        w = v
        assert np.allclose(kernels.commutator_ten(w, A), commutator(ten(w), A))
        g = B
        assert np.allclose(kernels.advect(v, g), np.einsum("j...,cj...->c...", v, g))

    def test_backend_name(self):
        assert kernels.BACKEND in ("cython", "python")
