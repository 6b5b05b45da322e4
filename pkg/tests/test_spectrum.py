import numpy as np
import pytest

from micropolar.core import PhysParams
from micropolar.errors import ConfigurationError
from micropolar.galerkin import linear_matrices
from micropolar.spectrum import (
    assemble_symbol,
    classify_stability,
    deflation_basis,
    eigen_scan,
    kbar_block,
    lattice,
    propagate_mode,
    slow_rate_estimate,
    symbol_matrix,
)

TWO_PI = 2 * np.pi
SEL = [0, 1, 2, 3, 4, 5, 8, 10]   # (u, theta, K13, K23) inside the 12-vector (u, theta, K6)


class TestSymbol:
    def test_matches_galerkin_linearisation(self, generic):
        k = TWO_PI * np.array([1.0, -2.0, 3.0])
        L = linear_matrices(k, generic)
        B = symbol_matrix(k, generic)
        # theta and a rows agree entry by entry; the u rows differ by the Leray projection
        assert np.abs(L[np.ix_(SEL[3:], SEL)] - B[3:, :]).max() < 1e-12
        PL = np.eye(3) - np.outer(k, k) / (k @ k)
        assert np.abs(PL @ L[np.ix_([0, 1, 2], SEL)] - B[:3, :]).max() < 1e-10

    def test_batched(self, generic):
        ks = TWO_PI * lattice(1).astype(float)
        B = symbol_matrix(ks, generic)
        assert B.shape == (27, 8, 8)
        assert np.allclose(B[5], symbol_matrix(ks[5], generic))

    def test_kbar_block(self, generic):
        ev = np.linalg.eigvals(kbar_block(generic))
        assert np.abs(ev.real).max() < 1e-14
        assert np.allclose(np.sort(ev.imag), [-2 * generic.tau_tilde, 0, 2 * generic.tau_tilde])
        S = assemble_symbol(TWO_PI * np.array([1.0, 0, 0]), generic)
        assert S.full().shape == (12, 12) and S.deflated().shape == (7, 7)

    def test_deflation_basis(self):
        for k in ([0, 0, 0], [1, 0, 0], [1, -2, 3]):
            Q = deflation_basis(TWO_PI * np.array(k, dtype=float))
            assert np.allclose(Q.T @ Q, np.eye(Q.shape[1]))
            if any(k):
                assert np.allclose(np.array(k) @ Q[:3], 0)

    def test_rejects_bad_shape(self, generic):
        with pytest.raises(ConfigurationError):
            symbol_matrix(np.zeros(2), generic)


class TestScan:
    def test_oblate_stable(self, oblate):
        sp = eigen_scan(oblate, 4)
        assert sp.max_re < 0
        assert sp.verdict == "stable" and not sp.failures
        v = classify_stability(oblate, spectrum=sp)
        assert v.stable and v.consistent_with_inertia
        assert sp.zero_mode_residual < 1e-10
        assert len(sp.rows()) == 9 ** 3

    def test_oblong_unstable(self, oblong):
        v = classify_stability(oblong, 3)
        assert v.stable is False and v.max_re > 1e-3 and v.consistent_with_inertia
        assert v.witness is not None

    def test_slow_pair_approaches_axis(self, oblate):
        sp = eigen_scan(oblate, 6)
        tr = -sp.tracked_re
        assert np.all(tr > 0)
        assert tr[-1] < tr[0]
        # the slow branch follows the leading-order estimate at large |k|
        k2 = (TWO_PI * 6) ** 2
        assert tr[-1] <= 10 * slow_rate_estimate(k2, oblate)

    def test_imaginary_parts_bounded(self, oblate):
        sp = eigen_scan(oblate, 3)
        ev = sp.eigenvalues[np.isfinite(sp.eigenvalues)]
        assert np.abs(ev.imag).max() <= sp.im_bound + 1e-9

    def test_degenerate_inertia_rejected(self):
        with pytest.raises(ConfigurationError):
            PhysParams.unit(lam=1.0, nu=1.0)


class TestPropagation:
    def test_expm_matches_eigen_decomposition(self, oblate, rng):
        k = TWO_PI * np.array([0.0, 1.0, 1.0])
        v0 = rng.standard_normal(8)
        v0[:3] = 0.0
        B = symbol_matrix(k, oblate)
        w, V = np.linalg.eig(B)
        ref = V @ (np.exp(0.7 * w) * np.linalg.solve(V, v0))
        assert np.allclose(propagate_mode(k, oblate, v0, 0.7), ref, atol=1e-10)
