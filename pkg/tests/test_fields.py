import numpy as np
import pytest

from micropolar.errors import BandError, ConfigurationError
from micropolar.fields import (
    Grid,
    SpectralField,
    coeffs_to_physical,
    convolve_direct,
    dealias_size,
    dealiased_product,
    derivative,
    embed,
    hermitian_defect,
    hs_norm_sq_coeffs,
    hs_weight,
    inner,
    leray_coeffs,
    leray_project,
    leray_symbol,
    load_field,
    multi_indices,
    norm,
    physical_to_coeffs,
    project_modes,
    random_field,
    restrict,
    save_field,
    to_physical,
    to_spectral,
)


def _rand(grid, rank, rng, band=None):
    return random_field(grid, rank, rng, band=band)


class TestGrid:
    def test_shapes(self):
        g = Grid(3, 16)
        assert g.shape == (7, 7, 7)
        assert g.wavenumbers.shape == (3, 7, 7, 7)
        assert np.isclose(g.wavenumbers[0, -1, 0, 0], 6 * np.pi)

    def test_rejects_unresolved(self):
        with pytest.raises(ConfigurationError):
            Grid(3, 6)
        with pytest.raises(ConfigurationError):
            Grid(2, 8, "l1")

    def test_l2_mask_inside_box(self):
        g = Grid(3, 16, "l2")
        box = Grid(3, 16).mask()
        assert np.all(box[g.mask()])
        assert g.mask().sum() < box.sum()
        assert not g.mask()[0, 0, 0]


class TestTransforms:
    def test_roundtrip(self, rng):
        g = Grid(3, 16)
        f = _rand(g, "vector", rng)
        back = to_spectral(to_physical(f), g)
        assert np.abs(back.coeffs - f.coeffs).max() < 1e-13

    def test_parseval(self, rng):
        g = Grid(3, 16)
        f = _rand(g, "sym", rng)
        x = to_physical(f)
        assert np.isclose(np.mean(np.sum(x ** 2, axis=(0, 1))), norm(f) ** 2, rtol=1e-12)
        h = _rand(g, "sym", rng)
        assert np.isclose(np.mean(np.sum(x * to_physical(h), axis=(0, 1))), inner(f, h), rtol=1e-10)

    def test_real_fields_are_hermitian(self, rng):
        g = Grid(2, 9)
        x = rng.standard_normal((9, 9, 9))
        c = physical_to_coeffs(x, 2)
        assert hermitian_defect(c) < 1e-14

    def test_single_mode(self):
        g = Grid(2, 9)
        x = g.physical_points()
        f = np.cos(2 * np.pi * (x[0] + 2 * x[2]))
        c = physical_to_coeffs(f, 2)
        assert np.isclose(c[3, 2, 4], 0.5)
        assert np.isclose(c[1, 2, 0], 0.5)
        c[3, 2, 4] = c[1, 2, 0] = 0.0
        assert np.abs(c).max() < 1e-14

    def test_rejects_complex_samples(self):
        with pytest.raises(ConfigurationError):
            to_spectral(np.ones((9, 9, 9)) * 1j, Grid(2, 9))

    def test_embed_restrict(self, rng):
        g = Grid(2, 16)
        f = _rand(g, "vector", rng)
        up = restrict(f, 4)
        assert np.allclose(restrict(up, 2).coeffs, f.coeffs)
        assert np.allclose(to_physical(up), to_physical(f))
        assert np.allclose(embed(embed(f.coeffs, 5), 2), f.coeffs)


class TestProjections:
    def test_mode_projection_idempotent_and_self_adjoint(self, rng):
        g = Grid(4, 16)
        f, h = _rand(g, "vector", rng), _rand(g, "vector", rng)
        Pf = project_modes(f, 2)
        assert np.array_equal(project_modes(Pf, 2).coeffs, Pf.coeffs)
        assert np.isclose(inner(Pf, h), inner(f, project_modes(h, 2)), rtol=1e-12)
        with pytest.raises(BandError):
            project_modes(f, 5)

    def test_leray(self, rng):
        g = Grid(3, 16)
        v, w = _rand(g, "vector", rng), _rand(g, "vector", rng)
        Pv = leray_project(v)
        div = np.einsum("i...,i...->...", g.wavenumbers, Pv.coeffs)
        assert np.abs(div).max() < 1e-10 * np.abs(v.coeffs).max() * 20
        assert np.allclose(leray_project(Pv).coeffs, Pv.coeffs, atol=1e-14)
        assert np.isclose(inner(Pv, w), inner(v, leray_project(w)), rtol=1e-12)
        phi = _rand(g, "scalar", rng)
        grad = 1j * g.wavenumbers * phi.coeffs
        assert np.abs(leray_coeffs(grad, g)).max() < 1e-12 * np.abs(grad).max()

    def test_leray_symbol_is_projector(self):
        P = leray_symbol(Grid(2, 9))
        PP = np.einsum("ij...,jk...->ik...", P, P)
        assert np.abs(PP - P).max() < 1e-14
        assert np.allclose(P[:, :, 2, 2, 2], np.eye(3))


class TestProducts:
    def test_against_direct_convolution(self, rng):
        g = Grid(2, dealias_size(2, 2, 4))
        f, h = _rand(g, "scalar", rng), _rand(g, "scalar", rng)
        for retain in (2, 4):
            fh = dealiased_product(f, h, retain)
            ref = convolve_direct(f.coeffs, h.coeffs, retain)
            assert np.abs(fh.coeffs - ref).max() < 1e-12

    def test_band_n_product_lies_in_band_2n(self, rng):
        g = Grid(2, 16)
        f, h = _rand(g, "scalar", rng), _rand(g, "scalar", rng)
        fh = dealiased_product(f, h, 4)
        assert np.abs(to_physical(fh) - to_physical(f) * to_physical(h)).max() < 1e-12

    def test_aliasing_guard(self, rng):
        g = Grid(2, 8)
        f = _rand(g, "scalar", rng)
        with pytest.raises(ConfigurationError):
            dealiased_product(f, f, 4)

    def test_tensor_contractions(self, rng):
        g = Grid(1, 8)
        A, v = _rand(g, "sym", rng), _rand(g, "vector", rng)
        Av = dealiased_product(A, v, 2, op="matvec")
        x = np.einsum("ij...,j...->i...", to_physical(A), to_physical(v))
        assert np.allclose(to_physical(Av), x, atol=1e-12)
        c = dealiased_product(v, v, 2, op="cross")
        assert np.abs(c.coeffs).max() < 1e-13


class TestNorms:
    def test_multi_indices(self):
        assert len(multi_indices(2)) == 10
        assert len(multi_indices(2, exact=True)) == 6

    def test_hs_weight_is_sum_over_multi_indices(self, rng):
        g = Grid(2, 9)
        f = _rand(g, "scalar", rng)
        direct = sum(norm(derivative(f, a)) ** 2 for a in multi_indices(3))
        assert np.isclose(hs_norm_sq_coeffs(f.coeffs, g, 3), direct, rtol=1e-12)
        assert np.isclose(hs_weight(g, 1, "bessel")[3, 2, 2], 1 + 4 * np.pi ** 2)

    def test_linf_l1(self):
        g = Grid(1, 8)
        x = g.physical_points()
        f = to_spectral(np.sin(2 * np.pi * x[0]), g)
        assert np.isclose(norm(f, "Linf", N=64), 1.0, atol=1e-3)
        assert np.isclose(norm(f, "L1", N=64), 2 / np.pi, rtol=1e-3)


class TestContainer:
    def test_roundtrip_and_determinism(self, tmp_path, rng):
        g = Grid(2, 9, "l2")
        f = _rand(g, "sym", rng)
        save_field(tmp_path / "a.mpf", f)
        save_field(tmp_path / "b.mpf", f)
        assert (tmp_path / "a.mpf").read_bytes() == (tmp_path / "b.mpf").read_bytes()
        h = load_field(tmp_path / "a.mpf")
        assert h.grid == g and h.rank == "sym"
        assert np.array_equal(h.coeffs, f.coeffs)

    def test_rejects_other_files(self, tmp_path):
        p = tmp_path / "x.mpf"
        p.write_bytes(b"not a container")
        with pytest.raises(ConfigurationError):
            load_field(p)

    def test_field_validation(self):
        with pytest.raises(ConfigurationError):
            SpectralField(Grid(1, 8), "vector", np.zeros((3, 2, 2, 2)))
        with pytest.raises(ConfigurationError):
            SpectralField(Grid(1, 8), "tensor4", np.zeros((3, 3, 3)))
