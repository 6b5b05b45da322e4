"""Band-limited fields on the unit torus.

A field on band ``m`` stores its Fourier coefficients on the centred box of
integer wavenumbers ``-m..m`` per axis, so the coefficient array has shape
``rank_shape + (2m+1, 2m+1, 2m+1)`` and the mode with integer index
``(i, j, l)`` sits at ``[..., i+m, j+m, l+m]``.  The physical wavenumber is
``k = 2*pi*(i, j, l)`` and ``f(x) = sum_k c_k exp(i k.x)``.

Products are formed on a physical grid of ``N`` points per axis.  A product
of bands ``a`` and ``b`` whose result is kept on band ``c`` is exact when
``N >= a + b + c + 1``; every product helper checks this.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from itertools import product as iproduct

import numpy as np
import scipy.fft as sfft

from .errors import BandError, ConfigurationError

TWO_PI = 2.0 * np.pi

RANK_SHAPES = {
    "scalar": (),
    "vector": (3,),
    "planar": (2,),
    "sym": (3, 3),
    "matrix": (3, 3),
}

_fft_workers = None


def set_fft_workers(n):
    """Number of threads handed to scipy.fft (None means scipy's default)."""
    global _fft_workers
    _fft_workers = None if n is None else max(1, int(n))


def get_fft_workers():
    return _fft_workers


# ---------------------------------------------------------------------------
# Grid


@dataclass(frozen=True)
class Grid:
    """Retained band ``n_modes`` plus the transform size ``phys_size``.

    ``norm`` selects how the band is cut: ``"linf"`` keeps the full box
    ``|k_j/2pi| <= n`` and ``"l2"`` keeps the Euclidean ball inside it.
    """

    n_modes: int
    phys_size: int
    norm: str = "linf"

    def __post_init__(self):
        if self.n_modes < 0:
            raise ConfigurationError("n_modes must be non-negative")
        if self.phys_size < 2 * self.n_modes + 1:
            raise ConfigurationError(
                f"phys_size={self.phys_size} cannot resolve band {self.n_modes}"
            )
        if self.norm not in ("linf", "l2"):
            raise ConfigurationError(f"unknown band norm {self.norm!r}")

    @property
    def side(self):
        return 2 * self.n_modes + 1

    @property
    def shape(self):
        return (self.side,) * 3

    @cached_property
    def integer_wavenumbers(self):
        r = np.arange(-self.n_modes, self.n_modes + 1)
        return np.stack(np.meshgrid(r, r, r, indexing="ij")).astype(np.int64)

    @cached_property
    def wavenumbers(self):
        """Array ``(3, s, s, s)`` of physical wavenumbers ``2*pi*integer``."""
        return TWO_PI * self.integer_wavenumbers.astype(float)

    @cached_property
    def k2(self):
        k = self.wavenumbers
        return np.einsum("i...,i...->...", k, k)

    def band_radius(self):
        """Per-mode band measure (linf or Euclidean) in integer units."""
        kk = self.integer_wavenumbers
        if self.norm == "linf":
            return np.abs(kk).max(axis=0).astype(float)
        return np.sqrt((kk.astype(float) ** 2).sum(axis=0))

    def mask(self, m=None):
        m = self.n_modes if m is None else m
        return self.band_radius() <= m + 1e-12

    def with_modes(self, m):
        return Grid(m, self.phys_size, self.norm)

    def with_size(self, N):
        return Grid(self.n_modes, N, self.norm)

    def physical_points(self, N=None):
        N = self.phys_size if N is None else N
        x = np.arange(N) / N
        return np.stack(np.meshgrid(x, x, x, indexing="ij"))


def dealias_size(*bands):
    """Smallest transform size making a product of ``bands[:-1]`` kept on ``bands[-1]`` exact."""
    return int(sum(bands)) + 1


def fast_size(n):
    return int(sfft.next_fast_len(int(n), real=True))


def check_dealias(N, *bands):
    need = dealias_size(*bands)
    if N < need:
        raise ConfigurationError(
            f"transform size {N} too small for product of bands {bands[:-1]} kept on "
            f"{bands[-1]} (need >= {need})"
        )


# ---------------------------------------------------------------------------
# Transforms on raw coefficient arrays


@lru_cache(maxsize=64)
def _indices(m, N):
    idx = np.arange(-m, m + 1) % N
    return idx, np.arange(0, m + 1)


def coeffs_to_physical(c, N):
    """Samples on the ``N^3`` grid of a coefficient array on band ``(c.shape[-1]-1)//2``."""
    m = (c.shape[-1] - 1) // 2
    if N < 2 * m + 1:
        raise ConfigurationError(f"grid of {N} points cannot represent band {m}")
    lead = c.shape[:-3]
    i0, i2 = _indices(m, N)
    H = np.zeros(lead + (N, N, N // 2 + 1), dtype=complex)
    H[..., i0[:, None, None], i0[None, :, None], i2[None, None, :]] = c[..., :, :, m:]
    return sfft.irfftn(H, s=(N, N, N), axes=(-3, -2, -1), norm="forward",
                       workers=_fft_workers)


def physical_to_coeffs(f, m):
    """Coefficients on band ``m`` of real samples ``f``; higher modes are dropped."""
    N = f.shape[-1]
    if N < 2 * m + 1:
        raise ConfigurationError(f"grid of {N} points cannot represent band {m}")
    F = sfft.rfftn(f, axes=(-3, -2, -1), norm="forward", workers=_fft_workers)
    i0, i2 = _indices(m, N)
    pos = F[..., i0[:, None, None], i0[None, :, None], i2[None, None, :]]
    out = np.empty(f.shape[:-3] + (2 * m + 1,) * 3, dtype=complex)
    out[..., m:] = pos
    out[..., :m] = np.conj(pos[..., ::-1, ::-1, m:0:-1])
    return out


def embed(c, m):
    """Zero-pad (or truncate) a coefficient array to band ``m``."""
    m0 = (c.shape[-1] - 1) // 2
    if m0 == m:
        return c.copy()
    out = np.zeros(c.shape[:-3] + (2 * m + 1,) * 3, dtype=complex)
    if m0 < m:
        s = slice(m - m0, m + m0 + 1)
        out[..., s, s, s] = c
    else:
        s = slice(m0 - m, m0 + m + 1)
        out[...] = c[..., s, s, s]
    return out


def hermitian_part(c):
    """Average of ``c`` with its reflected conjugate (the real-field part)."""
    return 0.5 * (c + np.conj(c[..., ::-1, ::-1, ::-1]))


def hermitian_defect(c):
    return float(np.max(np.abs(c - np.conj(c[..., ::-1, ::-1, ::-1])), initial=0.0))


def real_inner(a, b):
    """L^2 inner product of two real fields from their coefficients."""
    return float(np.real(np.vdot(a, b)))


# ---------------------------------------------------------------------------
# SpectralField


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Real field on the torus stored by its Fourier coefficients."""

    grid: Grid
    rank: str
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.rank not in RANK_SHAPES:
            raise ConfigurationError(f"unknown rank {self.rank!r}")
        want = RANK_SHAPES[self.rank] + self.grid.shape
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != want:
            raise ConfigurationError(f"coefficient shape {c.shape} != expected {want}")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid, rank):
        return cls(grid, rank, np.zeros(RANK_SHAPES[rank] + grid.shape, dtype=complex))

    @property
    def band(self):
        return self.grid.n_modes

    def with_coeffs(self, c, rank=None):
        return SpectralField(self.grid, rank or self.rank, c)

    def physical(self, N=None):
        return to_physical(self, N)

    def component(self, *idx):
        return SpectralField(self.grid, "scalar", self.coeffs[idx])

    def __add__(self, other):
        _same(self, other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other):
        _same(self, other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __neg__(self):
        return self.with_coeffs(-self.coeffs)

    def __mul__(self, s):
        if not np.isscalar(s):
            return NotImplemented
        return self.with_coeffs(self.coeffs * s)

    __rmul__ = __mul__


def _same(f, g):
    if f.grid != g.grid or f.rank != g.rank:
        raise BandError(f"field mismatch: {f.grid}/{f.rank} vs {g.grid}/{g.rank}")


def field_from_coeffs(c, grid, rank):
    return SpectralField(grid, rank, c)


# ---------------------------------------------------------------------------
# Operations


def to_spectral(samples, grid, rank=None):
    """Forward transform of real samples on the ``phys_size^3`` grid of ``grid``."""
    samples = np.asarray(samples)
    if np.iscomplexobj(samples):
        if np.max(np.abs(samples.imag), initial=0.0) > 0:
            raise ConfigurationError("samples must be real")
        samples = samples.real
    N = grid.phys_size
    if samples.ndim < 3 or samples.shape[-3:] != (N, N, N):
        raise ConfigurationError(f"samples shape {samples.shape} does not match grid size {N}")
    if rank is None:
        lead = samples.shape[:-3]
        rank = {(): "scalar", (3,): "vector", (2,): "planar", (3, 3): "sym"}.get(lead)
        if rank is None:
            raise ConfigurationError(f"cannot infer rank from shape {lead}")
    if samples.shape[:-3] != RANK_SHAPES[rank]:
        raise ConfigurationError(f"samples shape {samples.shape} does not match rank {rank}")
    c = physical_to_coeffs(samples.astype(float), grid.n_modes)
    if grid.norm != "linf":
        c = c * grid.mask()
    return SpectralField(grid, rank, c)


def to_physical(f, N=None):
    """Samples of ``f`` on an ``N^3`` grid (default: the grid's ``phys_size``)."""
    return coeffs_to_physical(f.coeffs, f.grid.phys_size if N is None else N)


def project_modes(f, m):
    """Zero every mode outside band ``m`` (the band norm follows the grid)."""
    if m > f.grid.n_modes:
        raise BandError(f"cannot project band {f.grid.n_modes} field to larger band {m}")
    return f.with_coeffs(f.coeffs * f.grid.mask(m))


def restrict(f, m):
    """Move ``f`` to a grid of band ``m`` (truncating or zero-padding)."""
    g = f.grid.with_modes(m)
    c = embed(f.coeffs, m)
    if m < f.grid.n_modes:
        c = c * g.mask()
    return SpectralField(g, f.rank, c)


def leray_symbol(grid):
    """``I - k k^T/|k|^2`` per mode, identity at ``k = 0``; shape ``(3, 3) + grid.shape``."""
    k = grid.wavenumbers
    k2 = grid.k2
    inv = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
    P = -np.einsum("i...,j...->ij...", k, k) * inv
    for i in range(3):
        P[i, i] += 1.0
    return P


def leray_coeffs(c, grid):
    k = grid.wavenumbers
    k2 = grid.k2
    inv = np.where(k2 > 0, 1.0 / np.where(k2 > 0, k2, 1.0), 0.0)
    kc = np.einsum("i...,i...->...", k, c)
    return c - k * (kc * inv)


def leray_project(v):
    if v.rank != "vector":
        raise ConfigurationError("Leray projection needs a vector field")
    return v.with_coeffs(leray_coeffs(v.coeffs, v.grid))


def derivative_symbol(grid, alpha):
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != 3 or min(alpha) < 0:
        raise ConfigurationError(f"bad multi-index {alpha}")
    k = grid.wavenumbers
    s = np.ones(grid.shape, dtype=complex)
    for j, a in enumerate(alpha):
        if a:
            s = s * (1j * k[j]) ** a
    return s


def derivative(f, alpha, max_order=16):
    """Spatial derivative ``d^alpha f``."""
    if sum(alpha) > max_order:
        raise ConfigurationError(f"derivative order {sum(alpha)} above cap {max_order}")
    return f.with_coeffs(f.coeffs * derivative_symbol(f.grid, alpha))


def gradient_coeffs(c, grid):
    """``(..., 3, s, s, s)`` gradient: entry ``[..., j]`` is ``d_j``."""
    ik = 1j * grid.wavenumbers
    return c[..., None, :, :, :] * ik


_PRODUCT_OPS = {
    "mul": None,
    "matvec": "vector",
    "matmat": "matrix",
    "dot": "scalar",
    "cross": "vector",
    "outer": "matrix",
}


def _pointwise(op, a, b):
    if op == "mul":
        return a * b
    if op == "matvec":
        return np.einsum("ij...,j...->i...", a, b)
    if op == "matmat":
        return np.einsum("ij...,jk...->ik...", a, b)
    if op == "dot":
        return np.einsum("i...,i...->...", a, b)
    if op == "cross":
        return np.cross(a, b, axis=0)
    if op == "outer":
        return np.einsum("i...,j...->ij...", a, b)
    raise ConfigurationError(f"unknown product {op!r}")


def dealiased_product(f, g, retain, op="mul", symmetrize=False):
    """Exact product of two fields truncated to band ``retain``.

    ``op`` selects the slot contraction: ``mul`` (scalar times anything),
    ``matvec``, ``matmat``, ``dot``, ``cross`` or ``outer``.  With
    ``symmetrize`` a matrix result is replaced by its symmetric part.
    """
    if f.grid.phys_size != g.grid.phys_size:
        raise ConfigurationError("product of fields on different transform sizes")
    N = f.grid.phys_size
    check_dealias(N, f.grid.n_modes, g.grid.n_modes, retain)
    a = coeffs_to_physical(f.coeffs, N)
    b = coeffs_to_physical(g.coeffs, N)
    if op == "mul":
        if "scalar" not in (f.rank, g.rank):
            raise ConfigurationError("'mul' needs one scalar factor")
        rank = g.rank if f.rank == "scalar" else f.rank
        val = a * b  # trailing spatial axes broadcast against tensor slots
    else:
        rank, val = _PRODUCT_OPS[op], _pointwise(op, a, b)
    if symmetrize and val.ndim == 5:
        val = 0.5 * (val + val.swapaxes(0, 1))
        rank = "sym"
    grid = Grid(retain, N, f.grid.norm)
    c = physical_to_coeffs(val, retain)
    if grid.norm != "linf":
        c = c * grid.mask()
    return SpectralField(grid, rank, c)


def convolve_direct(fc, gc, retain):
    """Brute-force convolution of two scalar coefficient arrays (test oracle)."""
    ma = (fc.shape[-1] - 1) // 2
    mb = (gc.shape[-1] - 1) // 2
    out = np.zeros((2 * retain + 1,) * 3, dtype=complex)
    rng_a = range(-ma, ma + 1)
    for k in iproduct(range(-retain, retain + 1), repeat=3):
        s = 0.0j
        for l in iproduct(rng_a, repeat=3):
            d = (k[0] - l[0], k[1] - l[1], k[2] - l[2])
            if max(abs(d[0]), abs(d[1]), abs(d[2])) <= mb:
                s += fc[l[0] + ma, l[1] + ma, l[2] + ma] * gc[d[0] + mb, d[1] + mb, d[2] + mb]
        out[k[0] + retain, k[1] + retain, k[2] + retain] = s
    return out


# ---------------------------------------------------------------------------
# Norms


def multi_indices(order, exact=False):
    """All spatial multi-indices with ``|alpha| <= order`` (or ``== order``)."""
    out = []
    for a in range(order + 1):
        for b in range(order + 1 - a):
            for c in range(order + 1 - a - b):
                if not exact or a + b + c == order:
                    out.append((a, b, c))
    return out


@lru_cache(maxsize=128)
def _hs_weight_cached(n_modes, norm, s, convention):
    grid = Grid(n_modes, 2 * n_modes + 1, norm)
    k = grid.wavenumbers
    if convention == "bessel":
        return (1.0 + grid.k2) ** s
    k1, k2, k3 = k[0] ** 2, k[1] ** 2, k[2] ** 2
    w = np.zeros(grid.shape)
    for a, b, c in multi_indices(s):
        w += k1 ** a * k2 ** b * k3 ** c
    return w


def hs_weight(grid, s, convention="sum"):
    """Per-mode multiplier of ``|c_k|^2`` in the squared ``H^s`` norm.

    ``convention="sum"`` is ``sum_{|alpha|<=s} k^(2 alpha)`` (one term per
    distinct multi-index); ``"bessel"`` is ``(1+|k|^2)^s``.
    """
    if s < 0:
        raise ConfigurationError("Sobolev index must be non-negative")
    if convention not in ("sum", "bessel"):
        raise ConfigurationError(f"unknown H^s convention {convention!r}")
    return _hs_weight_cached(grid.n_modes, grid.norm, int(s), convention)


def hs_norm_sq_coeffs(c, grid, s, convention="sum"):
    w = hs_weight(grid, s, convention)
    return float(np.sum(np.abs(c) ** 2 * w))


def _pointwise_magnitude(v, rank):
    nd = len(RANK_SHAPES[rank])
    if nd == 0:
        return np.abs(v)
    return np.sqrt(np.sum(v ** 2, axis=tuple(range(nd))))


def norm(f, kind="L2", convention="sum", N=None):
    """Norm of ``f``.

    ``kind`` is ``"L1"``, ``"L2"``, ``"Linf"`` or ``"H<s>"`` (e.g. ``"H2"``),
    or a tuple ``("H", s)``.  Tensor slots are combined with the Euclidean /
    Frobenius norm pointwise.  ``L2`` and ``H^s`` use Parseval; ``L1`` and
    ``Linf`` use the physical samples.
    """
    if isinstance(kind, tuple):
        kind = f"H{kind[1]}"
    if kind == "L2":
        return float(np.sqrt(np.sum(np.abs(f.coeffs) ** 2)))
    if kind.startswith("H"):
        s = int(kind[1:])
        return float(np.sqrt(hs_norm_sq_coeffs(f.coeffs, f.grid, s, convention)))
    if kind in ("L1", "Linf"):
        mag = _pointwise_magnitude(to_physical(f, N), f.rank)
        return float(mag.mean() if kind == "L1" else mag.max())
    raise ConfigurationError(f"unknown norm {kind!r}")


def inner(f, g):
    _same(f, g)
    return real_inner(f.coeffs, g.coeffs)


# ---------------------------------------------------------------------------
# Binary container / field snapshots
#
# Layout (all integers little endian):
#   8 bytes   magic  b"MPFIELD1"
#   8 bytes   uint64 header length H
#   H bytes   UTF-8 JSON header, keys sorted:
#             {"arrays": [{"name", "dtype", "shape", "offset", "nbytes"}...],
#              "meta": {...}}
#   payload   raw C-order array bytes; offsets are relative to payload start
# The writer is deterministic, so identical inputs give identical files.

MAGIC = b"MPFIELD1"


def write_container(path, arrays, meta):
    entries, blobs, offset = [], [], 0
    for name in sorted(arrays):
        a = np.ascontiguousarray(arrays[name])
        a = a.astype(a.dtype.newbyteorder("<"), copy=False)
        raw = a.tobytes(order="C")
        entries.append({"name": name, "dtype": a.dtype.str, "shape": list(a.shape),
                        "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"arrays": entries, "meta": meta}, sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for raw in blobs:
            fh.write(raw)


def read_container(path):
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise ConfigurationError(f"{path}: not a field container")
    (hlen,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16:16 + hlen].decode("utf-8"))
    base = 16 + hlen
    arrays = {}
    for e in header["arrays"]:
        start = base + e["offset"]
        buf = data[start:start + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(buf, dtype=np.dtype(e["dtype"])).reshape(e["shape"]).copy()
    return arrays, header["meta"]


def grid_meta(grid):
    return {"n_modes": grid.n_modes, "phys_size": grid.phys_size, "norm": grid.norm}


def grid_from_meta(m):
    return Grid(int(m["n_modes"]), int(m["phys_size"]), m.get("norm", "linf"))


def save_field(path, f):
    write_container(path, {"coeffs": f.coeffs},
                    {"kind": "field", "grid": grid_meta(f.grid), "rank": f.rank})


def load_field(path):
    arrays, meta = read_container(path)
    if meta.get("kind") != "field":
        raise ConfigurationError(f"{path}: not a single-field snapshot")
    return SpectralField(grid_from_meta(meta["grid"]), meta["rank"], arrays["coeffs"])


def random_field(grid, rank, rng, band=None, envelope=None, hermitian=True):
    """Random real field on ``band`` (default: the whole grid band).

    ``envelope`` optionally maps integer ``|k|`` to a spectral weight.
    """
    shape = RANK_SHAPES[rank] + grid.shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    m = grid.n_modes if band is None else band
    c = c * grid.mask(m)
    if envelope is not None:
        kk = np.sqrt((grid.integer_wavenumbers.astype(float) ** 2).sum(axis=0))
        c = c * envelope(kk)
    if hermitian:
        c = hermitian_part(c)
    if rank == "sym":
        c = 0.5 * (c + c.swapaxes(0, 1))
    return SpectralField(grid, rank, c)
