"""Fourier symbol of the linearisation about equilibrium and its spectrum.

The symbol acts on ``(u_hat, theta_hat, a_hat)`` (8 complex components);
the remaining microinertia entries decouple into the planar block
``Kbar -> tau~ [R, Kbar]`` and the inert ``K33``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .core import PhysParams, lift_perp
from .errors import ConfigurationError, NumericalError

TWO_PI = 2.0 * np.pi
_R = np.array([[0.0, -1.0], [1.0, 0.0]])


def _as_k(k):
    k = np.asarray(k, dtype=float)
    if k.shape[-1] != 3:
        raise ConfigurationError("wavenumbers must have a trailing axis of length 3")
    return k


def symbol_matrix(k, params):
    """The ``8 x 8`` symbol ``B(k)`` for one or many wavenumbers ``k`` (shape ``(..., 3)``)."""
    p = params
    k = _as_k(k)
    lead = k.shape[:-1]
    k2 = np.sum(k * k, axis=-1)
    B = np.zeros(lead + (8, 8), dtype=complex)
    eye = np.eye(3)
    kk = k[..., :, None] * k[..., None, :]
    PL = np.where((k2 > 0)[..., None, None], eye - kk / np.where(k2 > 0, k2, 1.0)[..., None, None], eye)
    # (ik) x v as a matrix
    ik = 1j * k
    C = np.zeros(lead + (3, 3), dtype=complex)
    C[..., 0, 1], C[..., 0, 2] = -ik[..., 2], ik[..., 1]
    C[..., 1, 0], C[..., 1, 2] = ik[..., 2], -ik[..., 0]
    C[..., 2, 0], C[..., 2, 1] = -ik[..., 1], ik[..., 0]
    # velocity rows
    B[..., 0:3, 0:3] = -(p.mu + 0.5 * p.kappa) * k2[..., None, None] * PL
    B[..., 0:3, 3:6] = p.kappa * PL @ C
    # angular velocity rows (before J_eq^-1)
    Jeq = p.J_eq
    weq = p.omega_eq
    W = np.array([[0.0, -weq[2], weq[1]], [weq[2], 0.0, -weq[0]], [-weq[1], weq[0], 0.0]])
    Jw = Jeq @ weq
    Xw = np.array([[0.0, -Jw[2], Jw[1]], [Jw[2], 0.0, -Jw[0]], [-Jw[1], Jw[0], 0.0]])
    # -w_eq x J_eq th - th x J_eq w_eq = (-W J_eq + Xw) th
    prec = -W @ Jeq + Xw
    Tth = (-2.0 * p.kappa * eye + prec
           - (p.alpha_tilde - p.gamma_tilde) * kk - p.gamma_tilde * k2[..., None, None] * eye)
    Ta = np.zeros((3, 2))
    Ta[0, 1], Ta[1, 0] = 1.0, -1.0          # -lift_perp(a) = (a2, -a1, 0)
    Jinv = np.diag(1.0 / p.J_diag)
    B[..., 3:6, 0:3] = Jinv @ (p.kappa * C)
    B[..., 3:6, 3:6] = Jinv @ Tth
    B[..., 3:6, 6:8] = p.tau_tilde ** 2 * (Jinv @ Ta)
    # a rows: -(nu - lam) thbar_perp + tau~ a_perp
    B[..., 6:8, 3:5] = -(p.nu - p.lam) * _R
    B[..., 6:8, 6:8] = p.tau_tilde * _R
    return B


def kbar_block(params):
    """``Kbar -> tau~ [R, Kbar]`` on coordinates ``(K11, K12, K22)``."""
    M = np.zeros((3, 3))
    for col in range(3):
        e = np.zeros(3)
        e[col] = 1.0
        S = np.array([[e[0], e[1]], [e[1], e[2]]])
        C = params.tau_tilde * (_R @ S - S @ _R)
        M[:, col] = (C[0, 0], C[0, 1], C[1, 1])
    return M


@dataclass(frozen=True)
class SymbolMatrix:
    """Symbol at one wavenumber: ``B`` on ``(u, theta, a)``, the planar K block and the K33 block."""

    k: np.ndarray
    B: np.ndarray
    kbar: np.ndarray
    k33: np.ndarray

    def full(self):
        """Block-diagonal ``12 x 12`` operator on ``(u, theta, a, K11, K12, K22, K33)``."""
        out = np.zeros((12, 12), dtype=complex)
        out[:8, :8] = self.B
        out[8:11, 8:11] = self.kbar
        return out

    def deflated(self):
        return deflate(self.k, self.B)


def assemble_symbol(k, params):
    """Linearised symbol at a single wavenumber ``k`` in ``(2 pi Z)^3``."""
    k = _as_k(k).reshape(3)
    return SymbolMatrix(k.copy(), symbol_matrix(k, params), kbar_block(params), np.zeros((1, 1)))


def _perp_basis(k):
    """Orthonormal basis (columns) of the plane orthogonal to ``k != 0``."""
    k = k / np.linalg.norm(k)
    trial = np.eye(3)[np.argmin(np.abs(k))]
    e1 = np.cross(k, trial)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(k, e1)
    return np.stack([e1, e2], axis=1)


def deflation_basis(k):
    """Orthonormal columns spanning the dynamically relevant subspace at ``k``.

    For ``k != 0`` the velocity is restricted to ``k^perp`` (7 columns); at
    ``k = 0`` the velocity is dropped entirely (5 columns).
    """
    k = np.asarray(k, dtype=float)
    if not np.any(k):
        Q = np.zeros((8, 5))
        Q[3:, :] = np.eye(5)
        return Q
    Q = np.zeros((8, 7))
    Q[0:3, 0:2] = _perp_basis(k)
    Q[3:, 2:] = np.eye(5)
    return Q


def deflate(k, B):
    Q = deflation_basis(k)
    return Q.T @ B @ Q


@dataclass
class SymbolSpectrum:
    """Result of an eigenvalue scan over the lattice ``|k / 2 pi|_inf <= k_max``."""

    params: PhysParams
    k_max: int
    k_int: np.ndarray            # (P, 3) integer wavenumbers
    eigenvalues: np.ndarray      # (P, 8), nan-padded; deflated spectrum first
    n_deflated: np.ndarray       # (P,) number of meaningful entries
    kbar_eigenvalues: np.ndarray
    max_re: float
    argmax_k: tuple
    im_bound: float
    shells: np.ndarray
    tracked_re: np.ndarray       # per shell: max deflated Re
    tracked_im: np.ndarray
    failures: list = field(default_factory=list)
    zero_mode_residual: float = 0.0

    @property
    def verdict(self):
        return "stable" if self.max_re <= 0 else "unstable"

    def rows(self):
        """One mapping per wavenumber with real and imaginary parts."""
        out = []
        for k, ev, m in zip(self.k_int, self.eigenvalues, self.n_deflated):
            row = {"k1": int(k[0]), "k2": int(k[1]), "k3": int(k[2])}
            for i in range(8):
                z = ev[i] if i < m else np.nan
                row[f"re{i}"] = float(np.real(z))
                row[f"im{i}"] = float(np.imag(z))
            out.append(row)
        return out

    def summary(self):
        return {
            "k_max": self.k_max,
            "max_re": self.max_re,
            "argmax_k": list(self.argmax_k),
            "im_bound": self.im_bound,
            "kbar_eigenvalues": [[float(z.real), float(z.imag)] for z in self.kbar_eigenvalues],
            "tracked_re_first": float(self.tracked_re[0]) if len(self.tracked_re) else None,
            "tracked_re_last": float(self.tracked_re[-1]) if len(self.tracked_re) else None,
            "failures": self.failures,
            "verdict": self.verdict,
        }


def lattice(k_max):
    r = np.arange(-k_max, k_max + 1)
    g = np.stack(np.meshgrid(r, r, r, indexing="ij"), axis=-1).reshape(-1, 3)
    return g


def eigen_scan(params, k_max=16, chunk=8192):
    """Eigenvalues of the deflated symbol at every lattice wavenumber up to ``k_max``.

    The Leray kernel direction at ``k != 0`` and the trivial velocity block
    at ``k = 0`` are removed before the eigen-solve, so every returned
    eigenvalue belongs to a dynamical mode.
    """
    if k_max < 1:
        raise ConfigurationError("k_max must be >= 1")
    kint = lattice(k_max)
    kvec = TWO_PI * kint
    P = len(kint)
    ev = np.full((P, 8), np.nan + 0j)
    ndef = np.zeros(P, dtype=int)
    failures = []
    zero = np.all(kint == 0, axis=1)
    nz = np.nonzero(~zero)[0]
    # batched deflation for k != 0
    zres = 0.0
    for s in range(0, len(nz), chunk):
        idx = nz[s:s + chunk]
        k = kvec[idx]
        B = symbol_matrix(k, params)
        Q = np.zeros((len(idx), 8, 7))
        Q[:, 3:, 2:] = np.eye(5)
        kh = k / np.linalg.norm(k, axis=1, keepdims=True)
        trial = np.eye(3)[np.argmin(np.abs(kh), axis=1)]
        e1 = np.cross(kh, trial)
        e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
        e2 = np.cross(kh, e1)
        Q[:, 0:3, 0] = e1
        Q[:, 0:3, 1] = e2
        Bd = np.swapaxes(Q, 1, 2) @ B @ Q
        # the removed direction is an exact null vector of the full symbol
        v = np.zeros((len(idx), 8))
        v[:, 0:3] = kh
        zres = max(zres, float(np.abs(np.einsum("pij,pj->pi", B, v)).max()))
        try:
            w = np.linalg.eigvals(Bd)
            ev[idx, :7] = w
            ndef[idx] = 7
        except np.linalg.LinAlgError:
            for i, Bi in zip(idx, Bd):
                try:
                    ev[i, :7] = np.linalg.eigvals(Bi)
                    ndef[i] = 7
                except np.linalg.LinAlgError as exc:
                    failures.append({"k": kint[i].tolist(), "error": str(exc)})
    for i in np.nonzero(zero)[0]:
        B0 = symbol_matrix(kvec[i], params)
        ev[i, :5] = np.linalg.eigvals(deflate(kvec[i], B0))
        ndef[i] = 5
    re = np.real(ev)
    valid = np.isfinite(re)
    re_m = np.where(valid, re, -np.inf)
    flat = int(np.argmax(re_m))
    pi, _ = np.unravel_index(flat, re_m.shape)
    max_re = float(re_m.max())
    im_bound = float(np.nanmax(np.abs(np.imag(ev))))
    shell_of = np.max(np.abs(kint), axis=1)
    shells = np.arange(1, k_max + 1)
    per_k = re_m.max(axis=1)
    tracked_re = np.array([per_k[shell_of == s].max() for s in shells])
    tracked_im = []
    for s in shells:
        sel = np.nonzero(shell_of == s)[0]
        j = sel[np.argmax(per_k[sel])]
        col = int(np.argmax(re_m[j]))
        tracked_im.append(float(np.imag(ev[j, col])))
    kb = np.linalg.eigvals(kbar_block(params))
    return SymbolSpectrum(params, k_max, kint, ev, ndef, kb, max_re, tuple(int(x) for x in kint[pi]),
                          im_bound, shells, tracked_re, np.array(tracked_im), failures, zres)


@dataclass
class StabilityVerdict:
    stable: bool | None
    text: str
    max_re: float
    witness: tuple | None
    consistent_with_inertia: bool


def classify_stability(params, k_max=16, tol=1e-10, spectrum=None):
    """Stable / unstable verdict from a scan, cross-checked against the sign of ``nu - lam``."""
    if params.nu == params.lam:
        raise ConfigurationError("nu == lam has no inertial type")
    sp = spectrum or eigen_scan(params, k_max)
    if sp.max_re > tol:
        k = sp.argmax_k
        v = StabilityVerdict(False, f"linearly unstable at k = 2 pi {list(k)} (Re = {sp.max_re:.3e})",
                             sp.max_re, k, params.nu < params.lam)
    elif sp.max_re < -tol:
        v = StabilityVerdict(True, "linearly stable (no Re > 0)", sp.max_re, None, params.nu > params.lam)
    else:
        v = StabilityVerdict(None, f"inconclusive: max Re = {sp.max_re:.3e} within tolerance",
                             sp.max_re, sp.argmax_k, params.nu > params.lam)
    return v


def propagate_mode(k, params, v0, t):
    """``exp(t B(k)) v0`` for an 8-vector ``(u, theta, a)`` at wavenumber ``k``."""
    B = symbol_matrix(_as_k(k).reshape(3), params)
    return sla.expm(t * B) @ np.asarray(v0, dtype=complex)


def slow_rate_estimate(k2, params):
    """Leading-order decay rate of the slow pair at large ``|k|``."""
    return (params.nu - params.lam) * params.tau_tilde ** 2 / (2 * params.kappa + params.gamma_tilde * k2)
