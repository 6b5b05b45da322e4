"""Pointwise spectral geometry of the microinertia.

``J = J_eq + K`` keeps the spectrum ``{lam, lam, nu}`` along the flow, so
``J = nu n (x) n + lam (I - n (x) n)`` for a unit axis field ``n``.  When
``||K||_inf <= nu - lam`` the axis stays in the upper cone ``n3^2 >= 1/2``
and ``|K| <= 2 |a|`` pointwise.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from .core import PhysParams, ten
from .errors import ConfigurationError, NumericalError
from .fields import coeffs_to_physical


def _as_points(J):
    J = np.asarray(J, dtype=float)
    if J.shape[:2] != (3, 3):
        raise ConfigurationError("expected a (3, 3, ...) matrix field")
    return J.reshape(3, 3, -1)


def _eig(J):
    """Sorted eigenvalues and eigenvectors per point; arrays ``(P, 3)`` and ``(P, 3, 3)``."""
    A = np.moveaxis(_as_points(J), -1, 0)
    A = 0.5 * (A + np.swapaxes(A, 1, 2))
    return np.linalg.eigh(A)


def J_field(Z, params, N=None):
    """Physical ``J_eq + K`` of a state."""
    return Z.J_physical(params, N)


def target_spectrum(params):
    return np.sort(params.J_diag)


def spectrum_deviation(J, params):
    """Pointwise ``max_i |sorted eig_i(J) - (lam, lam, nu)_i|`` (shape of the spatial grid)."""
    J = np.asarray(J, dtype=float)
    w, _ = _eig(J)
    dev = np.abs(w - target_spectrum(params)).max(axis=1)
    return dev.reshape(J.shape[2:])


def spectrum_persistence_check(J, params):
    """Maximum over the grid of the sorted-eigenvalue deviation from ``{lam, lam, nu}``."""
    return float(np.max(spectrum_deviation(J, params), initial=0.0))


def scalar_invariants(J, params):
    """Maximum deviations of ``det J`` and ``tr J`` from ``lam^2 nu`` and ``2 lam + nu``."""
    A = np.moveaxis(_as_points(J), -1, 0)
    det = np.linalg.det(A)
    tr = np.trace(A, axis1=1, axis2=2)
    return (float(np.abs(det - params.lam ** 2 * params.nu).max()),
            float(np.abs(tr - (2 * params.lam + params.nu)).max()))


@dataclass
class AxisField:
    n: np.ndarray                 # (3, ...) unit vectors, n3 >= 0
    reconstruction_error: float
    min_abs_n3: float
    max_deviation: float


def axis_from_vector(nvec, params):
    """``nu n (x) n + lam (I - n (x) n)`` from a unit vector field."""
    n = np.asarray(nvec, dtype=float)
    nn = np.einsum("i...,j...->ij...", n, n)
    eye = np.eye(3).reshape((3, 3) + (1,) * (n.ndim - 1))
    return params.nu * nn + params.lam * (eye - nn)


def axis_field(J, params, threshold=1e-6):
    """Unit eigenvector of ``J`` for the eigenvalue ``nu`` (sign fixed by ``n3 >= 0``).

    Raises ``NumericalError`` when the spectrum deviates from ``{lam, lam, nu}``
    by more than ``threshold`` at some point (the axis is then ill-defined).
    """
    J = np.asarray(J, dtype=float)
    w, V = _eig(J)
    dev = np.abs(w - target_spectrum(params)).max(axis=1)
    if dev.max() > threshold:
        i = int(np.argmax(dev))
        raise NumericalError(f"spectrum deviation {dev.max():.3e} > {threshold:g} at point {i}: axis ill-defined")
    col = 2 if params.nu > params.lam else 0
    n = V[:, :, col]
    sign = np.where(n[:, 2] < 0, -1.0, 1.0)
    n = n * sign[:, None]
    n = np.moveaxis(n, 0, -1).reshape((3,) + J.shape[2:])
    rec = axis_from_vector(n, params)
    err = float(np.abs(rec - J).max())
    return AxisField(n, err, float(np.abs(n[2]).min()), float(dev.max()))


@dataclass
class RigidityReport:
    applicable: bool
    K_inf: float
    max_deviation: float
    margin: float                 # min over grid of 2|a| - |K|
    holds: bool
    tol: float
    violations: int
    min_abs_n3: float | None

    def to_dict(self):
        return asdict(self)


def rigidity_check(K, params, tol=1e-10):
    """Check ``|K(x)| <= 2 |a(x)| + tol`` pointwise when ``||K||_inf <= nu - lam``.

    ``K`` is a physical ``(3, 3, ...)`` field.  ``|.|`` is the Frobenius norm.
    """
    K = np.asarray(K, dtype=float)
    Kn = np.sqrt(np.sum(K ** 2, axis=(0, 1)))
    an = np.sqrt(K[0, 2] ** 2 + K[1, 2] ** 2)
    kinf = float(Kn.max(initial=0.0))
    J = K + params.J_eq.reshape((3, 3) + (1,) * (K.ndim - 2))
    dev = spectrum_persistence_check(J, params)
    applicable = kinf <= abs(params.nu - params.lam)
    margin = float((2 * an - Kn).min()) if Kn.size else 0.0
    viol = int(np.sum(Kn > 2 * an + tol))
    n3 = None
    if kinf > 0:
        try:
            n3 = axis_field(J, params, threshold=max(1e-6, 10 * dev)).min_abs_n3
        except NumericalError:
            n3 = None
    return RigidityReport(applicable, kinf, dev, margin, (viol == 0) if applicable else True,
                          tol, viol if applicable else 0, n3)


def rigidity_check_state(Z, params, tol=1e-10, N=None):
    K = coeffs_to_physical(Z.K.coeffs, N or Z.K.grid.phys_size)
    return rigidity_check(K, params, tol)


def a_from_axis(nvec, params):
    """``a = (nu - lam) n3 nbar``."""
    n = np.asarray(nvec, dtype=float)
    return (params.nu - params.lam) * n[2] * n[:2]


def rotation_factorization_check(J0, theta, params, t_end=1.0, rtol=1e-12, atol=1e-14):
    """Uniform fields: ``J(t) = Q J0 Q^T`` with ``Q' = (Omega_eq + Theta) Q``.

    Integrates ``J' = [Omega_eq + Theta, J]`` with a high-order adaptive
    solver and compares against ``Q = exp(t (Omega_eq + Theta))``.
    Returns the maximum entry-wise discrepancy over the sampled times.
    """
    W = ten(params.omega_eq + np.asarray(theta, dtype=float))
    J0 = np.asarray(J0, dtype=float)

    def f(t, y):
        J = y.reshape(3, 3)
        return (W @ J - J @ W).ravel()

    ts = np.linspace(0.0, t_end, 11)
    sol = solve_ivp(f, (0.0, t_end), J0.ravel(), method="DOP853", t_eval=ts, rtol=rtol, atol=atol)
    if not sol.success:
        raise NumericalError(sol.message)
    err = 0.0
    for i, t in enumerate(ts):
        Q = sla.expm(t * W)
        err = max(err, float(np.abs(sol.y[:, i].reshape(3, 3) - Q @ J0 @ Q.T).max()))
    return err
