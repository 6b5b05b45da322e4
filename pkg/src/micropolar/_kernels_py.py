"""Pure numpy versions of the pointwise 3x3 kernels.

Every kernel works on arrays whose leading axes are tensor slots and whose
trailing axis is a flat list of points: vectors are ``(3, P)`` and matrices
``(3, 3, P)``.  The compiled module in ``_kernels_c`` exposes the same
functions with the same signatures.
"""

import numpy as np


def matvec(A, v):
    """Pointwise ``A @ v``."""
    return np.einsum("ijp,jp->ip", A, v)


def matmat(A, B):
    return np.einsum("ijp,jkp->ikp", A, B)


def cross(a, b):
    out = np.empty(np.broadcast_shapes(a.shape, b.shape))
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


def advect(u, grad):
    """Directional derivative ``sum_j u_j grad[c, j]`` for a ``(C, 3, P)`` gradient."""
    return np.einsum("jp,cjp->cp", u, grad)


def commutator_ten(w, S):
    """``[ten(w), S]`` where ``ten(w) v = w x v``."""
    W = np.zeros((3, 3) + w.shape[1:])
    W[0, 1], W[0, 2] = -w[2], w[1]
    W[1, 0], W[1, 2] = w[2], -w[0]
    W[2, 0], W[2, 1] = -w[1], w[0]
    return matmat(W, S) - matmat(S, W)


def sym_solve(S, b):
    """Solve ``S x = b`` pointwise for symmetric ``S`` via the adjugate."""
    s00, s01, s02 = S[0, 0], S[0, 1], S[0, 2]
    s11, s12, s22 = S[1, 1], S[1, 2], S[2, 2]
    c00 = s11 * s22 - s12 * s12
    c01 = s02 * s12 - s01 * s22
    c02 = s01 * s12 - s02 * s11
    c11 = s00 * s22 - s02 * s02
    c12 = s01 * s02 - s00 * s12
    c22 = s00 * s11 - s01 * s01
    det = s00 * c00 + s01 * c01 + s02 * c02
    x = np.empty_like(b)
    x[0] = (c00 * b[0] + c01 * b[1] + c02 * b[2]) / det
    x[1] = (c01 * b[0] + c11 * b[1] + c12 * b[2]) / det
    x[2] = (c02 * b[0] + c12 * b[1] + c22 * b[2]) / det
    return x


def sym_eigvalsh(S):
    """Ascending eigenvalues of symmetric 3x3 matrices, closed form.

    Uses the trigonometric solution of the characteristic cubic, which stays
    accurate when two eigenvalues coincide.
    """
    s00, s01, s02 = S[0, 0], S[0, 1], S[0, 2]
    s11, s12, s22 = S[1, 1], S[1, 2], S[2, 2]
    q = (s00 + s11 + s22) / 3.0
    p1 = s01 * s01 + s02 * s02 + s12 * s12
    d0, d1, d2 = s00 - q, s11 - q, s22 - q
    p2 = d0 * d0 + d1 * d1 + d2 * d2 + 2.0 * p1
    p = np.sqrt(p2 / 6.0)
    safe = np.where(p > 0, p, 1.0)
    b00, b11, b22 = d0 / safe, d1 / safe, d2 / safe
    b01, b02, b12 = s01 / safe, s02 / safe, s12 / safe
    detb = (b00 * (b11 * b22 - b12 * b12)
            - b01 * (b01 * b22 - b12 * b02)
            + b02 * (b01 * b12 - b11 * b02))
    r = np.clip(0.5 * detb, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    e_hi = q + 2.0 * p * np.cos(phi)
    e_lo = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    e_mid = 3.0 * q - e_hi - e_lo
    return np.stack([e_lo, e_mid, e_hi])
