"""Real spherical harmonics up to degree 7.

Orthonormal basis without the Condon-Shortley phase, flattened in
(l ascending, m = -l..l) order, so index ``l * l + l + m`` holds Y_l^m.
View directions are inputs, never differentiated.
"""

import numpy as np

from ._sh_poly import MAX_DEGREE, eval_sh_poly
from .errors import DomainError

__all__ = ["MAX_DEGREE", "eval_sh", "sh_count", "sh_index"]


def sh_count(degree: int) -> int:
    return (degree + 1) ** 2


def sh_index(l: int, m: int) -> int:
    return l * l + l + m


def eval_sh(degree: int, d, tol=1e-6):
    """Evaluate the basis at unit direction(s) ``d`` of shape (..., 3).

    Returns an array of shape (..., (degree + 1) ** 2) in the dtype of ``d``.
    """
    if not 0 <= degree <= MAX_DEGREE:
        raise DomainError(f"SH degree {degree} unsupported (0..{MAX_DEGREE})")
    d = np.asarray(d)
    if d.dtype.kind != "f":
        d = d.astype(np.float64)
    if d.shape[-1] != 3:
        raise DomainError(f"direction must have 3 components, got shape {d.shape}")
    norms = np.linalg.norm(d.astype(np.float64), axis=-1)
    if np.any(np.abs(norms - 1.0) > tol):
        raise DomainError("view direction is not unit length")
    out = np.empty(d.shape[:-1] + (sh_count(degree),), dtype=d.dtype)
    return eval_sh_poly(degree, d[..., 0], d[..., 1], d[..., 2], out)
