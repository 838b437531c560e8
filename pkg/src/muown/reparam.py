"""Row-wise weight-normalization reparameterization and its gradient transforms.

An effective weight ``W`` with nonzero rows factors as
``W = Diag(g / ||R||_row) @ R``: ``g`` carries the (signed) row magnitudes,
``R`` the direction, and ``D = Diag(1/||R||_row) @ R`` the row-normalized
direction. The transforms below turn a raw gradient ``dW`` into the exact
gradients with respect to ``g`` and ``R`` under this parameterization:

    grad_g = diag(dW @ D^T)                (per-row radial component)
    grad_R = Diag(g/r) @ Proj_D(dW)        (per-row tangential component)

``grad_R`` rows are orthogonal to the matching rows of ``D`` by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ZeroRowError
from .linalg import as_matrix, as_vector, proj_radial, row_norms

# Rows at or below this norm are rejected outright: the decomposition is
# undefined for zero rows and silent regularization would mask caller bugs.
EPS_ROW = 1e-30


def _check_rows_nonzero(norms: np.ndarray) -> np.ndarray:
    bad = np.abs(norms) <= EPS_ROW
    if np.any(bad):
        i = int(np.argmax(bad))
        raise ZeroRowError(i, float(norms[i]))
    return norms


@dataclass(frozen=True)
class ReparamView:
    """One layer's decomposition: magnitudes g, row norms r, carrier R, unit-row D."""

    g: np.ndarray
    r: np.ndarray
    R: np.ndarray
    D: np.ndarray


def init_view(w) -> ReparamView:
    """Decompose an effective weight, starting from exactly that weight.

    Sets R = W and g = r = ||W||_row, which makes g/r an exact 1.0 per row,
    so ``recompose`` reproduces W bitwise at initialization.
    """
    w = as_matrix(w)
    r = _check_rows_nonzero(row_norms(w))
    d = w / r[:, None]
    return ReparamView(g=r.copy(), r=r, R=w.copy(), D=d)


def view_from_state(w, g, r) -> ReparamView:
    """Rebuild the (R, D) view from stored state: R = Diag(r/g) @ W, D = Diag(1/r) @ R.

    ``r`` is the cached row-norm vector of the carrier (optimizer state), not
    recomputed from W: the carrier's scale is independent state. By the layer
    invariant ||W||_row = |g|, the reconstructed R has row norms r again.
    """
    w = as_matrix(w)
    g = as_vector(g)
    r = as_vector(r)
    _check_rows_nonzero(g)
    _check_rows_nonzero(r)
    big_r = (r / g)[:, None] * w
    d = big_r / r[:, None]
    return ReparamView(g=g, r=r, R=big_r, D=d)


def recompose(g, big_r) -> np.ndarray:
    """Effective weight Diag(g / ||R||_row) @ R."""
    g = as_vector(g)
    big_r = as_matrix(big_r)
    if g.shape[0] != big_r.shape[0]:
        raise ValueError(f"g length {g.shape[0]} != R rows {big_r.shape[0]}")
    r = _check_rows_nonzero(row_norms(big_r))
    return (g / r)[:, None] * big_r


def grad_g(grad_w, d) -> np.ndarray:
    """Per-row inner product of the raw gradient with the unit directions."""
    grad_w = as_matrix(grad_w)
    d = as_matrix(d)
    if grad_w.shape != d.shape:
        raise ValueError(f"shape mismatch {grad_w.shape} vs {d.shape}")
    return np.sum(grad_w * d, axis=1)


def grad_R(grad_w, g, r, d) -> np.ndarray:
    """Direction gradient Diag(g/r) @ Proj_D(grad_w); rows orthogonal to D rows."""
    g = as_vector(g)
    r = as_vector(r)
    _check_rows_nonzero(r)
    if g.shape != r.shape:
        raise ValueError("g and r must have equal length")
    return (g / r)[:, None] * proj_radial(grad_w, d)
