"""Input validation helpers shared across the package."""

from __future__ import annotations

import numbers

import numpy as np


def check_matrix(G, name: str = "G") -> np.ndarray:
    """Validate a gradient matrix and return it as a float64 2-D array.

    Columns are per-task gradients. Requires at least one row and one
    column and all entries finite.
    """
    G = np.asarray(G, dtype=np.float64)
    if G.ndim == 1:
        G = G.reshape(-1, 1)
    if G.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got ndim={G.ndim}")
    if G.shape[0] < 1 or G.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and one column, got {G.shape}")
    if not np.all(np.isfinite(G)):
        raise ValueError(f"{name} contains non-finite entries")
    return G


def check_square_symmetric(M, rtol: float = 1e-10, name: str = "M") -> np.ndarray:
    """Validate a square symmetric matrix (relative asymmetry <= rtol)."""
    M = check_matrix(M, name=name)
    n, m = M.shape
    if n != m:
        raise ValueError(f"{name} must be square, got {M.shape}")
    scale = np.abs(M).max()
    asym = np.abs(M - M.T).max()
    if asym > rtol * max(scale, 1e-300):
        raise ValueError(f"{name} is not symmetric: max asymmetry {asym:.3e} (scale {scale:.3e})")
    return M


def check_weights(weights, n_tasks: int) -> np.ndarray:
    """Validate task weights; ``None`` yields the uniform 1/T default."""
    if weights is None:
        return np.full(n_tasks, 1.0 / n_tasks)
    w = np.asarray(weights, dtype=np.float64).ravel()
    if w.shape[0] != n_tasks:
        raise ValueError(f"weights has length {w.shape[0]}, expected {n_tasks}")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights contains non-finite entries")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    if not np.any(w > 0):
        raise ValueError("at least one weight must be positive")
    return w


def check_rng(random_state) -> np.random.Generator:
    """Coerce a seed or Generator into a numpy Generator."""
    if isinstance(random_state, np.random.Generator):
        return random_state
    if random_state is None or isinstance(random_state, numbers.Integral):
        return np.random.default_rng(random_state)
    raise TypeError(f"random_state must be None, an int seed or a Generator, got {type(random_state)!r}")
