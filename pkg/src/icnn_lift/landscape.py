"""Two-dimensional loss slices with filter-normalized axes.

Vectors are flat; ``blocks`` lists the ``(start, stop)`` ranges of each layer
tensor. Filter normalization rescales every block of an axis to the norm of
the anchor's block. The second axis is orthogonalized against the first
block by block, so the rescaling keeps the axes orthogonal.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

SPACES = ("constrained", "lifted", "random")


@dataclass
class SlicePlane:
    anchor: np.ndarray
    axis1: np.ndarray
    axis2: np.ndarray
    space: str
    blocks: list


def top_components(snapshots, k: int):
    """Top ``k`` principal directions of the centered ``(S, D)`` snapshot matrix.

    Uses the eigendecomposition of the ``S x S`` Gram matrix, which is the
    cheap side when snapshots are few and parameters many. Returns
    ``(directions (k, D), eigenvalues (k,))``.
    """
    X = np.asarray(snapshots, dtype=np.float64)
    X = X - X.mean(axis=0)
    G = X @ X.T
    w, V = np.linalg.eigh(G)
    order = np.argsort(w)[::-1][:k]
    dirs, vals = [], []
    for i in order:
        lam = max(w[i], 0.0)
        u = X.T @ V[:, i]
        n = np.linalg.norm(u)
        dirs.append(u / n if n > 0 else u)
        vals.append(lam)
    return np.array(dirs), np.array(vals)


def _blockwise_orthogonalize(v, ref, blocks):
    v = v.copy()
    for lo, hi in blocks:
        r = ref[lo:hi]
        rr = r @ r
        if rr > 0:
            v[lo:hi] -= (v[lo:hi] @ r) / rr * r
    return v


def filter_normalize(direction, anchor, blocks):
    out = np.zeros_like(direction)
    for lo, hi in blocks:
        dn = np.linalg.norm(direction[lo:hi])
        an = np.linalg.norm(anchor[lo:hi])
        if dn > 0 and an > 0:
            out[lo:hi] = direction[lo:hi] * (an / dn)
    return out


def _random_orthogonal(ref, blocks, rng):
    v = rng.standard_normal(ref.shape)
    return _blockwise_orthogonalize(v, ref, blocks)


def _tiny(v, scale):
    return np.linalg.norm(v) <= 1e-12 * max(scale, 1.0)


def build_plane(space, anchor, other_end=None, snapshots=None, blocks=None, rng=None) -> SlicePlane:
    if space not in SPACES:
        raise ValueError(f"unknown space {space!r}; expected one of {SPACES}")
    anchor = np.asarray(anchor, dtype=np.float64).ravel()
    blocks = blocks or [(0, anchor.size)]
    rng = rng or np.random.default_rng(0)
    snaps = None if snapshots is None else np.asarray(snapshots, dtype=np.float64)
    scale = float(np.linalg.norm(anchor))

    if space == "random":
        a1 = rng.standard_normal(anchor.size)
        a2 = _blockwise_orthogonalize(rng.standard_normal(anchor.size), a1, blocks)
    elif space == "constrained":
        if other_end is None:
            raise ValueError("constrained plane needs the other converged endpoint")
        a1 = np.asarray(other_end, dtype=np.float64).ravel() - anchor
        if not np.any(a1):
            raise ValueError("endpoints coincide: the first axis is the zero vector")
        cand = top_components(snaps, 1)[0][0] if snaps is not None and len(snaps) >= 2 else np.zeros_like(a1)
        a2 = _blockwise_orthogonalize(cand, a1, blocks)
    else:
        if snaps is None or len(snaps) < 3:
            raise ValueError("lifted plane needs at least 3 snapshots")
        dirs, vals = top_components(snaps, 2)
        if vals[0] <= 0:
            raise ValueError("snapshots do not move: no principal direction")
        a1 = dirs[0]
        a2 = _blockwise_orthogonalize(dirs[1] if len(dirs) > 1 else np.zeros_like(a1), a1, blocks)
        if len(vals) < 2 or vals[1] <= 1e-12 * vals[0]:
            a2 = np.zeros_like(a1)

    a1n = filter_normalize(a1, anchor, blocks)
    a2n = filter_normalize(a2, anchor, blocks)
    if _tiny(a2n, scale) or _tiny(a2, 1.0):
        warnings.warn("snapshot matrix is rank deficient; using a random orthogonal second axis", RuntimeWarning)
        a2n = filter_normalize(_random_orthogonal(a1, blocks, rng), anchor, blocks)
    if not np.any(a1n):
        raise ValueError("first axis vanishes after filter normalization")
    return SlicePlane(anchor, a1n, a2n, space, list(blocks))


def grid_coords(resolution: int = 41, extent: float = 1.5):
    """Symmetric coordinates containing exactly 0 at the centre (odd resolution)."""
    if resolution < 1 or resolution % 2 == 0:
        raise ValueError("resolution must be a positive odd number")
    m = (resolution - 1) // 2
    if m == 0:
        return np.zeros(1)
    return extent * np.arange(-m, m + 1) / m


def evaluate_grid(plane: SlicePlane, loss_fn, resolution: int = 41, extent: float = 1.5):
    """Loss on the ``(a, b)`` grid. Non-finite values are recorded as ``nan``.

    Returns ``(a, b, losses, feasible)``; ``losses[i, j]`` sits at ``(a[i], b[j])``.
    """
    c = grid_coords(resolution, extent)
    L = np.full((c.size, c.size), np.nan)
    for i, a in enumerate(c):
        for j, b in enumerate(c):
            v = plane.anchor + a * plane.axis1 + b * plane.axis2
            try:
                val = float(loss_fn(v))
            except (FloatingPointError, ValueError, OverflowError):
                val = float("nan")
            if np.isfinite(val):
                L[i, j] = val
    return c, c.copy(), L, np.isfinite(L)


def project_trajectory(plane: SlicePlane, snapshots):
    """Least-squares ``(a, b)`` of each snapshot relative to the anchor."""
    S = np.atleast_2d(np.asarray(snapshots, dtype=np.float64)) - plane.anchor
    A = np.stack([plane.axis1, plane.axis2], axis=1)
    coef, *_ = np.linalg.lstsq(A, S.T, rcond=None)
    return coef.T
