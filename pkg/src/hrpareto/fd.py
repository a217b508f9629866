"""Central finite differences evaluated on a single batched stencil."""
from __future__ import annotations

from typing import Callable

import numpy as np

REL_STEP = 1e-4


def steps(x: np.ndarray, rel: float = REL_STEP) -> np.ndarray:
    return rel * np.maximum(1.0, np.abs(x))


def grad_hess(f: Callable[[np.ndarray], np.ndarray], x: np.ndarray,
              h: np.ndarray | None = None, hessian: bool = True):
    """Value, gradient and (optionally) Hessian of ``f`` at ``x``.

    ``f`` maps an (m, p) array of points to m values.  All stencil points
    are passed in one call so that ``f`` can vectorize.
    """
    x = np.asarray(x, dtype=float)
    p = x.shape[0]
    h = steps(x) if h is None else np.asarray(h, dtype=float)
    E = np.diag(h)
    pts = [x[None, :], x + E, x - E]
    pairs = []
    if hessian:
        for i in range(p):
            for j in range(i + 1, p):
                pairs.append((i, j))
        if pairs:
            ii = np.array([q[0] for q in pairs])
            jj = np.array([q[1] for q in pairs])
            for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                pts.append(x + si * E[ii] + sj * E[jj])
    vals = np.asarray(f(np.vstack(pts)), dtype=float)
    f0 = vals[0]
    fp = vals[1:1 + p]
    fm = vals[1 + p:1 + 2 * p]
    g = (fp - fm) / (2 * h)
    if not hessian:
        return f0, g
    H = np.diag((fp - 2 * f0 + fm) / h ** 2)
    if pairs:
        m = len(pairs)
        base = 1 + 2 * p
        fpp, fpm, fmp, fmm = (vals[base + k * m: base + (k + 1) * m] for k in range(4))
        off = (fpp - fpm - fmp + fmm) / (4 * h[ii] * h[jj])
        H[ii, jj] = off
        H[jj, ii] = off
    return f0, g, H
