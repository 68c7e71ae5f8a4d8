"""Compiled inner loops for the two optimization hot spots.

Both kernels are strictly sequential with fixed visiting order, so results
are deterministic for identical inputs.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def dual_cd_kernel(K, y, C, tol, max_passes, alpha, v):
    """Hinge-loss dual coordinate descent over a Gram matrix, in place.

    Coordinates are visited in index order.  Bound-and-violating
    coordinates are shrunk from later passes and reactivated whenever a
    pass makes no progress, so the final state is either a duality-gap
    certificate (gap <= tol over all samples) or a full
    Karush-Kuhn-Tucker sweep with no remaining updates.
    Returns the number of passes run.
    """
    n = K.shape[0]
    active = np.ones(n, dtype=np.bool_)
    passes = 0
    while passes < max_passes:
        passes += 1
        changed = False
        for i in range(n):
            if not active[i]:
                continue
            g = y[i] * v[i] - 1.0
            a = alpha[i]
            if a == 0.0 and g > 0.0:
                active[i] = False
                continue
            if a == C and g < 0.0:
                active[i] = False
                continue
            a_new = a - g / K[i, i]
            if a_new < 0.0:
                a_new = 0.0
            elif a_new > C:
                a_new = C
            delta = a_new - a
            if delta != 0.0:
                dy = delta * y[i]
                for j in range(n):
                    v[j] += dy * K[i, j]
                alpha[i] = a_new
                changed = True
        quad = 0.0
        asum = 0.0
        loss = 0.0
        for i in range(n):
            quad += alpha[i] * y[i] * v[i]
            asum += alpha[i]
            m = 1.0 - y[i] * v[i]
            if m > 0.0:
                loss += m
        gap = 0.5 * quad + C * loss - (asum - 0.5 * quad)
        if gap <= tol:
            break
        if not changed:
            all_active = True
            for i in range(n):
                if not active[i]:
                    all_active = False
                    break
            if all_active:
                break  # coordinate-wise optimal everywhere
            for i in range(n):
                active[i] = True
    return passes


@njit(cache=True)
def som_epoch_kernel(nodes, norms, patterns, order, h, alpha):
    """One online epoch: winner search plus fused neighborhood update.

    ``norms`` caches per-node squared norms for the winner search and is
    kept current as nodes move.  Neighborhood weights below 1e-6 are
    skipped.
    """
    n, d = nodes.shape
    for oi in range(order.shape[0]):
        x = patterns[order[oi]]
        best = 0
        best_score = np.inf
        for j in range(n):
            acc = 0.0
            for t in range(d):
                acc += nodes[j, t] * x[t]
            score = norms[j] - 2.0 * acc
            if score < best_score:
                best_score = score
                best = j
        for j in range(n):
            hw = h[best, j]
            if hw > 1e-6:
                w = alpha * hw
                nn = 0.0
                for t in range(d):
                    val = nodes[j, t] + w * (x[t] - nodes[j, t])
                    nodes[j, t] = val
                    nn += val * val
                norms[j] = nn
