"""Batched polynomial roots via companion matrices."""

from __future__ import annotations

import itertools

import numpy as np


def companion(P):
    """Companion matrices of polynomials stacked on the last axis (highest first)."""
    P = np.asarray(P, dtype=complex)
    n = P.shape[-1] - 1
    M = np.zeros(P.shape[:-1] + (n, n), dtype=complex)
    M[..., 0, :] = -P[..., 1:] / P[..., :1]
    idx = np.arange(1, n)
    M[..., idx, idx - 1] = 1.0
    return M


def polyval(P, x):
    """Horner evaluation; ``P`` has shape (..., n+1), ``x`` broadcasts against (...)."""
    P = np.asarray(P)
    out = np.zeros(np.broadcast_shapes(P.shape[:-1], np.shape(x)), dtype=complex)
    for j in range(P.shape[-1]):
        out = out * x + P[..., j]
    return out


def polyder(P):
    P = np.asarray(P)
    n = P.shape[-1] - 1
    return P[..., :-1] * np.arange(n, 0, -1)


def sort_roots(r):
    """Sort by descending real part, ties by ascending imaginary part."""
    r = np.asarray(r)
    re = np.round(r.real, 12)
    order = np.lexsort((r.imag, -re), axis=-1)
    return np.take_along_axis(r, order, axis=-1)


def poly_roots(P, polish=True, sort=True):
    """Roots of a batch of polynomials.

    Parameters
    ----------
    P : array_like, shape (..., n+1)
        Coefficients, highest degree first.
    polish : bool
        Apply one Newton step per isolated root.
    """
    P = np.asarray(P, dtype=complex)
    r = np.linalg.eigvals(companion(P))
    if polish:
        dP = polyder(P)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            f = polyval(P[..., None, :], r)
            df = polyval(dP[..., None, :], r)
            step = f / df
        # near a cluster Newton is unreliable: the step must stay well inside the
        # distance to the nearest other root
        gaps = np.abs(r[..., :, None] - r[..., None, :])
        n = r.shape[-1]
        gaps[..., np.arange(n), np.arange(n)] = np.inf
        nearest = gaps.min(axis=-1)
        good = np.isfinite(step) & (np.abs(step) < 1e-3 * nearest)
        r = np.where(good, r - step, r)
        r = _refine_clusters(P, r)
    return sort_roots(r) if sort else r


def _refine_clusters(P, r, rel=1e-4, isolation=1e-3):
    """Recompute tight root clusters from the factor left after deflating the rest.

    The companion eigenvalues of a near-multiple root carry errors of order
    sqrt(machine epsilon); dividing out the well-separated roots leaves a
    low-degree factor whose roots are consistent with the coefficients.
    Exact trailing zero coefficients are split off as exact zero roots first.
    """
    flat_P = P.reshape(-1, P.shape[-1])
    flat_r = r.reshape(-1, r.shape[-1]).copy()
    flagged = _close_pairs(flat_r, rel, isolation).any(axis=(-2, -1)) | (flat_P[:, -1] == 0)
    for b in np.flatnonzero(flagged):
        cand = _refine_one(flat_P[b], flat_r[b], rel, isolation)
        if reconstruction_error(flat_P[b], cand) <= reconstruction_error(flat_P[b], flat_r[b]):
            flat_r[b] = cand
    return flat_r.reshape(r.shape)


def _close_pairs(roots, rel, isolation):
    """Pairs inside a tight cluster.

    A pair is close when its distance is within ``rel`` of its size, or when
    it belongs to a subset whose diameter is below ``isolation`` times its
    distance to the remaining roots. ``roots`` has shape (..., n); the
    result has shape (..., n, n).
    """
    n = roots.shape[-1]
    dist = np.abs(roots[..., :, None] - roots[..., None, :])
    scale = np.maximum(np.abs(roots[..., :, None]), np.abs(roots[..., None, :]))
    close = dist <= rel * scale
    for size in range(2, n):
        for S in itertools.combinations(range(n), size):
            rest = [k for k in range(n) if k not in S]
            inner = dist[..., list(S), :][..., :, list(S)]
            diam = inner.max(axis=(-2, -1))
            sep = dist[..., list(S), :][..., :, rest].min(axis=(-2, -1))
            hit = diam <= isolation * sep
            for i, j in itertools.combinations(S, 2):
                close[..., i, j] |= hit
                close[..., j, i] |= hit
    idx = np.arange(n)
    close[..., idx, idx] = False
    return close


def _refine_one(P, roots, rel, isolation):
    n = len(roots)
    nz = np.flatnonzero(P != 0)
    t = n - nz[-1] if len(nz) else 0
    if 0 < t < n:
        rest = P[:n + 1 - t]
        return np.concatenate([np.zeros(t, dtype=complex), poly_roots(rest, sort=False)])
    roots = roots.copy()
    close = _close_pairs(roots, rel, isolation)
    for i in range(n):
        if not close[i].any():
            continue
        members = np.flatnonzero(close[i] | (np.arange(n) == i))
        close[np.ix_(members, members)] = False
        others = np.delete(roots, members)
        if len(others) == 0:
            continue
        # deflate smaller roots forward and larger ones backward (as small
        # roots of the reversed polynomial), the stable order for each
        size = np.abs(roots[members]).max()
        others = others[np.argsort(np.abs(others))]
        q = P
        for x in others[np.abs(others) <= size]:
            q, _ = np.polydiv(q, np.array([1.0, -x]))
        q = q[::-1]
        for x in others[np.abs(others) > size][::-1]:
            q, _ = np.polydiv(q, np.array([1.0, -1.0 / x]))
        factor = q[::-1]
        if len(members) == 2:
            roots[members] = _quadratic(factor)
        else:
            # rescale so the factor's coefficients are of order one
            scale = np.abs(roots[members]).max()
            if scale == 0:
                scale = 1.0
            scaled = factor * scale ** np.arange(len(factor) - 1, -1, -1)
            roots[members] = scale * np.roots(scaled)
    return roots


def _quadratic(q):
    """Both roots of ``q[0] x^2 + q[1] x + q[2]`` without cancellation."""
    a, b, c = (complex(v) for v in q)
    d = np.sqrt(b * b - 4 * a * c)
    if (np.conj(b) * d).real < 0:
        d = -d
    s = -(b + d) / 2
    if s == 0:
        return np.zeros(2, dtype=complex)
    return np.array([s / a, c / s])


def reconstruction_error(P, r):
    """Coefficientwise relative error of ``lead * prod(x - r)`` against ``P``.

    Each coefficient is compared with the size of the terms that form it,
    ``|lead| e_j(|r|)``, so a polynomial whose roots span many orders of
    magnitude (a tiny leading coefficient) is judged on the same footing as
    a well-scaled one.
    """
    P = np.asarray(P, dtype=complex)
    r = np.asarray(r)

    def expand(roots):
        out = np.ones(roots.shape[:-1] + (1,), dtype=roots.dtype)
        for j in range(roots.shape[-1]):
            shifted = np.concatenate([out, np.zeros_like(out[..., :1])], axis=-1)
            shifted[..., 1:] -= roots[..., j:j + 1] * out
            out = shifted
        return out

    lead = P[..., :1]
    rebuilt = expand(r) * lead
    size = np.abs(expand(-np.abs(r).astype(complex))) * np.abs(lead)
    size = np.maximum(size, np.abs(P))
    diff = np.abs(rebuilt - P)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(diff == 0, 0.0, diff / size)
    return np.max(rel, axis=-1)


def discriminant_ratio(P):
    """Scale-free discriminant of one polynomial.

    Determinant of the Sylvester matrix of ``P`` and ``P'`` divided by the
    Hadamard bound of its rows, so that values near zero signal a multiple
    root independently of coefficient scaling.
    """
    P = np.asarray(P, dtype=complex)
    dP = polyder(P)
    n = len(P) - 1
    size = 2 * n - 1
    S = np.zeros((size, size), dtype=complex)
    for i in range(n - 1):
        S[i, i:i + n + 1] = P
    for i in range(n):
        S[n - 1 + i, i:i + n] = dP
    bound = np.prod(np.linalg.norm(S, axis=1))
    return complex(np.linalg.det(S) / bound)
