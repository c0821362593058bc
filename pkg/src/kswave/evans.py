"""Evans function of the scalar spectral ODE by the compound-matrix method.

The spectral ODE is written as a first-order system ``Y' = M(z, lam) Y``
of order n (3 when eps = 0, 4 otherwise). Bounded solutions need k
directions from the unstable subspace at -inf and n - k from the stable
subspace at +inf. These subspaces are carried as single vectors in the
exterior powers of degree k and n - k, integrated from each end towards
z = 0 with the asymptotic growth rate removed. The Evans function is the
wedge product of the two at z = 0.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .errors import NoGap, OnEssentialSpectrum, StiffIntegration, WindingNotInteger
from .model import WaveProfile
from .operator import abcd, limit_ratios
from .spectral import (SIDES, WeightPair, classify, default_weight, origin_gap, spectral_abscissa,
                       splitting_index)
from . import io


@dataclass
class EvansSample:
    """Evans function value with the integration settings that produced it."""

    lam: complex
    value: complex
    meta: dict = field(default_factory=dict)


@dataclass
class ContourReport:
    """Winding of the Evans function around a closed contour."""

    contour: dict
    winding_number: int
    raw_winding: float
    min_abs_D: float
    samples: int
    lam: np.ndarray = field(repr=False, default=None)
    values: np.ndarray = field(repr=False, default=None)

    def to_json(self):
        return {"contour": self.contour, "winding_number": self.winding_number,
                "raw_winding": self.raw_winding, "min_abs_D": self.min_abs_D, "samples": self.samples}

    def to_csv(self, path):
        return io.write_csv(path, ["ReLambda", "ImLambda", "ReD", "ImD"],
                            [self.lam.real, self.lam.imag, self.values.real, self.values.imag])


# ---------------------------------------------------------------------------
# exterior algebra


def compound_entries(n, k):
    """Sparse description of the k-th additive compound of an n x n matrix.

    Returns the list of index sets and an integer array of rows
    ``(row, col, i, j, sign)`` meaning ``C[row, col] += sign * M[i, j]``.
    """
    idx = list(itertools.combinations(range(n), k))
    pos = {I: a for a, I in enumerate(idx)}
    ent = []
    for col, J in enumerate(idx):
        for p in range(k):
            for i in range(n):
                I = list(J)
                I[p] = i
                if len(set(I)) < k:
                    continue
                sign = _perm_sign(I)
                ent.append((pos[tuple(sorted(I))], col, i, J[p], sign))
    return idx, np.array(ent, dtype=np.int64)


def _perm_sign(seq):
    seq = list(seq)
    sign = 1
    for a in range(len(seq)):
        for b in range(a + 1, len(seq)):
            if seq[a] > seq[b]:
                sign = -sign
    return sign


def compound(M, entries, dim):
    """Dense compound matrix of (a batch of) ``M``."""
    out = np.zeros(M.shape[:-2] + (dim, dim), dtype=complex)
    for row, col, i, j, s in entries:
        out[..., row, col] += s * M[..., i, j]
    return out


def wedge_pairing(n, k):
    """Index map and signs for ``phi ^ psi`` with phi in degree k and psi in n - k."""
    idx = list(itertools.combinations(range(n), k))
    idxc = list(itertools.combinations(range(n), n - k))
    cols, signs = [], []
    for I in idx:
        Ic = tuple(x for x in range(n) if x not in I)
        cols.append(idxc.index(Ic))
        signs.append(_perm_sign(list(I) + list(Ic)))
    return np.array(cols), np.array(signs, dtype=float)


# ---------------------------------------------------------------------------
# system matrices


def _row_coeffs(r1, r2, params):
    """Real coefficient samples ``(A0, A1, A2, B0, B1, C0, C1, D0)`` with A = A0 + lam A1 + lam^2 A2."""
    X0 = abcd(r1, r2, 0.0, params)
    Xp = abcd(r1, r2, 1.0, params)
    Xm = abcd(r1, r2, -1.0, params)
    A0, B0, C0, D0 = (np.broadcast_to(np.asarray(x, float), np.shape(r1)) for x in X0)
    A1 = 0.5 * (Xp[0] - Xm[0])
    A2 = 0.5 * (Xp[0] + Xm[0]) - X0[0]
    B1 = 0.5 * (Xp[1] - Xm[1])
    C1 = 0.5 * (Xp[2] - Xm[2])
    return np.array([A0, A1 + 0 * A0, A2 + 0 * A0, B0, B1 + 0 * A0, C0, C1 + 0 * A0, D0], dtype=float)


def system_matrix(r1, r2, lam, params):
    """Companion matrices ``M(z, lam)`` for the first-order form, broadcast over inputs."""
    A, B, C, D = abcd(np.asarray(r1, complex), r2, np.asarray(lam, complex), params)
    A, B, C, D = np.broadcast_arrays(A, B, C, D)
    eps = params.epsilon
    n = 3 if eps == 0.0 else 4
    M = np.zeros(A.shape + (n, n), dtype=complex)
    for i in range(n - 1):
        M[..., i, i + 1] = 1.0
    if n == 3:
        M[..., 2, 0] = -A / D
        M[..., 2, 1] = -B / D
        M[..., 2, 2] = -C / D
    else:
        M[..., 3, 0] = A / eps
        M[..., 3, 1] = B / eps
        M[..., 3, 2] = C / eps
        M[..., 3, 3] = D / eps
    return M


@njit(cache=True)
def _integrate(lams, coef, eps, n, ent, sigma, v0, h, n_steps):
    """RK4 for ``v' = (Lambda M - sigma) v`` on the samples ``coef[:, 2 i]`` at half steps."""
    N = lams.shape[0]
    d = v0.shape[1]
    out = np.empty((N, d), dtype=np.complex128)
    M = np.zeros((n, n), dtype=np.complex128)
    for i in range(n - 1):
        M[i, i + 1] = 1.0
    kk = np.empty((4, d), dtype=np.complex128)
    tmp = np.empty(d, dtype=np.complex128)
    for q in range(N):
        lam = lams[q]
        sg = sigma[q]
        v = v0[q].copy()
        for step in range(n_steps):
            for stage in range(4):
                if stage == 0:
                    j = 2 * step
                    for a in range(d):
                        tmp[a] = v[a]
                elif stage == 1:
                    j = 2 * step + 1
                    for a in range(d):
                        tmp[a] = v[a] + 0.5 * h * kk[0, a]
                elif stage == 2:
                    j = 2 * step + 1
                    for a in range(d):
                        tmp[a] = v[a] + 0.5 * h * kk[1, a]
                else:
                    j = 2 * step + 2
                    for a in range(d):
                        tmp[a] = v[a] + h * kk[2, a]
                A = coef[0, j] + lam * (coef[1, j] + lam * coef[2, j])
                B = coef[3, j] + lam * coef[4, j]
                C = coef[5, j] + lam * coef[6, j]
                D = coef[7, j]
                if n == 3:
                    M[2, 0] = -A / D
                    M[2, 1] = -B / D
                    M[2, 2] = -C / D
                else:
                    M[3, 0] = A / eps
                    M[3, 1] = B / eps
                    M[3, 2] = C / eps
                    M[3, 3] = D / eps
                for a in range(d):
                    kk[stage, a] = -sg * tmp[a]
                for e in range(ent.shape[0]):
                    kk[stage, ent[e, 0]] += ent[e, 4] * M[ent[e, 2], ent[e, 3]] * tmp[ent[e, 1]]
            for a in range(d):
                v[a] += h * (kk[0, a] + 2.0 * kk[1, a] + 2.0 * kk[2, a] + kk[3, a]) / 6.0
        for a in range(d):
            out[q, a] = v[a]
    return out


# ---------------------------------------------------------------------------
# Evans function


class EvansSystem:
    """Evans function machinery for one profile.

    Parameters
    ----------
    profile : WaveProfile
        Any profile with an off-grid evaluator (closed form or BVP).
    L : float, optional
        Half-length of the integration interval; defaults to ``30/c``.
    h : float, optional
        Base step; reduced per lambda where the system is stiff.
    richardson : bool
        Combine steps h and h/2 as ``(16 D_{h/2} - D_h)/15``.
    """

    def __init__(self, profile: WaveProfile, L=None, h=None, richardson=True, lam_ref=None):
        self.profile = profile
        p = self.params = profile.params
        self.n = 3 if p.epsilon == 0.0 else 4
        self.k = splitting_index(p)
        if not 0 < self.k < self.n:
            raise StiffIntegration(f"degenerate splitting k={self.k} for order {self.n}")
        rate = min(p.c, p.left_rate)
        self.L = 30.0 / rate if L is None else float(L)
        self.h = 0.02 / max(p.c, p.left_rate, 1.0) if h is None else float(h)
        self.richardson = richardson
        self.maps = {"minus": compound_entries(self.n, self.k),
                     "plus": compound_entries(self.n, self.n - self.k)}
        self.pair_cols, self.pair_signs = wedge_pairing(self.n, self.k)
        self.lam_ref = p.c**2 if lam_ref is None else lam_ref
        self._ref = {s: None for s in SIDES}
        for side in SIDES:
            v, _, _ = self._asymptotic(np.array([self.lam_ref], complex), side, normalise=False)
            v = v[0]
            j = int(np.argmax(np.abs(v)))
            self._ref[side] = v / v[j]
        self._coef_cache = {}

    def _asymptotic(self, lams, side, normalise=True):
        """Analytically normalised eigenvector of the compound limit matrix and its eigenvalue."""
        r1, r2 = limit_ratios(self.params, side)
        M = system_matrix(r1, r2, lams, self.params)
        idx, ent = self.maps[side]
        Mc = compound(M, ent, len(idx))
        w, V = np.linalg.eig(Mc)
        wl, W = np.linalg.eig(np.swapaxes(Mc, -1, -2))
        j = np.argmax(w.real, axis=-1) if side == "minus" else np.argmin(w.real, axis=-1)
        sig = np.take_along_axis(w, j[:, None], -1)[:, 0]
        r = np.take_along_axis(V, j[:, None, None], -1)[..., 0]
        jl = np.argmin(np.abs(wl - sig[:, None]), axis=-1)
        l = np.take_along_axis(W, jl[:, None, None], -1)[..., 0]
        spread = np.max(np.abs(w - sig[:, None]), axis=-1)
        if normalise:
            v0 = self._ref[side]
            # spectral projection of a fixed vector: analytic in lam
            r = r * (np.sum(l * v0, -1) / np.sum(l * r, -1))[:, None]
        return r, sig, spread

    def _coefficients(self, side, n_steps):
        key = (side, n_steps)
        if key not in self._coef_cache:
            sgn = -1.0 if side == "minus" else 1.0
            z = sgn * self.L * (1.0 - np.arange(2 * n_steps + 1) / (2 * n_steps))
            _, r1, r2, _ = self.profile.ratios(z)
            self._coef_cache[key] = np.ascontiguousarray(_row_coeffs(r1, r2, self.params))
        return self._coef_cache[key]

    def _steps_for(self, spread):
        """Step counts per lambda: base step, shortened to keep h*rate <= 0.5."""
        h = np.minimum(self.h, 0.5 / np.maximum(spread, 1e-300))
        n = np.ceil(self.L / h).astype(np.int64)
        # round up to powers of two times the base count so lambdas share grids
        base = int(math.ceil(self.L / self.h))
        mult = 2 ** np.ceil(np.log2(np.maximum(n / base, 1.0))).astype(np.int64)
        n = base * mult
        if np.any(n > 4_000_000):
            raise StiffIntegration("step count exceeds 4e6; the system is too stiff at these lambda")
        return n

    def _side_vectors(self, lams, side, refine=1):
        v0, sig, spread = self._asymptotic(lams, side)
        steps = self._steps_for(spread) * refine
        out = np.empty_like(v0)
        idx, ent = self.maps[side]
        h_sign = 1.0 if side == "minus" else -1.0
        for ns in np.unique(steps):
            sel = steps == ns
            coef = self._coefficients(side, int(ns))
            out[sel] = _integrate(lams[sel], coef, self.params.epsilon, self.n, ent, sig[sel],
                                  np.ascontiguousarray(v0[sel]), h_sign * self.L / ns, int(ns))
        if not np.all(np.isfinite(out)):
            raise StiffIntegration("compound integration produced non-finite values")
        return out, steps

    def _wedge(self, phi, psi):
        return np.sum(self.pair_signs * phi * psi[:, self.pair_cols], axis=-1)

    def values(self, lams, refine=1):
        """Evans function at an array of lambda (no essential-spectrum check)."""
        lams = np.atleast_1d(np.asarray(lams, dtype=complex))
        phi, s1 = self._side_vectors(lams, "minus", refine)
        psi, s2 = self._side_vectors(lams, "plus", refine)
        D = self._wedge(phi, psi)
        if self.richardson:
            phi2, _ = self._side_vectors(lams, "minus", 2 * refine)
            psi2, _ = self._side_vectors(lams, "plus", 2 * refine)
            D2 = self._wedge(phi2, psi2)
            D = (16.0 * D2 - D) / 15.0
        return D

    def meta(self):
        return {"L": self.L, "h": self.h, "order": self.n, "k_minus": self.k,
                "k_plus": self.n - self.k, "richardson": self.richardson, "lam_ref": self.lam_ref}


def check_off_essential(params, lams, weight: WeightPair, tol=1e-9):
    """Raise :class:`OnEssentialSpectrum` unless every lambda has Fredholm index zero."""
    for lam in np.atleast_1d(lams):
        s = classify(params, complex(lam), weight, tol)
        if s.classification != "weighted-stable":
            raise OnEssentialSpectrum(f"lambda={complex(lam):.6g} is {s.classification} for weight "
                                      f"({weight.nu_minus:.4g}, {weight.nu_plus:.4g})")


def evans_value(profile: WaveProfile, lam, weight: Optional[WeightPair] = None, system=None) -> EvansSample:
    """Evans function at one lambda, refusing points on the weighted essential spectrum."""
    weight = default_weight(profile.params) if weight is None else weight
    check_off_essential(profile.params, [lam], weight)
    sysm = EvansSystem(profile) if system is None else system
    val = complex(sysm.values(np.array([lam]))[0])
    meta = sysm.meta()
    meta["weight"] = [weight.nu_minus, weight.nu_plus]
    return EvansSample(complex(lam), val, meta)


def evans_values(profile: WaveProfile, lams, weight: Optional[WeightPair] = None, system=None):
    """Batched :func:`evans_value` returning a complex array."""
    weight = default_weight(profile.params) if weight is None else weight
    check_off_essential(profile.params, lams, weight)
    sysm = EvansSystem(profile) if system is None else system
    return sysm.values(lams)


# ---------------------------------------------------------------------------
# root counting


def origin_radius(params, weight: WeightPair):
    """Circle radius around 0 inside the spectral gap: ``min(gap, 0.1 c^2)/2``."""
    lo, hi = sorted((-params.left_rate, -params.m * params.left_rate))
    if not params.sublinear or hi - lo <= 0:
        raise NoGap("no weight separates lambda = 0 from the essential spectrum when m = 1")
    gap = origin_gap(params, weight)
    if gap < 1e-8:
        raise NoGap(f"weighted essential spectrum passes through lambda = 0 (gap {gap:.2e})")
    return 0.5 * min(gap, 0.1 * params.c**2), gap


def taylor_coefficients(profile, radius, n_points=64, weight=None, system=None):
    """Scaled Taylor coefficients ``a_j = D^(j)(0) r^j / j!`` from samples on a circle."""
    th = 2.0 * np.pi * np.arange(n_points) / n_points
    lams = radius * np.exp(1j * th)
    vals = evans_values(profile, lams, weight, system)
    return np.fft.fft(vals) / n_points, vals


def multiplicity_at_origin(profile: WaveProfile, weight: Optional[WeightPair] = None, n_points=64,
                           threshold=1e-6, system=None) -> int:
    """Order of the zero of the Evans function at lambda = 0.

    Taylor coefficients come from a discrete Cauchy integral on a circle
    inside the spectral gap; the first coefficient above ``threshold`` times
    the largest ``|D|`` on the circle gives the order.

    Raises
    ------
    NoGap
        If no circle around 0 avoids the weighted essential spectrum.
    """
    params = profile.params
    weight = default_weight(params) if weight is None else weight
    if not params.sublinear:
        raise NoGap("no weight separates lambda = 0 from the essential spectrum when m = 1")
    r, _ = origin_radius(params, weight)
    coeffs, vals = taylor_coefficients(profile, r, n_points, weight, system)
    scale = np.max(np.abs(vals))
    big = np.nonzero(np.abs(coeffs[: n_points // 2]) > threshold * scale)[0]
    if big.size == 0:
        raise NoGap("Evans function vanishes on the whole circle")
    return int(big[0])


def _contour_pieces(radius, delta, excise):
    """Parametrised pieces of the positively oriented boundary."""
    pieces = []
    yR = math.sqrt(radius**2 - delta**2)
    tR = math.atan2(yR, -delta)  # angle of the top corner
    pieces.append(("arc", 0.0, radius, -tR, tR))
    if excise:
        ye = math.sqrt(excise**2 - delta**2)
        te = math.atan2(ye, -delta)
        pieces.append(("line", -delta + 1j * yR, -delta + 1j * ye))
        pieces.append(("arc", 0.0, excise, te, -te))
        pieces.append(("line", -delta - 1j * ye, -delta - 1j * yR))
    else:
        pieces.append(("line", -delta + 1j * yR, -delta - 1j * yR))
    return pieces


def _piece_points(piece, t):
    if piece[0] == "arc":
        _, c0, r, a0, a1 = piece
        return c0 + r * np.exp(1j * (a0 + (a1 - a0) * t))
    _, p0, p1 = piece
    return p0 + (p1 - p0) * t


def _piece_length(piece):
    if piece[0] == "arc":
        return abs(piece[2] * (piece[4] - piece[3]))
    return abs(piece[2] - piece[1])


def contour_scan(profile: WaveProfile, weight: Optional[WeightPair] = None, radius=10.0, delta=None,
                 excise=True, points_per_unit=8, max_refine=8, system=None) -> ContourReport:
    """Winding number of the Evans function around ``{Re lam >= -delta, |lam| <= radius}``.

    With ``excise`` a small disc around the origin (radius from
    :func:`origin_radius`) is removed, so the count excludes the double root
    at 0. Segments whose argument jumps by more than pi/4 are bisected.

    Raises
    ------
    OnEssentialSpectrum
        If the contour meets the weighted essential spectrum.
    WindingNotInteger
        If the accumulated argument is not within 0.05 of a multiple of 2 pi.
    """
    params = profile.params
    weight = default_weight(params) if weight is None else weight
    r_ex, gap = origin_radius(params, weight)
    for side in SIDES:
        a = spectral_abscissa(params, weight.on(side), side)
        if a >= 0.0:
            raise OnEssentialSpectrum(f"weighted essential spectrum of the {side} end reaches "
                                      f"Re lam = {a:.4g} >= 0; the contour cannot avoid it")
    if delta is None:
        abscissa = max(spectral_abscissa(params, weight.on(s), s) for s in SIDES)
        delta = 0.5 * min(r_ex, -abscissa)
    delta = float(delta)
    pieces = _contour_pieces(radius, delta, r_ex if excise else 0.0)
    sysm = EvansSystem(profile) if system is None else system
    ts, lams = [], []
    for pi, piece in enumerate(pieces):
        m = max(16, int(math.ceil(points_per_unit * _piece_length(piece))))
        t = np.linspace(0.0, 1.0, m + 1)[:-1]
        ts.append(np.column_stack([np.full(m, pi), t]))
        lams.append(_piece_points(piece, t))
    key = np.concatenate(ts)
    lam = np.concatenate(lams)
    check_off_essential(params, lam, weight)
    val = sysm.values(lam)
    for _ in range(max_refine):
        nxt = np.roll(np.arange(len(lam)), -1)
        jump = np.abs(np.angle(val[nxt] / val))
        bad = np.nonzero(jump > np.pi / 4)[0]
        if bad.size == 0:
            break
        new_key = []
        for b in bad:
            p0, t0 = key[b]
            p1, t1 = key[nxt[b]]
            if p1 != p0:
                t1 = 1.0
            new_key.append((p0, 0.5 * (t0 + t1)))
        new_key = np.array(new_key)
        new_lam = np.array([_piece_points(pieces[int(p)], t) for p, t in new_key])
        check_off_essential(params, new_lam, weight)
        new_val = sysm.values(new_lam)
        key = np.concatenate([key, new_key])
        lam = np.concatenate([lam, new_lam])
        val = np.concatenate([val, new_val])
        order = np.lexsort((key[:, 1], key[:, 0]))
        key, lam, val = key[order], lam[order], val[order]
    dargs = np.angle(np.roll(val, -1) / val)
    raw = float(np.sum(dargs) / (2.0 * np.pi))
    wind = int(round(raw))
    if abs(raw - wind) > 0.05:
        raise WindingNotInteger(f"accumulated winding {raw:.4f} is not near an integer")
    desc = {"radius": float(radius), "delta": delta, "excision_radius": float(r_ex) if excise else 0.0,
            "weight": [weight.nu_minus, weight.nu_plus]}
    return ContourReport(desc, wind, raw, float(np.min(np.abs(val))), int(len(lam)), lam, val)
