"""Spatial eigenvalues, essential and absolute spectra, weights and the critical beta.

A solution of the spectral ODE behaving like ``exp(mu z)`` at either end
must satisfy the characteristic polynomial of the limiting coefficients.
An exponential weight ``exp(nu z)`` shifts every spatial eigenvalue by
``nu``; the weight is allowed to differ on the two half-lines.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import BracketFailure, ContinuationBreak, NoConvergence, RootFindingFailure
from .model import ModelParams
from .operator import abcd, asymptotic_coeffs, char_poly, limit_ratios
from .roots import discriminant_ratio, poly_roots, polyder, polyval, reconstruction_error, sort_roots

SIDES = ("minus", "plus")

# critical-beta polynomial, highest degree first
BETA_CRIT_COEFFS = (310, -3234, 17112, -49101, 76180, -58398, 10056, 15040, -9680, 1716, -4)

NEAR_CRITICAL = 0.05


def _side(side):
    if side in ("minus", "-"):
        return "minus"
    if side in ("plus", "+"):
        return "plus"
    raise ValueError(f"unknown side {side!r}")


# ---------------------------------------------------------------------------
# types


@dataclass(frozen=True)
class WeightPair:
    """Two-sided exponential weight ``exp(nu_minus z)`` for z <= 0, ``exp(nu_plus z)`` for z > 0.

    ``abscissa`` holds the largest real part of the weighted essential
    spectrum when the pair came out of a search; it is not assumed.
    """

    nu_minus: float = 0.0
    nu_plus: float = 0.0
    abscissa: Optional[float] = None

    def on(self, side):
        return self.nu_minus if _side(side) == "minus" else self.nu_plus

    def weight(self, z):
        """``exp(nu(z) z)`` with the side-dependent rate."""
        z = np.asarray(z, dtype=float)
        return np.exp(np.where(z <= 0, self.nu_minus, self.nu_plus) * z)


@dataclass(frozen=True)
class SpatialEigs:
    """Roots of the characteristic polynomial at one end, sorted by descending real part.

    ``roots`` are unweighted; ``shifted`` adds the weight.
    """

    side: str
    roots: np.ndarray
    lam: complex
    params: ModelParams
    nu: float = 0.0

    @property
    def shifted(self):
        return self.roots + self.nu

    @property
    def morse(self) -> int:
        """Number of weighted roots with positive real part."""
        return int(np.sum(self.shifted.real > 0))


@dataclass
class SpectrumSample:
    """Classification of one spectral parameter value.

    ``classification`` is one of ``weighted-essential-boundary``,
    ``weighted-stable`` (Fredholm index zero, no weighted root on the
    imaginary axis), ``weighted-unstable`` (index nonzero), ``absolute``,
    ``branch-point`` or ``none``.
    """

    lam: complex
    minus: Optional[SpatialEigs]
    plus: Optional[SpatialEigs]
    morse_minus: Optional[int]
    morse_plus: Optional[int]
    classification: str = "none"
    k: Optional[float] = None
    gap: Optional[float] = None


@dataclass(frozen=True)
class BetaCrit:
    beta_crit_base: float
    beta_crit_m: float
    m: float
    residual: float

    def near_critical(self, beta, rel=NEAR_CRITICAL) -> bool:
        """True within ``rel`` of the threshold where the leading-order value is unreliable."""
        return abs(beta - self.beta_crit_m) <= rel * self.beta_crit_m


# ---------------------------------------------------------------------------
# spatial eigenvalues


def char_coeffs(params: ModelParams, lam, side):
    """Characteristic polynomial at one end for (arrays of) ``lam``."""
    r1, r2 = limit_ratios(params, _side(side))
    A, B, C, D = abcd(r1, r2, np.asarray(lam, dtype=complex), params)
    return char_poly(A, B, C, D, params.epsilon)


def splitting_index(params: ModelParams) -> int:
    """Unstable-root count at both ends for large positive real lambda.

    Both ends agree there (checked), and this count is the number of
    decaying directions a bounded solution needs at -inf.
    """
    counts = []
    for side in SIDES:
        r = poly_roots(char_coeffs(params, 1e6, side))
        counts.append(int(np.sum(r.real > 0)))
    if counts[0] != counts[1]:
        raise RootFindingFailure(f"ends disagree on the splitting at large lambda: {counts}")
    return counts[0]


def spatial_eigs(params: ModelParams, lam, side, nu=0.0, tol=1e-10) -> SpatialEigs:
    """Roots of the limiting characteristic polynomial at ``side``.

    Raises
    ------
    RootFindingFailure
        If rebuilding the polynomial from the roots misses by more than ``tol``.
    """
    side = _side(side)
    P = char_coeffs(params, complex(lam), side)
    r = poly_roots(P)
    err = float(reconstruction_error(P, r))
    if err > tol:
        raise RootFindingFailure(f"root reconstruction error {err:.2e} at lambda={lam}")
    return SpatialEigs(side, r, complex(lam), params, float(nu))


def lambda_zero_closed_form(params: ModelParams, side):
    """Spatial eigenvalues at lambda = 0 from their explicit expressions."""
    c, m, eps, K = params.c, params.m, params.epsilon, params.excess
    bm = params.beta + m
    if _side(side) == "plus":
        out = [-c, 0.0, 0.0] if eps == 0 else [-c, -c / eps, 0.0, 0.0]
    else:
        a = c / K
        if eps == 0:
            out = [a, m * a, bm * a]
        else:
            root = math.sqrt(1.0 + 4.0 * eps * bm * (bm + eps - 1.0) / K**2)
            out = [a, m * a, -c / (2 * eps) - c / (2 * eps) * root, -c / (2 * eps) + c / (2 * eps) * root]
    return sort_roots(np.array(out, dtype=complex))


def classify(params: ModelParams, lam, weight: WeightPair = WeightPair(), tol=1e-9) -> SpectrumSample:
    """Weighted Fredholm classification of a single ``lam``."""
    k = splitting_index(params)
    sides = {s: spatial_eigs(params, lam, s, weight.on(s)) for s in SIDES}
    mm, mp = sides["minus"].morse, sides["plus"].morse
    on_axis = any(np.any(np.abs(e.shifted.real) < tol) for e in sides.values())
    if on_axis:
        label = "weighted-essential-boundary"
    elif mm == k and mp == k:
        label = "weighted-stable"
    else:
        label = "weighted-unstable"
    return SpectrumSample(complex(lam), sides["minus"], sides["plus"], mm, mp, label)


# ---------------------------------------------------------------------------
# dispersion curves


def _lambda_quadratic(params, mu, side):
    """``(Q2, Q1, Q0)`` with ``P(mu, lam) = Q2 lam^2 + Q1 lam + Q0``."""
    vals = [polyval(char_coeffs(params, l, side), mu) for l in (0.0, 1.0, -1.0)]
    Q0 = vals[0]
    Q1 = 0.5 * (vals[1] - vals[2])
    Q2 = 0.5 * (vals[1] + vals[2]) - Q0
    return Q2, Q1, Q0


def dispersion_curves(params: ModelParams, nu, side, k_grid=None):
    """Both lambda-branches with a weighted spatial eigenvalue ``i k``.

    Returns
    -------
    k : ndarray, shape (N,)
    lam : ndarray, shape (N, 2)
    """
    k = default_k_grid(params) if k_grid is None else np.asarray(k_grid, dtype=float)
    mu = 1j * k - nu
    Q2, Q1, Q0 = _lambda_quadratic(params, mu, _side(side))
    disc = np.sqrt(Q1 * Q1 - 4.0 * Q2 * Q0)
    sgn = np.where((np.conj(Q1) * disc).real >= 0, 1.0, -1.0)
    q = -0.5 * (Q1 + sgn * disc)
    with np.errstate(divide="ignore", invalid="ignore"):
        l1 = q / Q2
        l2 = np.where(q != 0, Q0 / q, 0.0)
    return k, np.stack([l1, l2], axis=-1)


def default_k_grid(params: ModelParams, n=2001, span=50.0):
    return np.linspace(-span * params.c, span * params.c, n)


def spectral_abscissa(params: ModelParams, nu, side, k_grid=None) -> float:
    """Largest real part along the dispersion curves, refined near the maximum."""
    k, lam = dispersion_curves(params, nu, side, k_grid)
    re = lam.real.max(axis=1)
    i = int(np.argmax(re))
    best = float(re[i])
    lo, hi = k[max(i - 1, 0)], k[min(i + 1, len(k) - 1)]
    if hi > lo:
        def f(x):
            return -float(dispersion_curves(params, nu, side, [x])[1].real.max())
        res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
        best = max(best, -float(res.fun))
    return best


def essential_boundary(params: ModelParams, weight: WeightPair, side, k_grid=None):
    """Dispersion curves of one end as a list of :class:`SpectrumSample`.

    Each sample carries its wavenumber ``k``; spatial eigenvalues are left
    unset to keep large sweeps cheap (use :func:`classify` on demand).
    """
    side = _side(side)
    nu = weight.on(side)
    k, lam = dispersion_curves(params, nu, side, k_grid)
    out = []
    for j in range(lam.shape[1]):
        for kk, ll in zip(k, lam[:, j]):
            out.append(SpectrumSample(complex(ll), None, None, None, None,
                                      "weighted-essential-boundary", k=float(kk)))
    return out


# ---------------------------------------------------------------------------
# weights


def admissible_interval(params: ModelParams, side):
    """Open interval of weights that take lambda = 0 off the essential spectrum."""
    if _side(side) == "minus":
        a = params.left_rate
        return -a, -params.m * a
    return 0.0, params.c


def default_weight(params: ModelParams) -> WeightPair:
    """Midpoints of the two admissible intervals."""
    lo_m, hi_m = admissible_interval(params, "minus")
    lo_p, hi_p = admissible_interval(params, "plus")
    return WeightPair(0.5 * (lo_m + hi_m), 0.5 * (lo_p + hi_p))


def default_search_box(params: ModelParams):
    a = params.left_rate
    return {"nu_minus": (-2.0 * a, 0.0), "nu_plus": (0.0, 2.0 * params.c), "n": 41}


def find_admissible_weights(params: ModelParams, search_box=None, k_grid=None, margin=0.0):
    """Weight pairs whose weighted essential spectrum lies in ``Re lam < -margin``.

    The two ends decouple, so each side is scanned on its own grid and the
    admissible values are combined. Pairs are returned ordered by their
    spectral abscissa (most stable first). An empty list is a valid answer.
    """
    box = default_search_box(params) if search_box is None else dict(search_box)
    n = int(box.get("n", 41))
    good = {}
    for side in SIDES:
        lo, hi = box["nu_" + side]
        nus = np.linspace(lo, hi, n + 2)[1:-1]
        vals = [(float(nu), spectral_abscissa(params, nu, side, k_grid)) for nu in nus]
        good[side] = [(nu, s) for nu, s in vals if s < -margin]
    pairs = [WeightPair(nm, np_, max(sm, sp))
             for (nm, sm), (np_, sp) in itertools.product(good["minus"], good["plus"])]
    pairs.sort(key=lambda w: (w.abscissa, w.nu_minus, w.nu_plus))
    return pairs


def origin_gap(params: ModelParams, weight: WeightPair, k_grid=None) -> float:
    """Distance from lambda = 0 to the weighted dispersion curves of both ends."""
    d = np.inf
    for side in SIDES:
        k, lam = dispersion_curves(params, weight.on(side), side, k_grid)
        d = min(d, float(np.min(np.abs(lam))))
    return d


# ---------------------------------------------------------------------------
# absolute spectrum


def default_lambda_box(params: ModelParams):
    c2 = params.c**2
    return (-2.0 * c2, c2, -3.0 * c2, 3.0 * c2)


def lambda_grid(box, n_re=400, n_im=400):
    x0, x1, y0, y1 = box
    X, Y = np.meshgrid(np.linspace(x0, x1, n_re), np.linspace(y0, y1, n_im))
    return X + 1j * Y


_PERMS = {}


def _perms(n):
    if n not in _PERMS:
        _PERMS[n] = np.array(list(itertools.permutations(range(n))))
    return _PERMS[n]


def _match(ra, rb):
    """Best matching of root sets along grid edges.

    Returns ``perm`` with ``ra[..., i] <-> rb[..., perm[..., i]]`` and a flag
    for matchings whose displacement is comparable to the root spacing.
    """
    P = _perms(ra.shape[-1])
    cost = np.abs(ra[..., None, :] - np.take(rb, P, axis=-1)).sum(axis=-1)
    best = np.argmin(cost, axis=-1)
    perm = P[best]
    moved = np.take_along_axis(rb, perm, axis=-1)
    disp = np.abs(ra - moved).max(axis=-1)
    sep = np.abs(ra[..., :, None] - ra[..., None, :])
    n = ra.shape[-1]
    sep[..., np.arange(n), np.arange(n)] = np.inf
    ambiguous = disp > 0.5 * sep.min(axis=(-2, -1))
    return perm, ambiguous


def _crossings(params, side, L, R, k, refine=30):
    """Absolute-spectrum crossings along the edges between grids ``L`` -> ``R``."""
    ra = poly_roots(char_coeffs(params, L, side))
    rb = poly_roots(char_coeffs(params, R, side))
    perm, amb = _match(ra, rb)
    rb_t = np.take_along_axis(rb, perm, axis=-1)  # tracked roots, same labels as ra
    n = ra.shape[-1]
    # labels of the top-k (sorted) roots at each end of the edge
    top_a = np.zeros(ra.shape, bool)
    top_a[..., :k] = True  # ra is sorted
    order_b = np.argsort(np.argsort(-rb_t.real, axis=-1), axis=-1)
    top_b = order_b < k
    change = np.any(top_a != top_b, axis=-1)
    n_out = (top_a & ~top_b).sum(axis=-1)
    amb = amb | (change & (n_out > 1))
    idx = np.nonzero(change & ~amb)
    if idx[0].size == 0:
        return np.zeros(0, complex), np.zeros(0), int(np.sum(change & amb)), 0
    la, lb = L[idx], R[idx]
    leave = np.argmax(top_a[idx] & ~top_b[idx], axis=-1)
    enter = np.argmax(~top_a[idx] & top_b[idx], axis=-1)
    # bisection on the tracked real-part difference of the two exchanging roots
    t0 = np.zeros(len(la))
    t1 = np.ones(len(la))
    mu_leave = ra[idx][np.arange(len(la)), leave]
    mu_enter = ra[idx][np.arange(len(la)), enter]
    for _ in range(refine):
        tm = 0.5 * (t0 + t1)
        rm = poly_roots(char_coeffs(params, la + tm * (lb - la), side), sort=False)
        cand_l = rm[np.arange(len(la)), np.argmin(np.abs(rm - mu_leave[:, None]), axis=-1)]
        cand_e = rm[np.arange(len(la)), np.argmin(np.abs(rm - mu_enter[:, None]), axis=-1)]
        before = cand_l.real > cand_e.real
        t0 = np.where(before, tm, t0)
        t1 = np.where(before, t1, tm)
        mu_leave = np.where(before, cand_l, mu_leave)
        mu_enter = np.where(before, cand_e, mu_enter)
    pts = la + 0.5 * (t0 + t1) * (lb - la)
    rs = poly_roots(char_coeffs(params, pts, side)).real
    gap = rs[:, k - 1] - rs[:, k]
    return pts, gap, int(np.sum(change & amb)), int(idx[0].size)


@dataclass
class AbsoluteSpectrum:
    """Point cloud where the k-th and (k+1)-th spatial eigenvalues share their real part."""

    side: str
    points: np.ndarray
    gap: np.ndarray
    k: int
    grid_spacing: float
    ambiguous: int = 0

    def rightmost(self) -> complex:
        if self.points.size == 0:
            return complex(np.nan, np.nan)
        return complex(self.points[np.argmax(self.points.real)])

    def samples(self):
        return [SpectrumSample(complex(p), None, None, None, None, "absolute", gap=float(g))
                for p, g in zip(self.points, self.gap)]

    def distance(self, lam) -> float:
        if self.points.size == 0:
            return np.inf
        return float(np.min(np.abs(self.points - lam)))


def absolute_spectrum(params: ModelParams, lam_grid=None, side="minus", max_ambiguous=None):
    """Locate the absolute spectrum of one end on a rectangular lambda grid.

    Spatial eigenvalues are tracked between neighbouring grid nodes by the
    permutation that moves them least. An edge carries a crossing when the
    set of the k roots with largest real part changes along it; the point is
    then refined by bisection on the edge.

    Raises
    ------
    ContinuationBreak
        If more edges are ambiguous than ``max(5, 5% of crossings)``.
    """
    side = _side(side)
    grid = lambda_grid(default_lambda_box(params)) if lam_grid is None else np.asarray(lam_grid, complex)
    k = splitting_index(params)
    pts, gaps = [], []
    n_amb = n_cross = 0
    for L, R in ((grid[:, :-1], grid[:, 1:]), (grid[:-1, :], grid[1:, :])):
        p, g, a, nc = _crossings(params, side, L, R, k)
        pts.append(p)
        gaps.append(g)
        n_amb += a
        n_cross += nc
    limit = max(5, 0.05 * n_cross) if max_ambiguous is None else max_ambiguous
    if n_amb > limit:
        raise ContinuationBreak(f"{n_amb} ambiguous edges out of {n_cross} crossings; refine the grid")
    spacing = float(max(np.abs(np.diff(grid, axis=1)).max(initial=0), np.abs(np.diff(grid, axis=0)).max(initial=0)))
    return AbsoluteSpectrum(side, np.concatenate(pts), np.concatenate(gaps), k, spacing, n_amb)


# ---------------------------------------------------------------------------
# branch points


class BranchPoints(list):
    """List of branch points; ``failures`` holds seeds where Newton stalled."""

    def __init__(self, values=(), failures=(), mu=()):
        super().__init__(values)
        self.failures = list(failures)
        self.mu = list(mu)


def _p_derivs(params, mu, lam, side):
    """P, P_mu, P_lam, P_mumu, P_mulam at (mu, lam)."""
    Q2, Q1, Q0 = [np.asarray(q) for q in _lambda_quadratic_poly(params, side)]
    dQ1, dQ0 = polyder(Q1), polyder(Q0)
    ddQ0 = polyder(dQ0)
    ddQ1 = polyder(dQ1)
    P = Q2 * lam**2 + polyval(Q1, mu) * lam + polyval(Q0, mu)
    Pm = polyval(dQ1, mu) * lam + polyval(dQ0, mu)
    Pl = 2.0 * Q2 * lam + polyval(Q1, mu)
    Pmm = polyval(ddQ1, mu) * lam + polyval(ddQ0, mu)
    Pml = polyval(dQ1, mu)
    return P, Pm, Pl, Pmm, Pml


def _lambda_quadratic_poly(params, side):
    """Mu-polynomials ``Q1, Q0`` and scalar ``Q2`` with ``P = Q2 lam^2 + Q1 lam + Q0``."""
    P0 = char_coeffs(params, 0.0, side)
    P1 = char_coeffs(params, 1.0, side)
    Pm1 = char_coeffs(params, -1.0, side)
    Q1 = 0.5 * (P1 - Pm1)
    Q2 = 0.5 * (P1 + Pm1) - P0
    # lam^2 enters only through the constant term
    return complex(Q2[-1]), Q1, P0


def branch_points(params: ModelParams, side="minus", seeds=None, tol=1e-11, max_iter=60,
                  relevant_only=True):
    """Double spatial roots ``P = dP/dmu = 0`` by damped Newton from complex seeds.

    With ``relevant_only`` only collisions between the k-th and (k+1)-th
    roots (the ones bounding the absolute spectrum) are kept.
    """
    side = _side(side)
    if seeds is None:
        x0, x1, y0, y1 = default_lambda_box(params)
        X, Y = np.meshgrid(np.linspace(x0, x1, 13), np.linspace(0.0, y1, 7))
        seeds = (X + 1j * Y).ravel()
    seeds = np.atleast_1d(np.asarray(seeds, dtype=complex))
    k = splitting_index(params)
    r = poly_roots(char_coeffs(params, seeds, side))
    lam = seeds.copy()
    mu = 0.5 * (r[:, k - 1] + r[:, k])
    done = np.zeros(len(seeds), bool)
    for _ in range(max_iter):
        P, Pm, Pl, Pmm, Pml = _p_derivs(params, mu, lam, side)
        det = Pm * Pml - Pl * Pmm
        with np.errstate(divide="ignore", invalid="ignore"):
            dmu = (P * Pml - Pl * Pm) / det
            dlam = (Pm * Pm - P * Pmm) / det
        step = np.hypot(np.abs(dmu), np.abs(dlam))
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            damp = np.minimum(1.0, 0.5 * (1.0 + np.abs(lam)) / np.where(step > 0, step, 1.0))
        damp = np.where(np.isfinite(damp), damp, 0.0)
        dmu = np.where(np.isfinite(dmu), dmu, 0.0)
        dlam = np.where(np.isfinite(dlam), dlam, 0.0)
        mu = mu - damp * dmu
        lam = lam - damp * dlam
        scale = 1.0 + np.abs(lam) ** 2
        res = np.maximum(np.abs(P), np.abs(Pm)) / scale
        done = res < tol
        if np.all(done | ~np.isfinite(res)):
            break
    P, Pm, *_ = _p_derivs(params, mu, lam, side)
    res = np.maximum(np.abs(P), np.abs(Pm)) / (1.0 + np.abs(lam) ** 2)
    ok = res < 1e-9
    values, mus = [], []
    for l, m_ in zip(lam[ok], mu[ok]):
        if relevant_only:
            rs = poly_roots(char_coeffs(params, l, side))
            pos = np.argsort(np.abs(rs - m_))[:2]
            if sorted(pos.tolist()) != [k - 1, k]:
                continue
        if all(abs(l - v) > 1e-7 * (1 + abs(l)) for v in values):
            values.append(complex(l))
            mus.append(complex(m_))
    failures = [complex(s) for s in seeds[~ok]]
    order = np.argsort([-v.real for v in values])
    return BranchPoints([values[i] for i in order], failures, [mus[i] for i in order])


def branch_residual(params: ModelParams, lam, mu, side="minus"):
    """``max(|P|, |dP/dmu|)`` at a candidate double root."""
    P, Pm, *_ = _p_derivs(params, np.asarray(mu), np.asarray(lam), _side(side))
    return float(max(abs(P), abs(Pm)))


def discriminant(params: ModelParams, lam, side="minus") -> complex:
    """Scale-free discriminant of the characteristic polynomial in mu."""
    return discriminant_ratio(char_coeffs(params, complex(lam), _side(side)))


# ---------------------------------------------------------------------------
# critical beta


def beta_poly(beta):
    """Evaluate the critical-beta polynomial; exact for int or Fraction input."""
    acc = 0 * beta
    for a in BETA_CRIT_COEFFS:
        acc = acc * beta + a
    return acc


def beta_crit(m=0.0) -> BetaCrit:
    """Unique root of the critical polynomial in (1, 2), scaled by ``1 - m``.

    The root is bracketed and bisected with exact rational sign evaluation,
    so the result is the double nearest the root.
    """
    if not 0.0 <= m < 1.0:
        raise ValueError(f"m must lie in [0, 1), got {m}")
    lo, hi = Fraction(1), Fraction(2)
    f_lo, f_hi = beta_poly(lo), beta_poly(hi)
    if f_lo * f_hi >= 0:
        raise BracketFailure(f"no sign change on (1, 2): f(1)={f_lo}, f(2)={f_hi}")
    a, b = 1.0, 2.0
    while True:
        mid = 0.5 * (a + b)
        if mid <= a or mid >= b:
            break
        if (beta_poly(Fraction(mid)) < 0) == (f_lo < 0):
            a = mid
        else:
            b = mid
    root = a if abs(beta_poly(Fraction(a))) <= abs(beta_poly(Fraction(b))) else b
    return BetaCrit(root, root * (1.0 - m), float(m), float(abs(beta_poly(Fraction(root)))))
