"""Eigenfunctions at lambda = 0 and their norms.

Translating the wave gives the kernel element ``e1 = (u_z, w_z)``;
differentiating the wave family in its speed gives ``e2 = (u_c, w_c)`` with
``L e2 = -e1``, so zero carries a Jordan chain of length two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate
from scipy.optimize import minimize_scalar

from .errors import FitUnreliable, FormulaPole, QuadratureDivergence, RequiresSingularLimit, ResidualTooLarge
from .model import ModelParams, WaveProfile, closed_form_state, profile_bvp, profile_closed_form
from .numerics import adaptive_simpson, exp_poly_tail
from .operator import assemble_operator
from .spectral import SIDES, WeightPair, spatial_eigs
from . import io

TRANSLATION = "translation"
SPEED = "speed-derivative"


@dataclass
class EigenPair:
    """Sampled perturbation pair with first and second derivatives.

    ``pu`` and ``pw`` have shape ``(3, N)``: value, first and second
    derivative on ``grid``.
    """

    kind: str
    grid: np.ndarray
    pu: np.ndarray
    pw: np.ndarray
    params: ModelParams
    norm_sq_analytic: Optional[float] = None
    norm_sq_quadrature: Optional[float] = None
    diverges: bool = False
    residual: Optional[float] = None
    meta: dict = field(default_factory=dict)

    def to_csv(self, path):
        return io.write_csv(path, ["z", "pu", "pw"], [self.grid, self.pu[0], self.pw[0]])


# ---------------------------------------------------------------------------
# closed-form pieces at eps = 0


def _w_derivs(r1, r2, r3, params):
    """``h = w_z/w`` and ``w_zz/w``, ``w_zzz/w`` from the u-ratios."""
    b, c = params.beta, params.c
    h = -c + b * r1
    r1p = r2 - r1 * r1
    r1pp = r3 - 3.0 * r1 * r2 + 2.0 * r1**3
    hp, hpp = b * r1p, b * r1pp
    return h, hp + h * h, hpp + 3.0 * h * hp + h**3, hp, hpp


def translation_closed(params: ModelParams, z):
    """``(u_z, w_z)`` with two derivatives each, evaluated exactly at eps = 0."""
    log_u, r1, r2, r3 = closed_form_state(params, z)
    return _translation_from_state(params, z, log_u, r1, r2, r3)


def _translation_from_state(params, z, log_u, r1, r2, r3):
    u = np.exp(log_u)
    w = np.exp(-params.c * z + params.beta * log_u)
    h, w2, w3, _, _ = _w_derivs(r1, r2, r3, params)
    pu = np.stack([r1 * u, r2 * u, r3 * u])
    pw = np.stack([h * w, w2 * w, w3 * w])
    return pu, pw


def speed_closed(params: ModelParams, z):
    """``(u_c, w_c)`` with two derivatives each, evaluated exactly at eps = 0.

    ``u_c = phi u`` with ``phi = (z/c + 2/c**2) g`` and ``w_c = psi w`` with
    ``psi = -z + beta phi``, where ``g = u_z/u``.
    """
    b, c, K = params.beta, params.c, params.excess
    z = np.asarray(z, dtype=float)
    log_u, g, r2, r3 = closed_form_state(params, z)
    u = np.exp(log_u)
    w = np.exp(-c * z + b * log_u)
    g1 = K * g * g - c * g
    g2 = (2.0 * K * g - c) * g1
    lin = z / c + 2.0 / c**2
    phi = lin * g
    phi1 = g / c + lin * g1
    phi2 = 2.0 * g1 / c + lin * g2
    pu = np.stack([phi * u, (phi1 + phi * g) * u, (phi2 + 2.0 * phi1 * g + phi * r2) * u])
    h, _, _, hp, _ = _w_derivs(g, r2, r3, params)
    psi = -z + b * phi
    psi1 = -1.0 + b * phi1
    psi2 = b * phi2
    pw = np.stack([psi * w, (psi1 + psi * h) * w, (psi2 + 2.0 * psi1 * h + psi * (hp + h * h)) * w])
    return pu, pw


# ---------------------------------------------------------------------------
# eigenfunctions


def chain_residuals(profile: WaveProfile, e1: EigenPair, e2: EigenPair):
    """Sup norms of ``L e1`` and ``L e2 + e1``."""
    op = assemble_operator(profile)
    r1 = op.apply(e1.pu, e1.pw)
    r2 = op.apply(e2.pu, e2.pw)
    res1 = max(np.max(np.abs(r1[0])), np.max(np.abs(r1[1])))
    res2 = max(np.max(np.abs(r2[0] + e1.pu[0])), np.max(np.abs(r2[1] + e1.pw[0])))
    return float(res1), float(res2)


def jordan_block(profile: WaveProfile, e1: EigenPair, e2: EigenPair):
    """Least-squares matrix of the operator on span{e1, e2}.

    A Jordan chain ``L e1 = 0``, ``L e2 = -e1`` gives ``[[0, -1], [0, 0]]``.
    """
    op = assemble_operator(profile)
    E = np.column_stack([np.concatenate([e.pu[0], e.pw[0]]) for e in (e1, e2)])
    LE = np.column_stack([np.concatenate(op.apply(e.pu, e.pw)) for e in (e1, e2)])
    M, *_ = np.linalg.lstsq(E, LE, rcond=None)
    return M


def _speed_fd(profile: WaveProfile, rel_step=1e-4):
    """``(u_c, w_c)`` by central differences of two eps > 0 profiles in c."""
    p = profile.params
    hc = rel_step * p.c
    parts = []
    for sgn in (1.0, -1.0):
        q = p.replace(c=p.c + sgn * hc)
        prof = profile_bvp(q, L=profile.L, tol=max(profile.tol, 1e-6), n_points=len(profile.grid))
        log_u, r1, r2, r3 = prof.ratios(profile.grid)
        u = np.exp(log_u)
        w = np.exp(-q.c * profile.grid + q.beta * log_u)
        h, w2, _, _, _ = _w_derivs(r1, r2, r3, q)
        parts.append((np.stack([u, r1 * u, r2 * u]), np.stack([w, h * w, w2 * w])))
    pu = (parts[0][0] - parts[1][0]) / (2.0 * hc)
    pw = (parts[0][1] - parts[1][1]) / (2.0 * hc)
    return pu, pw


def eigenfunctions(profile: WaveProfile, tol=1e-6, check=True):
    """Translation pair and speed-derivative pair of a profile.

    At eps = 0 both come from exact formulas. For eps > 0 the translation
    pair uses the profile's own derivatives and the speed pair a central
    difference in c across two profiles with the same normalisation.

    Raises
    ------
    ResidualTooLarge
        If ``|L e1|`` or ``|L e2 + e1|`` exceeds ``tol`` in sup norm.
    """
    p = profile.params
    z = profile.grid
    if profile.closed_form:
        tu, tw = translation_closed(p, z)
        su, sw = speed_closed(p, z)
    else:
        tu, tw = _translation_from_state(p, z, profile.log_u, profile.r1, profile.r2, profile.r3)
        su, sw = _speed_fd(profile)
    e1 = EigenPair(TRANSLATION, z, tu, tw, p)
    e2 = EigenPair(SPEED, z, su, sw, p, diverges=not p.sublinear)
    if p.epsilon == 0.0:
        e1.norm_sq_analytic = norm_translation_exact(p)
    res1, res2 = chain_residuals(profile, e1, e2)
    e1.residual, e2.residual = res1, res2
    if check:
        worst = max(res1, res2)
        if worst > tol:
            raise ResidualTooLarge(f"eigenfunction residual {worst:.3e} exceeds {tol:.1e}", worst)
    return e1, e2


# ---------------------------------------------------------------------------
# norms


def norm_translation_analytic(params: ModelParams) -> float:
    """Reference closed form ``c/(4 + 2K) + c**5/(beta**2 - 2K**2)`` for ``|(u_z, w_z)|**2``.

    Evaluated exactly as written, pole included. Its first term is the
    u-part of the integral; the second term does not reproduce the w-part
    (compare :func:`norm_translation_exact` and quadrature).
    """
    b, c, K = params.beta, params.c, params.excess
    denom = b * b - 2.0 * K * K
    if abs(denom) <= 1e-12 * max(b * b, 1.0):
        raise FormulaPole(f"beta^2 - 2(beta+m-1)^2 = {denom!r} vanishes")
    return c / (4.0 + 2.0 * K) + c**5 / denom


def norm_translation_exact(params: ModelParams) -> float:
    """``|(u_z, w_z)|**2`` at eps = 0 in closed form.

    Substituting ``s = u**K`` turns both integrals into Beta integrals::

        |u_z|**2 = c/(4 + 2K),    |w_z|**2 = c**5 / (2 (4 beta**2 - K**2)).

    The denominator is positive for every admissible parameter set.
    """
    b, c, K = params.beta, params.c, params.excess
    return c / (4.0 + 2.0 * K) + c**5 / (2.0 * (4.0 * b * b - K * K))


def _integrand(params, kind):
    def f(z):
        pu, pw = (translation_closed if kind == TRANSLATION else speed_closed)(params, z)
        return pu[0] ** 2 + pw[0] ** 2
    return f


def _tails(params, kind, z_left, z_right):
    """Closed-form tail integrals beyond the quadrature interval."""
    b, c, K, m = params.beta, params.c, params.excess, params.m
    a = c / K
    U0 = (c * c / K) ** (1.0 / K)
    kw = c * (1.0 - m) / K  # left rate of w
    if kind == TRANSLATION:
        left = (exp_poly_tail(0.0, a * U0, a, z_left, "left")
                + exp_poly_tail(0.0, kw * U0**b, kw, z_left, "left"))
        right = (exp_poly_tail(0.0, 1.0 / c, -c, z_right, "right")
                 + exp_poly_tail(0.0, -c, -c, z_right, "right"))
    else:
        left = (exp_poly_tail(U0 / K, 2.0 * U0 / (c * K), a, z_left, "left")
                + exp_poly_tail((1.0 - m) / K * U0**b, 2.0 * b / (c * K) * U0**b, kw, z_left, "left"))
        right = (exp_poly_tail(1.0 / c**2, 2.0 / c**3, -c, z_right, "right")
                 + exp_poly_tail(-1.0, 0.0, -c, z_right, "right"))
    return left + right


def _quad_window(params):
    c = params.c
    return -40.0 / c, 40.0 / c


def norm_sq_quadrature(params: ModelParams, kind=TRANSLATION, quad_tol=1e-12, method="simpson"):
    """``|pair|**2`` in L2 at eps = 0 by quadrature with analytic tails.

    ``method='simpson'`` uses the adaptive Simpson rule on a finite window
    plus closed-form tails; ``method='quad'`` uses QUADPACK on the whole line
    and serves as an independent check.
    """
    if params.epsilon != 0.0:
        raise RequiresSingularLimit("closed-form eigenfunctions exist only for epsilon = 0")
    if kind == SPEED and not params.sublinear:
        raise QuadratureDivergence("speed-derivative pair is not square integrable for m = 1")
    f = _integrand(params, kind)
    if method == "simpson":
        zl, zr = _quad_window(params)
        core, err = adaptive_simpson(f, zl, zr, tol=quad_tol)
        if kind == TRANSLATION and not params.sublinear:
            # w -> const on the left, so w_z decays at rate c rather than c(1-m)/K
            tails = _tails_m1(params, zl, zr)
        else:
            tails = _tails(params, kind, zl, zr)
        return core + tails
    if method == "quad":
        g = lambda z: float(f(np.array([z]))[0])
        total = 0.0
        for lo, hi in ((-np.inf, -5.0 / params.c), (-5.0 / params.c, 0.0), (0.0, 5.0 / params.c),
                       (5.0 / params.c, np.inf)):
            val, _ = integrate.quad(g, lo, hi, epsabs=0.0, epsrel=1e-13, limit=400)
            total += val
        return total
    raise ValueError(f"unknown method {method!r}")


def _tails_m1(params, zl, zr):
    # m = 1: u_z ~ a U0 e^{a z}; w = 1/(e^{cz} + beta/c^2) so w_z ~ -c (c^2/beta)^2 e^{cz}
    b, c, K = params.beta, params.c, params.excess
    a = c / K
    U0 = (c * c / K) ** (1.0 / K)
    left = (exp_poly_tail(0.0, a * U0, a, zl, "left")
            + exp_poly_tail(0.0, c * (c * c / b) ** 2, c, zl, "left"))
    right = (exp_poly_tail(0.0, 1.0 / c, -c, zr, "right")
             + exp_poly_tail(0.0, -c, -c, zr, "right"))
    return left + right


def norm_speed_derivative(params: ModelParams, quad_tol=1e-10) -> float:
    """``|(u_c, w_c)|**2`` in L2 at eps = 0.

    Raises
    ------
    QuadratureDivergence
        For m = 1, where ``w_c`` tends to the constant ``2c/beta`` as z -> -inf.
    """
    return norm_sq_quadrature(params, SPEED, quad_tol)


def truncated_norm_sq(params: ModelParams, kind, L) -> float:
    """L2 norm squared over ``[-L, L]`` only, without tail completion."""
    val, _ = adaptive_simpson(_integrand(params, kind), -L, L, tol=1e-10)
    return val


# ---------------------------------------------------------------------------
# decay and weighted membership


@dataclass
class TailFit:
    rate: float
    residual: float
    model: str
    source: str = "fit"


@dataclass
class DecayReport:
    left: TailFit
    right: TailFit
    left_pass: bool
    right_pass: bool
    weight: WeightPair

    @property
    def passed(self) -> bool:
        return self.left_pass and self.right_pass


def _window(grid, side, frac=0.25, min_points=200):
    n = len(grid)
    k = max(int(round(frac * n)), min_points)
    k = min(k, n)
    return slice(0, k) if side == "minus" else slice(n - k, n)


def fit_tail_rate(z, y, model="exp", threshold=1e-3):
    """Exponential rate of ``y`` on a tail window.

    ``model='exp'`` fits ``log|y| = log B + mu z``; ``model='zexp'`` fits
    ``y = (A z + B) exp(mu z)`` by scanning mu with linear least squares for
    ``(A, B)``. The returned residual is relative; above ``threshold`` the
    fit raises :class:`FitUnreliable`.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(y == 0) or not np.all(np.isfinite(y)):
        raise FitUnreliable("tail samples vanish or are not finite")
    if np.any(np.sign(y) != np.sign(y[0])) and model == "exp":
        raise FitUnreliable("tail changes sign; pure exponential model does not apply")
    ly = np.log(np.abs(y))
    X = np.column_stack([np.ones_like(z), z])
    coef, *_ = np.linalg.lstsq(X, ly, rcond=None)
    mu0 = float(coef[1])
    if model == "exp":
        resid = float(np.sqrt(np.mean((X @ coef - ly) ** 2)))
        if resid > threshold:
            raise FitUnreliable(f"log-linear tail fit residual {resid:.2e}")
        return TailFit(mu0, resid, model)
    if model != "zexp":
        raise ValueError(f"unknown model {model!r}")
    zc = z - z.mean()

    def cost(mu):
        scaled = y * np.exp(-mu * zc)
        basis = np.column_stack([zc, np.ones_like(zc)])
        ab, *_ = np.linalg.lstsq(basis, scaled, rcond=None)
        return float(np.linalg.norm(basis @ ab - scaled) / np.linalg.norm(scaled))

    width = max(1.0, abs(mu0))
    trial = np.linspace(mu0 - width, mu0 + width, 201)
    j = int(np.argmin([cost(t) for t in trial]))
    lo, hi = trial[max(j - 1, 0)], trial[min(j + 1, len(trial) - 1)]
    # the squared cost is smooth at the minimum, the plain one has a kink
    res = minimize_scalar(lambda t: cost(t) ** 2, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-13})
    best = cost(res.x)
    if best > threshold:
        raise FitUnreliable(f"polynomial-exponential tail fit residual {best:.2e}")
    return TailFit(float(res.x), float(best), model)


def decay_admissibility(pair: EigenPair, weight: WeightPair, frac=0.25, min_points=200):
    """Compare the tail rates of ``pair.pu`` with the weight on each side.

    On the left the weighted function decays iff ``rate + nu_minus > 0``; on
    the right iff ``rate + nu_plus < 0``. For the speed-derivative pair the
    left fit allows a ``z exp(mu z)`` term, and the right rate is taken as
    the dominant stable spatial eigenvalue ``-c`` instead of a fit.
    """
    z = pair.grid
    y = pair.pu[0]
    sl = _window(z, "minus", frac, min_points)
    sr = _window(z, "plus", frac, min_points)
    left = fit_tail_rate(z[sl], y[sl], "exp" if pair.kind == TRANSLATION else "zexp")
    if pair.kind == TRANSLATION:
        right = fit_tail_rate(z[sr], y[sr], "exp")
    else:
        plus = spatial_eigs(pair.params, 0.0, "plus").roots
        stable = plus[plus.real < -1e-12]
        right = TailFit(float(stable.real.max()), 0.0, "spatial", source="spatial eigenvalue")
    return DecayReport(left, right, left.rate + weight.nu_minus > 0, right.rate + weight.nu_plus < 0, weight)


def weighted_h1_sq(pair: EigenPair, weight: WeightPair, component="u", L=None):
    """Weighted H1 norm squared of the selected component(s) over ``[-L, L]``.

    Uses the trapezoid rule on the pair's own grid.
    """
    z = pair.grid
    if L is not None:
        keep = np.abs(z) <= L
    else:
        keep = np.ones_like(z, bool)
    nu = np.where(z <= 0, weight.nu_minus, weight.nu_plus)
    e = np.exp(nu * z)
    comps = {"u": [pair.pu], "w": [pair.pw], "both": [pair.pu, pair.pw]}[component]
    total = 0.0
    for c in comps:
        f = e * c[0]
        fz = e * (c[1] + nu * c[0])
        total += np.trapezoid((f**2 + fz**2)[keep], z[keep])
    return float(total)


def weighted_membership(pair: EigenPair, weight: WeightPair, component="u", rel_tol=1e-6) -> bool:
    """Whether the weighted H1 norm converges on the truncated line.

    The norm over the full grid is compared with the norm over its inner
    half-width; a square-integrable weighted function changes by less than
    ``rel_tol`` and has negligible weighted values at both ends. Only the
    u-component is checked by default, since ``w_z`` decays at the slower
    rate ``c(1 - m)/K`` on the left.
    """
    z = pair.grid
    L = float(max(-z[0], z[-1]))
    full = weighted_h1_sq(pair, weight, component)
    inner = weighted_h1_sq(pair, weight, component, L=0.75 * L)
    if not np.isfinite(full) or full == 0.0:
        return False
    nu = np.where(z <= 0, weight.nu_minus, weight.nu_plus)
    comps = {"u": [pair.pu], "w": [pair.pw], "both": [pair.pu, pair.pw]}[component]
    ends = max(float(np.max(np.abs(np.exp(nu[[0, -1]] * z[[0, -1]]) * c[0][[0, -1]]))) for c in comps)
    return abs(full - inner) <= rel_tol * full and ends**2 <= rel_tol * full


# ---------------------------------------------------------------------------
# sweeps


def norm_sweep(beta, m_values, c_values, quad_tol=1e-10):
    """Rows ``(m, c, beta, norm_sq_generalised)``; divergent cases give ``inf``."""
    rows = []
    for c in c_values:
        for m in m_values:
            p = ModelParams(0.0, m, beta, c)
            try:
                val = norm_speed_derivative(p, quad_tol)
            except QuadratureDivergence:
                val = math.inf
            rows.append((m, c, beta, val))
    return rows
