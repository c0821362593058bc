"""Linearisation about a travelling wave.

For perturbations ``(p, q)`` of ``(u, w)`` the linear operator is a 2x2 block
of second-order differential expressions. Eliminating ``q`` through the first
row gives a scalar fourth-order equation (third order when eps = 0)::

    eps p'''' - D p''' - C p'' - B p' - A p = 0

whose coefficients depend on the wave only through ``r1 = u_z/u`` and
``r2 = u_zz/u``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularCoefficient
from .model import ModelParams, WaveProfile
from .numerics import central_difference
from . import io


def abcd(r1, r2, lam, params: ModelParams):
    """Coefficients ``(A, B, C, D)`` of the scalar spectral ODE.

    This is the only place the long coefficient formulas are written down;
    everything else (grid sampling, asymptotic limits, the Evans system)
    calls it.
    """
    b, m, c, eps = params.beta, params.m, params.c, params.epsilon
    bm = b + m
    A = (bm * (c * c + lam + lam * m) * r1**2 - 2.0 * c * lam * m * r1 - c * bm * r1 * r2
         - lam**2 - lam * bm * r2 - c * (b - 2.0) * bm * r1**3
         + eps * (c * bm * r1 * r2 - (b - 2.0) * bm * r1**2 * r2 - bm * r2**2 - lam * m * r2))
    B = (2.0 * c * lam - (b * c * c + lam * (b + 2.0 * m)) * r1 + c * (b - m - 3.0) * bm * r1**2
         + c * bm * r2 + eps * ((b - 2.0) * bm * r1 * r2 - c * bm * r2))
    C = (-c * c + c * (2.0 * bm + m) * r1 + lam
         + eps * (lam - (m + 1.0) * bm * r1**2 + c * m * r1 + 2.0 * bm * r2))
    D = -c + eps * ((b + 2.0 * m) * r1 - c) + 0.0 * lam
    return A, B, C, D


def char_poly(A, B, C, D, epsilon):
    """Coefficients in mu, highest degree first, stacked on the last axis.

    At ``epsilon == 0`` the cubic ``-D mu^3 - C mu^2 - B mu - A`` is returned
    explicitly instead of a quartic with vanishing leading term.
    """
    A, B, C, D = np.broadcast_arrays(*(np.asarray(x, dtype=complex) for x in (A, B, C, D)))
    cols = [-D, -C, -B, -A]
    if epsilon != 0.0:
        cols = [np.full_like(A, epsilon)] + cols
    return np.stack(cols, axis=-1)


@dataclass(frozen=True)
class OperatorStencil:
    """Grid-sampled coefficients of the linearised 2x2 operator.

    ``L11, L12, L21, L22`` each have shape ``(3, N)`` holding the
    coefficients of the zeroth, first and second derivative.
    """

    params: ModelParams
    profile: WaveProfile
    L11: np.ndarray
    L12: np.ndarray
    L21: np.ndarray
    L22: np.ndarray

    @property
    def grid(self):
        return self.profile.grid

    def apply(self, p_derivs, q_derivs):
        """Apply to perturbations given with their first two derivatives.

        Parameters
        ----------
        p_derivs, q_derivs : tuple of arrays
            ``(p, p_z, p_zz)`` and ``(q, q_z, q_zz)`` sampled on the grid.
        """
        p = np.asarray(p_derivs)
        q = np.asarray(q_derivs)
        first = np.sum(self.L11 * p, axis=0) + np.sum(self.L12 * q, axis=0)
        second = np.sum(self.L21 * p, axis=0) + np.sum(self.L22 * q, axis=0)
        return first, second

    def apply_fd(self, p, q):
        """Apply to plain samples, differentiating by finite differences."""
        h = self.profile.h
        pd = (p, central_difference(p, h, 1), central_difference(p, h, 2))
        qd = (q, central_difference(q, h, 1), central_difference(q, h, 2))
        return self.apply(pd, qd)


def operator_entries(log_u, r1, r2, z, params: ModelParams):
    """Entry coefficients from ``log u`` and the ratios, at points ``z``."""
    b, m, c, eps = params.beta, params.m, params.c, params.epsilon
    log_w = -c * z + b * log_u
    W = np.exp(log_w - log_u)  # w/u
    h = -c + b * r1  # w_z/w
    zero = np.zeros_like(r1)
    one = np.ones_like(r1)
    if m == 0.0:
        react = zero
    else:
        react = -m * np.exp(log_w + (m - 1.0) * log_u)
    L11 = np.stack([react, c * one, eps * one])
    L12 = np.stack([-np.exp(m * log_u), zero, zero])
    L21 = np.stack([b * W * (h * r1 + r2 - 2.0 * r1 * r1), b * W * (2.0 * r1 - h), -b * W])
    L22 = np.stack([b * (r1 * r1 - r2), c - b * r1, one])
    return L11, L12, L21, L22


def assemble_operator(profile: WaveProfile) -> OperatorStencil:
    """Sample the linearised operator on the profile grid.

    Every quotient by u is formed from ``log u`` and the ratios carried by
    the profile, so the entries stay finite where u underflows.
    """
    entries = operator_entries(profile.log_u, profile.r1, profile.r2, profile.grid, profile.params)
    for name, arr in zip(("L11", "L12", "L21", "L22"), entries):
        if not np.all(np.isfinite(arr)):
            raise SingularCoefficient(f"{name} has non-finite samples")
    return OperatorStencil(profile.params, profile, *entries)


@dataclass(frozen=True)
class QuarticCoeffs:
    """Coefficients A, B, C, D of the scalar spectral ODE sampled on a grid."""

    grid: np.ndarray
    lam: complex
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    params: ModelParams

    def residual(self, p_derivs):
        """``eps p'''' - D p''' - C p'' - B p' - A p`` for ``(p, p', ..., p'''')``."""
        p, p1, p2, p3, p4 = p_derivs
        return (self.params.epsilon * p4 - self.D * p3 - self.C * p2 - self.B * p1 - self.A * p)

    def to_csv(self, path):
        cols, header = [self.grid], ["z"]
        for name in "ABCD":
            arr = np.asarray(getattr(self, name), dtype=complex)
            cols += [arr.real, arr.imag]
            header += ["Re" + name, "Im" + name]
        return io.write_csv(path, header, cols)


def quartic_coeffs(profile: WaveProfile, lam) -> QuarticCoeffs:
    """Sample A, B, C, D on the profile grid at spectral parameter ``lam``."""
    lam = complex(lam)
    A, B, C, D = abcd(profile.r1.astype(complex), profile.r2, lam, profile.params)
    for name, arr in zip("ABCD", (A, B, C, D)):
        if not np.all(np.isfinite(arr)):
            raise SingularCoefficient(f"coefficient {name} has non-finite samples")
    D = np.broadcast_to(D, A.shape)
    return QuarticCoeffs(profile.grid, lam, A, B, C, D, profile.params)


@dataclass(frozen=True)
class AsymptoticCoeffs:
    """Limits of A, B, C, D as z -> +inf and z -> -inf."""

    params: ModelParams
    lam: complex
    Aplus: complex
    Bplus: complex
    Cplus: complex
    Dplus: complex
    Aminus: complex
    Bminus: complex
    Cminus: complex
    Dminus: complex

    def side(self, side):
        """``(A, B, C, D)`` for ``side`` in {'plus', 'minus'}."""
        if side in ("plus", "+"):
            return self.Aplus, self.Bplus, self.Cplus, self.Dplus
        if side in ("minus", "-"):
            return self.Aminus, self.Bminus, self.Cminus, self.Dminus
        raise ValueError(f"unknown side {side!r}")

    def poly(self, side):
        """Characteristic polynomial in mu, highest degree first."""
        return char_poly(*self.side(side), self.params.epsilon)


def limit_ratios(params: ModelParams, side):
    """``(r1, r2)`` limits: u -> 1 on the right, u ~ exp(c z/K) on the left."""
    if side in ("plus", "+"):
        return 0.0, 0.0
    if side in ("minus", "-"):
        a = params.left_rate
        return a, a * a
    raise ValueError(f"unknown side {side!r}")


def asymptotic_coeffs(params: ModelParams, lam) -> AsymptoticCoeffs:
    """Closed-form limits of the spectral ODE coefficients.

    ``lam`` may be a scalar or an array; the fields broadcast accordingly.
    """
    lam = np.asarray(lam, dtype=complex)
    plus = abcd(*limit_ratios(params, "plus"), lam, params)
    minus = abcd(*limit_ratios(params, "minus"), lam, params)
    if lam.ndim == 0:
        plus = tuple(complex(x) for x in plus)
        minus = tuple(complex(x) for x in minus)
        lam = complex(lam)
    return AsymptoticCoeffs(params, lam, *plus, *minus)
