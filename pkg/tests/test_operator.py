import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kswave.errors import SingularCoefficient
from kswave.model import make_params
from kswave.operator import (abcd, assemble_operator, asymptotic_coeffs, char_poly, limit_ratios,
                             operator_entries, quartic_coeffs)
from kswave.roots import poly_roots

from conftest import cached_profile

TUPLES = [(0.0, 0.0, 2.0, 1.0), (0.0, 0.5, 1.0, 1.0), (1e-3, 0.3, 1.2, 1.5), (1e-2, 0.0, 2.0, 1.0)]


def _translation_derivs(prof):
    """(u_z, w_z) with two derivatives each, from the exact ratios."""
    p = prof.params
    b, c = p.beta, p.c
    r1, r2, r3, u, w = prof.r1, prof.r2, prof.r3, prof.u, prof.w
    h = -c + b * r1
    r1p = r2 - r1**2
    r1pp = r3 - 3 * r1 * r2 + 2 * r1**3
    hp, hpp = b * r1p, b * r1pp
    return ((r1 * u, r2 * u, r3 * u),
            (h * w, (hp + h * h) * w, (hpp + 3 * h * hp + h**3) * w))


@pytest.mark.parametrize("args", TUPLES)
def test_translation_mode_in_kernel(args):
    prof = cached_profile(*args)
    st_ = assemble_operator(prof)
    r_u, r_w = st_.apply(*_translation_derivs(prof))
    assert max(np.max(np.abs(r_u)), np.max(np.abs(r_w))) < 1e-6


def test_right_limits_of_entries():
    st_ = assemble_operator(cached_profile(0.0, 0.0, 2.0, 1.0))
    assert st_.L12[0, -1] == pytest.approx(-1.0, abs=1e-12)
    assert abs(st_.L22[0, -1]) < 1e-12
    assert np.allclose(st_.L12[0], -st_.profile.u ** st_.params.m)


def test_entries_finite_where_u_underflows():
    prof = cached_profile(0.0, 0.0, 1.05, 2.0)  # left rate 40, u underflows on the left
    assert prof.u[0] == 0.0
    st_ = assemble_operator(prof)
    for arr in (st_.L11, st_.L12, st_.L21, st_.L22):
        assert np.all(np.isfinite(arr))


def test_singular_coefficient_raised():
    prof = cached_profile(0.0, 0.0, 2.0, 1.0)
    r1 = prof.r1.copy()
    r1[10] = np.nan
    with pytest.raises(SingularCoefficient):
        assemble_operator(dataclasses.replace(prof, r1=r1))
    with pytest.raises(SingularCoefficient):
        quartic_coeffs(dataclasses.replace(prof, r1=r1), 0.1)


def test_quartic_examples_at_eps_zero():
    prof = cached_profile(0.0, 0.0, 2.0, 1.0)
    q = quartic_coeffs(prof, 0.3 + 0.2j)
    assert np.all(q.D == -1.0)
    assert q.C[-1] == pytest.approx(-1.0 + 0.3 + 0.2j, abs=1e-12)
    assert abs(quartic_coeffs(prof, 0.0).A[-1]) < 1e-12


@pytest.mark.parametrize("args", TUPLES)
def test_grid_ends_match_asymptotic_limits(args):
    prof = cached_profile(*args)
    lam = 0.4 - 0.7j
    q = quartic_coeffs(prof, lam)
    a = asymptotic_coeffs(prof.params, lam)
    for name, i, side in (("A", -1, "plus"), ("A", 0, "minus"), ("B", -1, "plus"), ("B", 0, "minus"),
                          ("C", -1, "plus"), ("C", 0, "minus"), ("D", -1, "plus"), ("D", 0, "minus")):
        lim = getattr(a, name + side)
        assert abs(getattr(q, name)[i] - lim) <= 1e-8 * max(1.0, abs(lim))


def test_left_ratio_limits_match_profile():
    p = make_params(1e-3, 0.3, 1.2, 1.5)
    prof = cached_profile(1e-3, 0.3, 1.2, 1.5)
    r1, r2 = limit_ratios(p, "minus")
    assert prof.r1[0] == pytest.approx(r1, rel=1e-9)
    assert prof.r2[0] == pytest.approx(r2, rel=1e-9)


def test_asymptotic_roots_at_zero():
    p = make_params(0, 0, 2, 1)
    a = asymptotic_coeffs(p, 0.0)
    minus = poly_roots(a.poly("minus"))
    assert np.min(np.abs(minus - 1.0)) < 1e-12 and np.min(np.abs(minus)) < 1e-12
    assert np.min(np.abs(poly_roots(a.poly("plus")) + 1.0)) < 1e-12
    assert len(a.poly("minus")) == 4  # explicit cubic at eps = 0


def test_char_poly_degree():
    assert char_poly(1, 2, 3, 4, 0.0).shape == (4,)
    assert char_poly(1, 2, 3, 4, 0.01).shape == (5,)


@settings(max_examples=20)
@given(st.floats(0, 0.9), st.floats(0.1, 1.5), st.floats(0.5, 2.0), st.floats(-1, 1), st.floats(-1, 1))
def test_lambda_dependence_is_quadratic(m, excess, c, lr, li):
    p = make_params(0.0, m, 1 - m + excess, c)
    r1, r2 = np.array([0.3, 1.1]), np.array([0.2, 2.0])
    lam = complex(lr, li)
    pts = [0.0, 1.0, -1.0]
    vals = [abcd(r1, r2, x, p) for x in pts]
    for k in range(4):
        y = np.array([np.broadcast_to(v[k], r1.shape) for v in vals], dtype=complex)
        coef = np.polyfit(pts, y, 2)
        interp = coef[0] * lam**2 + coef[1] * lam + coef[2]
        exact = np.broadcast_to(abcd(r1 + 0j, r2, lam, p)[k], r1.shape)
        assert np.allclose(interp, exact, rtol=1e-12, atol=1e-12)
    # lambda^2 appears only in A, with coefficient -1
    A = [np.asarray(abcd(r1, r2, x, p)[0]) for x in (0.0, 1.0, -1.0)]
    assert np.allclose(0.5 * (A[1] + A[2]) - A[0], -1.0)


def _p_and_q(z, lu, r1, r2, p, lam):
    """Test function p = exp(-z^2) with exact derivatives and q from the first equation."""
    e = np.exp(-z**2)
    P = [e, -2 * z * e, (4 * z**2 - 2) * e, (-8 * z**3 + 12 * z) * e, (16 * z**4 - 48 * z**2 + 12) * e]
    b, m, c, eps = p.beta, p.m, p.c, p.epsilon
    W = np.exp(-c * z + (b + m - 1) * lu)  # w u^(m-1)
    r1p = r2 - r1**2
    gW = -c + (b + m - 1) * r1  # W'/W
    W1 = gW * W
    W2 = ((b + m - 1) * r1p + gW**2) * W
    g0 = eps * P[2] + c * P[1] - m * W * P[0] - lam * P[0]
    g1 = eps * P[3] + c * P[2] - m * (W1 * P[0] + W * P[1]) - lam * P[1]
    g2 = eps * P[4] + c * P[3] - m * (W2 * P[0] + 2 * W1 * P[1] + W * P[2]) - lam * P[2]
    um = np.exp(-m * lu)
    q = (um * g0, um * (g1 - m * r1 * g0), um * (g2 - 2 * m * r1 * g1 + (m * m * r1**2 - m * r1p) * g0))
    return P, q


@pytest.mark.parametrize("args", TUPLES + [(0.05, 0.8, 0.6, 2.0)])
@pytest.mark.parametrize("lam", [0.0, 0.3 + 0.7j, -1.5 + 2j])
def test_scalar_equation_equivalent_to_system(args, lam):
    prof = cached_profile(*args)
    p = prof.params
    z = np.linspace(-6, 6, 2001)
    lu, r1, r2, _ = prof.ratios(z)
    P, q = _p_and_q(z, lu, r1, r2, p, lam)
    L11, L12, L21, L22 = operator_entries(lu, r1, r2, z, p)
    row1 = sum(L11[k] * P[k] for k in range(3)) + sum(L12[k] * q[k] for k in range(3)) - lam * P[0]
    row2 = sum(L21[k] * P[k] for k in range(3)) + sum(L22[k] * q[k] for k in range(3)) - lam * q[0]
    assert np.max(np.abs(row1)) < 1e-10  # q is built to satisfy the first row
    A, B, C, D = abcd(r1 + 0j, r2, lam, p)
    quartic = p.epsilon * P[4] - D * P[3] - C * P[2] - B * P[1] - A * P[0]
    scale = np.max(np.abs(quartic))
    assert np.max(np.abs(quartic - np.exp(p.m * lu) * row2)) < 1e-6 * max(scale, 1.0)


def test_quartic_residual_and_csv(tmp_path):
    prof = cached_profile(0.0, 0.0, 2.0, 1.0)
    q = quartic_coeffs(prof, 0.5j)
    res = q.residual([np.zeros_like(prof.grid)] * 5)
    assert np.all(res == 0)
    path = q.to_csv(tmp_path / "q.csv")
    assert path.read_text().splitlines()[0] == "z,ReA,ImA,ReB,ImB,ReC,ImC,ReD,ImD"
