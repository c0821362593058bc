import math

import numpy as np
import pytest
import sympy as sy
from hypothesis import given, settings, strategies as st

from kswave import point_spectrum as ps
from kswave.errors import FitUnreliable, FormulaPole, QuadratureDivergence, RequiresSingularLimit, ResidualTooLarge
from kswave.model import make_params
from kswave.spectral import WeightPair, default_weight

from conftest import cached_profile

EXACT_TUPLES = [(0.0, 0.0, 2.0, 1.0), (0.0, 0.5, 1.0, 1.0), (0.0, 0.3, 1.4, 2.0), (0.0, 0.9, 0.5, 0.7)]
SMOOTH_TUPLES = [(1e-3, 0.0, 2.0, 1.0), (1e-2, 0.3, 1.2, 1.5)]


def _valid(m, excess, c):
    return make_params(0.0, m, 1.0 - m + excess, c)


# eigenfunctions --------------------------------------------------------------

def test_translation_value_at_origin():
    e1, _ = ps.eigenfunctions(cached_profile(0.0, 0.0, 2.0, 1.0))
    z = e1.grid
    i = int(np.argmin(np.abs(z)))
    assert z[i] == 0.0
    assert abs(e1.pu[0][i] - 0.25) < 1e-14


@pytest.mark.parametrize("args", EXACT_TUPLES + SMOOTH_TUPLES)
def test_chain_residuals(args):
    e1, e2 = ps.eigenfunctions(cached_profile(*args), tol=1e-6)
    assert e1.residual < 1e-6 and e2.residual < 1e-6
    assert e1.kind == ps.TRANSLATION and e2.kind == ps.SPEED


@pytest.mark.parametrize("args", EXACT_TUPLES + SMOOTH_TUPLES)
def test_jordan_block(args):
    prof = cached_profile(*args)
    e1, e2 = ps.eigenfunctions(prof)
    M = ps.jordan_block(prof, e1, e2)
    assert np.allclose(M, [[0.0, -1.0], [0.0, 0.0]], atol=1e-6)


def test_translation_pair_equals_profile_derivatives():
    prof = cached_profile(1e-2, 0.3, 1.2, 1.5)
    e1, _ = ps.eigenfunctions(prof)
    assert np.allclose(e1.pu[0], prof.r1 * prof.u, rtol=0, atol=1e-15)
    uz = np.gradient(prof.u, prof.grid)
    assert np.max(np.abs(uz - e1.pu[0])[5:-5]) < 1e-3


def test_residual_check_raises():
    prof = cached_profile(0.0, 0.0, 2.0, 1.0)
    with pytest.raises(ResidualTooLarge) as info:
        ps.eigenfunctions(prof, tol=1e-30)
    assert info.value.residual > 0


def test_speed_pair_against_difference_in_c():
    p = make_params(0.0, 0.3, 1.4, 2.0)
    z = np.linspace(-5, 5, 11)
    h = 1e-5
    from kswave.model import closed_form_state
    up = np.exp(closed_form_state(p.replace(c=p.c + h), z)[0])
    um = np.exp(closed_form_state(p.replace(c=p.c - h), z)[0])
    pu, _ = ps.speed_closed(p, z)
    assert np.max(np.abs((up - um) / (2 * h) - pu[0])) < 1e-8


def test_symbolic_derivatives_match_closed_forms():
    z, c, b, m = sy.symbols("z c beta m", real=True)
    K = b + m - 1
    u = (1 + K * sy.exp(-c * z) / c**2) ** (-1 / K)
    w = sy.exp(-c * z) * u**b
    vals = {c: sy.Rational(3, 2), b: sy.Rational(6, 5), m: sy.Rational(3, 10)}
    p = make_params(0.0, 0.3, 1.2, 1.5)
    exprs = [sy.lambdify(z, sy.diff(f, var).subs(vals), "mpmath") for f in (u, w) for var in (z, c)]
    pts = np.array([-6.0, -1.3, 0.0, 0.7, 4.0])
    tu, tw = ps.translation_closed(p, pts)
    su, sw = ps.speed_closed(p, pts)
    ours = [tu[0], su[0], tw[0], sw[0]]
    for f, got in zip(exprs, ours):
        ref = np.array([float(f(x)) for x in pts])
        assert np.max(np.abs(ref - got) / np.maximum(np.abs(ref), 1e-300)) < 1e-10


# norms -----------------------------------------------------------------------

def test_reference_formula_value():
    assert ps.norm_translation_analytic(make_params(0, 0, 1.1, 1)) == pytest.approx(1 / 4.2 + 1 / 1.19, rel=1e-15)
    assert ps.norm_translation_analytic(make_params(0, 0, 1.1, 1)) == pytest.approx(1.0784313725490196, rel=1e-12)


def test_reference_formula_term_homogeneity():
    p1, p2 = make_params(0, 0.2, 1.3, 1.0), make_params(0, 0.2, 1.3, 2.0)
    K = p1.excess
    first = 1.0 / (4 + 2 * K)
    second = ps.norm_translation_analytic(p1) - first
    assert ps.norm_translation_analytic(p2) == pytest.approx(2 * first + 32 * second, rel=1e-13)


def test_reference_formula_pole():
    # beta^2 = 2 K^2 with m = 0: beta = 2 + sqrt(2)
    with pytest.raises(FormulaPole):
        ps.norm_translation_analytic(make_params(0, 0, 2 + math.sqrt(2), 1))
    near = make_params(0, 0, 2 + math.sqrt(2) + 1e-3, 1)
    assert math.isfinite(ps.norm_sq_quadrature(near))


def test_reference_formula_differs_from_quadrature():
    """The reference closed form misses the w-part; quadrature matches the exact form."""
    p = make_params(0, 0, 1.1, 1)
    q = ps.norm_sq_quadrature(p)
    assert abs(q - 0.3416149068322981) < 1e-12
    assert abs(ps.norm_translation_analytic(p) - q) / q > 1.0


@settings(max_examples=20)
@given(st.floats(0, 0.99), st.floats(0.05, 2.5), st.floats(0.3, 3))
def test_exact_norm_matches_quadrature(m, excess, c):
    p = _valid(m, excess, c)
    q = ps.norm_sq_quadrature(p)
    assert abs(ps.norm_translation_exact(p) - q) <= 1e-9 * q


@settings(max_examples=10)
@given(st.floats(0, 0.95), st.floats(0.05, 2.5), st.floats(0.5, 2))
def test_two_quadrature_rules_agree(m, excess, c):
    p = _valid(m, excess, c)
    for kind in (ps.TRANSLATION, ps.SPEED):
        a = ps.norm_sq_quadrature(p, kind, method="simpson")
        b = ps.norm_sq_quadrature(p, kind, method="quad")
        assert abs(a - b) <= 1e-6 * abs(b)


def test_generalised_norm_value():
    p = make_params(0, 0, 1.1, 1)
    a = ps.norm_speed_derivative(p)
    b = ps.norm_sq_quadrature(p, ps.SPEED, method="quad")
    assert abs(a - 2.340704946625924) < 1e-9
    assert abs(a - b) < 1e-6 * b


def test_generalised_norm_diverges_at_m1():
    with pytest.raises(QuadratureDivergence):
        ps.norm_speed_derivative(make_params(0, 1, 1.1, 1))


def test_quadrature_requires_singular_limit():
    with pytest.raises(RequiresSingularLimit):
        ps.norm_sq_quadrature(make_params(1e-3, 0, 2, 1))


def test_translation_norm_finite_at_m1():
    p = make_params(0, 1, 1.1, 1)
    q = ps.norm_sq_quadrature(p)
    assert abs(q - ps.norm_translation_exact(p)) < 1e-9 * q


def test_divergence_law_linear_growth():
    """At m = 1 the truncated generalised norm grows linearly with slope (2c/beta)^2; for m < 1 it saturates."""
    for c in (1.0, 2.0):
        p1 = make_params(0, 1, 1.1, c)
        a, b = ps.truncated_norm_sq(p1, ps.SPEED, 200), ps.truncated_norm_sq(p1, ps.SPEED, 400)
        assert abs((b - a) / 200 - (2 * c / 1.1) ** 2) < 1e-6 * (2 * c / 1.1) ** 2
    p0 = make_params(0, 0.5, 1.1, 1)
    a, b = ps.truncated_norm_sq(p0, ps.SPEED, 200), ps.truncated_norm_sq(p0, ps.SPEED, 400)
    assert abs(b / a - 1) < 1e-8


def test_norm_grows_towards_m1():
    vals = [ps.norm_speed_derivative(make_params(0, m, 1.1, 1)) for m in (0.5, 0.9, 0.95, 0.99)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_norm_sweep_rows():
    rows = ps.norm_sweep(1.1, [0.0, 0.5, 1.0], [1.0, 2.0])
    assert len(rows) == 6
    assert [r[:3] for r in rows[:3]] == [(0.0, 1.0, 1.1), (0.5, 1.0, 1.1), (1.0, 1.0, 1.1)]
    assert rows[2][3] == math.inf and rows[5][3] == math.inf
    assert all(math.isfinite(r[3]) for r in rows if r[0] < 1)


# decay and membership --------------------------------------------------------

@pytest.mark.parametrize("args", EXACT_TUPLES + SMOOTH_TUPLES)
def test_decay_rates_and_admissibility(args):
    prof = cached_profile(*args)
    p = prof.params
    e1, e2 = ps.eigenfunctions(prof)
    w = default_weight(p)
    r1 = ps.decay_admissibility(e1, w)
    assert abs(r1.left.rate - p.c / p.excess) < 0.01 * p.c / p.excess
    assert -r1.right.rate >= 0.99 * p.c
    assert r1.passed
    r2 = ps.decay_admissibility(e2, w)
    assert r2.passed
    assert r2.right.source == "spatial eigenvalue"


def test_decay_fails_for_excessive_weight():
    prof = cached_profile(0.0, 0.0, 2.0, 1.0)
    e1, _ = ps.eigenfunctions(prof)
    r = ps.decay_admissibility(e1, WeightPair(-2.0, 2.0))
    assert not r.left_pass and not r.right_pass


def test_fit_unreliable_on_noise():
    z = np.linspace(0, 1, 300)
    y = np.exp(-z) * (1 + 0.3 * np.sin(40 * z))
    with pytest.raises(FitUnreliable):
        ps.fit_tail_rate(z, y, "exp")
    with pytest.raises(FitUnreliable):
        ps.fit_tail_rate(z, np.sin(10 * z) + 2.0 - 2.0, "exp")


def test_zexp_fit_recovers_rate():
    z = np.linspace(-40, -30, 400)
    fit = ps.fit_tail_rate(z, (3 * z + 1) * np.exp(0.7 * z), "zexp")
    assert abs(fit.rate - 0.7) < 1e-6


def test_weighted_membership():
    prof = cached_profile(0.0, 0.0, 2.0, 1.0)
    e1, e2 = ps.eigenfunctions(prof)
    c, K = 1.0, 1.0
    assert ps.weighted_membership(e1, WeightPair(-c / (2 * K), c / 2))
    assert ps.weighted_membership(e1, WeightPair(0.0, 0.0))
    assert ps.weighted_membership(e2, WeightPair(0.0, 0.0))
    assert not ps.weighted_membership(e1, WeightPair(-c / (2 * K), 2 * c))


def test_eigenpair_csv(tmp_path):
    e1, _ = ps.eigenfunctions(cached_profile(0.0, 0.0, 2.0, 1.0))
    path = tmp_path / "e1.csv"
    e1.to_csv(path)
    head = path.read_text().splitlines()
    assert head[0] == "z,pu,pw"
    assert len(head) == len(e1.grid) + 1


def test_decay_passes_for_admissible_weights():
    from kswave.spectral import find_admissible_weights
    prof = cached_profile(0.0, 0.0, 1.5, 1.0)
    weights = find_admissible_weights(prof.params)
    assert weights
    pairs = ps.eigenfunctions(prof)
    for w in weights[:: max(1, len(weights) // 5)]:
        for e in pairs:
            assert ps.decay_admissibility(e, w).passed
