from fractions import Fraction

import numpy as np
import pytest

from turingpinn.core import (PATTERN_IDS, GridSpec, ParameterError, Pattern, RDParams, params_for_pattern,
                             reaction_rhs)


def exact_rhs(u, v, lu, lv, p):
    F = Fraction
    d1, d2, a, b, r1, r2 = (F(x) for x in (p.d1, p.d2, p.alpha, p.beta, p.r1, p.r2))
    u, v, lu, lv = F(u), F(v), F(lu), F(lv)
    du = d1 * d2 * lu + a * u * (1 - r1 * v * v) + v * (1 - r2 * u)
    dv = d2 * lv + b * v * (1 + (a * r1 / b) * u * v) + u * (-a + r2 * v)
    return float(du), float(dv)


@pytest.mark.parametrize("name", PATTERN_IDS)
def test_reaction_rhs_matches_exact_rational_arithmetic(name):
    p = params_for_pattern(name)
    rng = np.random.default_rng(3)
    for u, v, lu, lv in rng.uniform(-1.5, 1.5, size=(20, 4)):
        got = reaction_rhs(u, v, lu, lv, p)
        want = exact_rhs(u, v, lu, lv, p)
        np.testing.assert_allclose(got, want, rtol=1e-13, atol=1e-15)


def test_reaction_rhs_at_origin_is_zero():
    assert reaction_rhs(0.0, 0.0, 0.0, 0.0, params_for_pattern("P")) == (0.0, 0.0)


def test_reaction_rhs_broadcasts():
    p = params_for_pattern("Q")
    u = np.linspace(-1, 1, 7)
    du, dv = reaction_rhs(u, u[::-1], 0.1 * u, -u, p)
    for i in range(7):
        a, b = reaction_rhs(u[i], u[::-1][i], 0.1 * u[i], -u[i], p)
        assert du[i] == a and dv[i] == b


def test_published_parameter_sets():
    p, q, r = (params_for_pattern(n) for n in "PQR")
    assert (p.d1, p.d2, p.alpha, p.beta, p.r1, p.r2) == (0.516, 2.0, 0.899, -0.91, 3.5, 0.0)
    assert (q.d1, q.d2, q.alpha, q.beta, q.r1, q.r2) == (0.3, 2.0, 0.7, -0.75, 3.5, 0.0)
    assert (r.d1, r.alpha, r.beta, r.r1, r.r2) == (0.516, 0.899, -0.91, 0.02, 0.2)
    assert params_for_pattern("p") == p


def test_unknown_pattern_is_rejected():
    with pytest.raises(KeyError, match="unknown pattern"):
        params_for_pattern("Z")


def test_gamma_is_tied_to_alpha():
    p = params_for_pattern("P")
    assert p.gamma == -p.alpha
    q = p.with_values(alpha=0.3)
    assert q.gamma == -0.3
    with pytest.raises(ParameterError):
        p.with_values(gamma=1.0)


def test_zero_beta_and_non_finite_values_are_rejected():
    p = params_for_pattern("P")
    with pytest.raises(ParameterError, match="beta"):
        p.with_values(beta=0.0)
    with pytest.raises(ParameterError, match="finite"):
        p.with_values(d1=float("nan"))


def test_dict_round_trip_and_gamma_check():
    p = params_for_pattern("R")
    assert RDParams.from_dict(p.as_dict()) == p
    bad = {**p.as_dict(), "gamma": 0.5}
    with pytest.raises(ParameterError, match="gamma"):
        RDParams.from_dict(bad)
    with pytest.raises(ParameterError, match="missing"):
        RDParams.from_dict({"d1": 1.0})


def test_trainable_vector_round_trip():
    p = params_for_pattern("Q")
    assert RDParams.from_trainable_vector(p.trainable_vector(), p.r2) == p


def test_grid_geometry():
    g = GridSpec()
    assert g.shape == (50, 50) and g.size == 2500
    assert g.dx == pytest.approx(60 / 49)
    assert g.x()[0] == g.x_min and g.x()[-1] == g.x_max
    pts = g.points()
    assert pts.shape == (2500, 2)
    # row-major: x varies fastest
    assert pts[1, 0] > pts[0, 0] and pts[1, 1] == pts[0, 1]
    assert pts[g.nx, 1] > pts[0, 1]


def test_edge_indices_cover_the_boundary_only():
    g = GridSpec(6, 5, 0, 5, 0, 4)
    idx = g.edge_indices()
    assert len(idx) == 2 * 6 + 2 * 3
    pts = g.points()[idx]
    on_edge = (np.isclose(pts[:, 0], 0) | np.isclose(pts[:, 0], 5) | np.isclose(pts[:, 1], 0)
               | np.isclose(pts[:, 1], 4))
    assert on_edge.all()


def test_grid_validation():
    with pytest.raises(ValueError):
        GridSpec(2, 5)
    with pytest.raises(ValueError):
        GridSpec(5, 5, 1.0, 0.0)


def test_refined_grid_keeps_bounds():
    g = GridSpec(5, 5, -1, 1, -1, 1).refined(2)
    assert (g.nx, g.ny) == (9, 9) and g.dx == pytest.approx(0.25)


def test_pattern_fields_are_read_only_and_finite():
    g = GridSpec(4, 3, 0, 3, 0, 2)
    pat = Pattern(g, np.arange(12.0), np.zeros(12))
    assert pat.u.shape == (3, 4)
    with pytest.raises(ValueError):
        pat.u[0, 0] = 1.0
    with pytest.raises(ValueError, match="finite"):
        Pattern(g, np.full(12, np.inf), np.zeros(12))
    assert pat.same_fields(Pattern(g, np.arange(12.0).reshape(3, 4), np.zeros((3, 4))))
