import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from turingpinn.analysis import (ComparisonError, NoPeakError, compare_patterns, dominant_mode, l2_norm,
                                 pattern_stats, radial_spectrum, rel_norm_diff, spectral_bin_width,
                                 validate_inferred)
from turingpinn.core import GridSpec, Pattern, params_for_pattern
from turingpinn.solver import SolverConfig, run_to_steady_state

finite = st.floats(-1e3, 1e3, allow_nan=False)


def _stripes(k, grid, angle=0.0, phase=0.3):
    xx, yy = grid.mesh()
    return np.cos(k * (math.cos(angle) * xx + math.sin(angle) * yy) + phase)


@pytest.mark.parametrize("k", [0.42, 0.6, 0.9])
@pytest.mark.parametrize("angle", [0.0, 0.5, math.pi / 2])
def test_dominant_mode_of_synthetic_stripes(k, angle):
    g = GridSpec()
    pat = Pattern(g, _stripes(k, g, angle), np.zeros(g.shape))
    assert dominant_mode(pat) == pytest.approx(k, abs=spectral_bin_width(g))


def test_dominant_mode_on_exact_grid_mode():
    g = GridSpec(64, 64, 0.0, 63.0, 0.0, 63.0)
    k = 2 * math.pi * 5 / (64 * g.dx)
    pat = Pattern(g, _stripes(k, g, phase=0.0), np.zeros(g.shape))
    assert dominant_mode(pat) == pytest.approx(k, rel=1e-9)


def test_both_fields_mode():
    g = GridSpec()
    pat = Pattern(g, _stripes(0.5, g), 0.1 * _stripes(0.5, g, 1.0))
    assert dominant_mode(pat, "both") == pytest.approx(0.5, abs=spectral_bin_width(g))
    with pytest.raises(ValueError):
        dominant_mode(pat, "w")


def test_constant_field_has_no_peak():
    g = GridSpec(8, 8)
    with pytest.raises(NoPeakError):
        dominant_mode(Pattern(g, np.full(g.shape, 2.0), np.zeros(g.shape)))


def test_radial_spectrum_conserves_power():
    g = GridSpec(16, 16)
    f = np.random.default_rng(0).normal(size=g.shape)
    k, power = radial_spectrum(f, g)
    assert k[0] == 0.0 and power[0] == pytest.approx(0.0, abs=1e-18)
    assert np.all(np.diff(k) > 0)


def test_l2_norm_values():
    assert l2_norm([3.0, 4.0]) == 5.0
    with pytest.raises(ValueError):
        l2_norm([])


@given(arrays(np.float64, 12, elements=finite), arrays(np.float64, 12, elements=finite))
@settings(max_examples=60, deadline=None)
def test_rel_norm_diff_properties(a, b):
    if l2_norm(b) == 0.0:
        with pytest.raises(ComparisonError):
            rel_norm_diff(a, b)
        return
    d = rel_norm_diff(a, b)
    assert d >= 0.0
    assert rel_norm_diff(b, b) == 0.0
    # a difference of norms ignores sign flips and permutations
    assert rel_norm_diff(-a[::-1], b) == pytest.approx(d, rel=1e-12, abs=1e-12)


@given(arrays(np.float64, 8, elements=st.floats(0.1, 10)), st.floats(0.01, 100))
@settings(max_examples=40, deadline=None)
def test_rel_norm_diff_of_scaled_field(b, c):
    assert rel_norm_diff(c * b, b) == pytest.approx(abs(c - 1), rel=1e-9, abs=1e-12)


def test_pattern_stats_summary():
    g = GridSpec()
    pat = Pattern(g, 2 * _stripes(0.6, g), _stripes(0.6, g))
    s = pattern_stats(pat)
    assert s.l2_u == pytest.approx(2 * s.l2_v)
    assert s.u_max <= 2.0 and s.u_min >= -2.0
    assert "spectrum_k" not in s.summary()
    assert s.dominant_k == pytest.approx(0.6, abs=spectral_bin_width(g))


def test_compare_patterns_verdicts():
    g = GridSpec()
    ref = Pattern(g, _stripes(0.42, g), 0.5 * _stripes(0.42, g))
    turned = Pattern(g, _stripes(0.42, g, angle=math.pi / 2), 0.5 * _stripes(0.42, g, angle=math.pi / 2))
    p = params_for_pattern("P")
    ok = compare_patterns(p, turned, ref)
    assert ok.passed and ok.verdict == "PASS"
    assert ok.norm_diff_u < 0.05
    louder = Pattern(g, 1.5 * ref.u, ref.v)
    assert not compare_patterns(p, louder, ref).passed
    finer = Pattern(g, _stripes(0.8, g), 0.5 * _stripes(0.8, g))
    bad = compare_patterns(p, finer, ref)
    assert not bad.passed and bad.as_dict()["verdict"] == "FAIL"


def test_validate_regenerates_on_the_reference_grid():
    g = GridSpec(16, 16, -9.0, 9.0, -9.0, 9.0)
    p = params_for_pattern("P")
    ref = run_to_steady_state(p, g, SolverConfig.for_problem(p, g, steady_tol=1e-7)).pattern
    rep = validate_inferred(p, ref, SolverConfig.for_problem(p, g, steady_tol=1e-7))
    assert rep.solver_converged
    assert rep.k_reference == pytest.approx(dominant_mode(ref))
    assert set(rep.reference_range) == {"u", "v"}


def test_validate_reports_divergence_as_fail():
    g = GridSpec(16, 16, -9.0, 9.0, -9.0, 9.0)
    p = params_for_pattern("P")
    ref = Pattern(g, _stripes(0.6, g), _stripes(0.6, g))
    runaway = p.with_values(alpha=50.0, beta=50.0)
    rep = validate_inferred(runaway, ref, SolverConfig.for_problem(p, g, max_steps=100_000))
    assert not rep.passed and rep.error is not None
