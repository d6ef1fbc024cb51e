"""Pattern metrics: norms, radially averaged spectra and the regenerate-and-compare check."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import GridSpec, Pattern, RDParams
from .solver import SolverConfig, run_to_steady_state, stable_dt


class NoPeakError(ValueError):
    """The field has no spectral content away from k = 0."""


class ComparisonError(ZeroDivisionError):
    pass


def l2_norm(values) -> float:
    """Unnormalised ``sqrt(sum(f**2))`` over all nodes."""
    f = np.asarray(values, dtype=np.float64)
    if f.size == 0:
        raise ValueError("empty field")
    return math.sqrt(float(np.sum(f * f)))


def rel_norm_diff(a, b) -> float:
    """``| |a| - |b| | / |b|``: a difference of norms, so it ignores stripe orientation."""
    na, nb = l2_norm(a), l2_norm(b)
    if nb == 0.0:
        raise ComparisonError("reference field has zero norm")
    return abs(na - nb) / nb


def spectral_bin_width(grid: GridSpec) -> float:
    """Angular wavenumber step of the DFT on ``grid`` (the coarser axis)."""
    return min(2 * math.pi / (grid.nx * grid.dx), 2 * math.pi / (grid.ny * grid.dy))


def radial_spectrum(values: np.ndarray, grid: GridSpec) -> tuple[np.ndarray, np.ndarray]:
    """Mean power of the mean-removed field in rings of width one DFT step.

    Returns ``(k, power)`` where ``k`` are ring centres in radians per unit length,
    starting at ``k = 0``.
    """
    f = np.asarray(values, dtype=np.float64).reshape(grid.shape)
    f = f - f.mean()
    power = np.abs(np.fft.fft2(f)) ** 2
    ky = 2 * math.pi * np.fft.fftfreq(grid.ny, d=grid.dy)
    kx = 2 * math.pi * np.fft.fftfreq(grid.nx, d=grid.dx)
    kmag = np.hypot(*np.meshgrid(kx, ky))
    dk = spectral_bin_width(grid)
    ring = np.rint(kmag / dk).astype(np.int64).ravel()
    totals = np.bincount(ring, weights=power.ravel())
    counts = np.bincount(ring)
    mean = np.divide(totals, counts, out=np.zeros_like(totals), where=counts > 0)
    return np.arange(mean.size) * dk, mean


def _peak(k: np.ndarray, power: np.ndarray) -> float:
    scale = power.max(initial=0.0)
    if scale <= 0.0 or not np.isfinite(scale):
        raise NoPeakError("field is constant; no spectral peak")
    i = int(np.argmax(power[1:])) + 1
    dk = k[1] - k[0]
    if i + 1 >= power.size:
        return float(k[i])
    lo, mid, hi = power[i - 1], power[i], power[i + 1]
    curv = lo - 2.0 * mid + hi
    shift = 0.5 * (lo - hi) / curv if curv < 0 else 0.0
    return float(k[i] + np.clip(shift, -0.5, 0.5) * dk)


def dominant_mode(pattern: Pattern, fields: str = "u") -> float:
    """Wavenumber of the radial spectral peak, refined by a parabola through neighbouring rings.

    ``fields="both"`` averages the normalised u and v spectra.
    """
    k, power = radial_spectrum(pattern.u, pattern.grid)
    if fields == "both":
        _, pv = radial_spectrum(pattern.v, pattern.grid)
        norm_u, norm_v = power.max(initial=0.0), pv.max(initial=0.0)
        power = (power / norm_u if norm_u else power) + (pv / norm_v if norm_v else pv)
    elif fields != "u":
        raise ValueError("fields must be 'u' or 'both'")
    return _peak(k, power)


@dataclass
class PatternStats:
    l2_u: float
    l2_v: float
    u_min: float
    u_max: float
    v_min: float
    v_max: float
    dominant_k: float
    spectrum_k: np.ndarray = field(repr=False)
    spectrum_power: np.ndarray = field(repr=False)

    def summary(self) -> dict:
        d = asdict(self)
        d.pop("spectrum_k")
        d.pop("spectrum_power")
        return d


def pattern_stats(pattern: Pattern) -> PatternStats:
    k, power = radial_spectrum(pattern.u, pattern.grid)
    return PatternStats(
        l2_u=l2_norm(pattern.u), l2_v=l2_norm(pattern.v),
        u_min=float(pattern.u.min()), u_max=float(pattern.u.max()),
        v_min=float(pattern.v.min()), v_max=float(pattern.v.max()),
        dominant_k=_peak(k, power), spectrum_k=k, spectrum_power=power,
    )


@dataclass
class ValidationReport:
    params: dict
    norm_diff_u: float
    norm_diff_v: float
    k_reference: float
    k_regenerated: float
    bin_width: float
    reference_range: dict
    regenerated_range: dict
    threshold: float
    solver_steps: int
    solver_converged: bool
    passed: bool
    error: str | None = None

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def as_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict
        return d


def _ranges(p: Pattern) -> dict:
    return {"u": [float(p.u.min()), float(p.u.max())], "v": [float(p.v.min()), float(p.v.max())]}


def compare_patterns(params: RDParams, regenerated: Pattern, reference: Pattern,
                     threshold: float = 0.10, steps: int = 0, converged: bool = True) -> ValidationReport:
    du = rel_norm_diff(regenerated.u, reference.u)
    dv = rel_norm_diff(regenerated.v, reference.v)
    k_ref = dominant_mode(reference)
    try:
        k_new = dominant_mode(regenerated)
    except NoPeakError:
        k_new = 0.0
    width = spectral_bin_width(reference.grid)
    passed = du <= threshold and dv <= threshold and abs(k_new - k_ref) <= width
    return ValidationReport(params.as_dict(), du, dv, k_ref, k_new, width, _ranges(reference),
                            _ranges(regenerated), threshold, steps, converged, bool(passed))


def validate_inferred(inferred: RDParams, reference: Pattern, solver_cfg: SolverConfig | None = None,
                      threshold: float = 0.10, seed: int | None = None) -> ValidationReport:
    """Regenerate a pattern from ``inferred`` on the reference grid and compare macro properties.

    PASS needs both relative norm differences within ``threshold`` and dominant modes
    within one spectral bin.  A diverging solve is reported as FAIL, not raised.
    """
    from .solver import DivergenceError

    grid = reference.grid
    if solver_cfg is None:
        solver_cfg = SolverConfig.for_problem(inferred, grid)
    if seed is None:
        ref_seed = (reference.provenance or {}).get("solver", {}).get("rng_seed", 0)
        seed = int(ref_seed) + 1
    dt = min(solver_cfg.dt, stable_dt(inferred, grid))
    cfg = SolverConfig(**{**solver_cfg.as_dict(), "rng_seed": seed, "dt": dt})
    try:
        result = run_to_steady_state(inferred, grid, cfg)
    except DivergenceError as exc:
        nan = float("nan")
        return ValidationReport(inferred.as_dict(), nan, nan, dominant_mode(reference), nan,
                                spectral_bin_width(grid), _ranges(reference), {}, threshold,
                                exc.step, False, False, error=str(exc))
    return compare_patterns(inferred, result.pattern, reference, threshold, result.steps, result.converged)
