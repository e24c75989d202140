"""Estimators for scattering-amplitude path expectations and the
identity / implication checks built on them.

All estimators share the engine's reproducibility contract: sample i of a
run uses the stream keyed (master_seed, index_offset + i), weights are
formed per sample, and means with error bars are taken once over the
assembled arrays.  Checks that compare two estimators (truncation sweeps,
decoupling) reuse the same sample indices on both sides, so the comparisons
hold samplewise, not just in distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .potentials import Potential, truncate
from .sde_engine import (
    DriftField,
    PathConfig,
    functional_integrals,
    ray_tail_bound,
    split_functional_batch,
)

PREMISE_LEVEL = 0.99      # absorption level above which the remainder of the
                          # potential is considered negligible
MODULUS_FLOOR = 0.5       # phase-amplitude modulus the implication predicts


@dataclass(eq=False)
class Estimate:
    """Real Monte Carlo estimate with its standard error and the mean of
    the per-sample ballistic tail bounds (a truncation diagnostic)."""

    mean: float
    stderr: float
    n: int
    mean_tail_bound: float


@dataclass(eq=False)
class ComplexEstimate:
    mean: complex
    stderr_re: float
    stderr_im: float
    n: int
    mean_tail_bound: float

    @property
    def modulus(self) -> float:
        return abs(self.mean)

    @property
    def modulus_stderr(self) -> float:
        # conservative: combines both component errors
        return math.hypot(self.stderr_re, self.stderr_im)


@dataclass(eq=False)
class SphereAverageReport:
    average: float
    stderr: float
    n_dirs: int
    n_per_dir: int
    directions: np.ndarray      # (n_dirs, 3)
    dir_means: np.ndarray       # (n_dirs,)
    dir_stderrs: np.ndarray     # (n_dirs,)
    mean_tail_bound: float


@dataclass(eq=False)
class TruncationSweepReport:
    radii: list
    estimates: list             # [Estimate]
    samplewise_nondecreasing: bool
    bands_disjoint: bool
    coupling: float


@dataclass(eq=False)
class DecouplingReport:
    """Two-phase factorization check at radii (inner_radius, outer_radius).

    ``combined`` estimates the expectation of the product of the two phase
    factors along one path; ``undivided`` the same weight without splitting
    (a lower bound samplewise); ``product_value`` multiplies the first-phase
    mean by an independently estimated origin-started outer factor."""

    combined: Estimate
    undivided: Estimate
    first_factor: Estimate
    outer_factor: Estimate
    product_value: float
    product_stderr: float
    gap: float
    gap_stderr: float
    samplewise_dominates: bool
    switch_fraction: float
    mean_switch_time: float
    inner_radius: float
    outer_radius: float


@dataclass(eq=False)
class ThresholdReport:
    premise: Estimate
    premise_met: bool
    lambdas: np.ndarray
    estimates: list             # [ComplexEstimate]
    moduli: np.ndarray
    moduli_stderr: np.ndarray
    moduli_ok: np.ndarray       # bool, 3-sigma-adjusted floor comparison
    implication_holds: bool
    remainder_radius: float
    truncation_radius: float
    coupling: float


@dataclass(eq=False)
class SummabilityReport:
    n: int
    drift_kind: str
    mean_integral: float
    quantiles: dict
    max_integral: float
    hist_counts: np.ndarray
    hist_edges: np.ndarray
    escaped_fraction: float
    mean_tail_bound: float


def _real_estimate(weights: np.ndarray, tails: np.ndarray) -> Estimate:
    n = len(weights)
    mean = float(np.mean(weights)) if n else math.nan
    stderr = float(np.std(weights, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(mean=mean, stderr=stderr, n=n,
                    mean_tail_bound=float(np.mean(tails)) if n else math.nan)


def _complex_estimate(weights: np.ndarray, tails: np.ndarray) -> ComplexEstimate:
    n = len(weights)
    mean = complex(np.mean(weights)) if n else complex(math.nan)
    if n > 1:
        se_re = float(np.std(weights.real, ddof=1) / math.sqrt(n))
        se_im = float(np.std(weights.imag, ddof=1) / math.sqrt(n))
    else:
        se_re = se_im = 0.0
    return ComplexEstimate(mean=mean, stderr_re=se_re, stderr_im=se_im, n=n,
                           mean_tail_bound=float(np.mean(tails)) if n else math.nan)


def _indices(n: int, offset: int) -> np.ndarray:
    if n < 1:
        raise DomainError(f"sample count must be >= 1, got {n}")
    return np.arange(offset, offset + n, dtype=np.int64)


# --------------------------------------------------------------------------
# primary estimators

def estimate_absorption(theta, potential: Potential, n: int, cfg: PathConfig,
                        *, index_offset: int = 0,
                        workers: int = 1) -> Estimate:
    """Absorption amplitude along direction ``theta``: the expectation of
    exp(-1/2 int |V| dt) over drifted paths from cfg.start, truncated at the
    horizon.  Exactly 1 with zero error for an identically zero potential."""
    drift = DriftField.constant(theta)
    _, absol, final = functional_integrals(drift, [potential], cfg,
                                           _indices(n, index_offset), workers)
    weights = np.exp(-0.5 * absol[0])
    tails = ray_tail_bound(potential, final,
                           np.broadcast_to(drift.theta, final.shape))
    return _real_estimate(weights, tails)


def estimate_phase_amplitude(theta, potential: Potential,
                             truncation_radius: float, n: int,
                             cfg: PathConfig, *, coupling: float = 1.0,
                             index_offset: int = 0,
                             workers: int = 1) -> ComplexEstimate:
    """Phase amplitude of the compactly truncated potential: expectation of
    exp(-(i coupling / 2) int V_R dt) with V_R the inner truncation at
    ``truncation_radius``.  Every sample has modulus one, so the estimate
    lies in the closed unit disk; negating ``coupling`` conjugates the
    result bitwise (same seeds)."""
    if not np.isfinite(coupling):
        raise DomainError(f"coupling must be finite, got {coupling!r}")
    drift = DriftField.constant(theta)
    inner = truncate(potential, truncation_radius, "inner")
    signed, _, final = functional_integrals(drift, [inner], cfg,
                                            _indices(n, index_offset), workers)
    weights = np.exp(-0.5j * coupling * signed[0])
    tails = ray_tail_bound(inner, final,
                           np.broadcast_to(drift.theta, final.shape))
    return _complex_estimate(weights, tails)


def estimate_radial_absorption(potential: Potential, n: int, cfg: PathConfig,
                               *, index_offset: int = 0,
                               workers: int = 1) -> Estimate:
    """Absorption amplitude along the radial (Bessel-ratio drift) process
    started at the origin; the direction-free side of the sphere-average
    identity."""
    drift = DriftField.bessel()
    _, absol, final = functional_integrals(drift, [potential], cfg,
                                           _indices(n, index_offset), workers)
    weights = np.exp(-0.5 * absol[0])
    r = np.linalg.norm(final, axis=-1, keepdims=True)
    dirs = np.where(r > 0.0, final / np.where(r > 0.0, r, 1.0), 0.0)
    tails = ray_tail_bound(potential, final, dirs)
    return _real_estimate(weights, tails)


def fibonacci_directions(n: int) -> np.ndarray:
    """Quasi-uniform unit directions from the Fibonacci sphere lattice,
    renormalized to unit length."""
    if n < 1:
        raise DomainError(f"need at least one direction, got {n}")
    i = np.arange(n, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / n
    phi = i * (math.pi * (3.0 - math.sqrt(5.0)))
    s = np.sqrt(np.maximum(1.0 - z * z, 0.0))
    dirs = np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    return dirs


def sphere_average_absorption(potential: Potential, n_dirs: int,
                              n_per_dir: int, cfg: PathConfig, *,
                              workers: int = 1) -> SphereAverageReport:
    """Absorption amplitude averaged over a Fibonacci direction lattice.

    Direction d uses sample indices [d * n_per_dir, (d+1) * n_per_dir), so
    the union over directions is one disjoint index range.  Normalized as a
    plain average: identically-zero potentials give exactly 1."""
    dirs = fibonacci_directions(n_dirs)
    means = np.empty(n_dirs)
    stderrs = np.empty(n_dirs)
    tails = np.empty(n_dirs)
    for d, theta in enumerate(dirs):
        est = estimate_absorption(theta, potential, n_per_dir, cfg,
                                  index_offset=d * n_per_dir, workers=workers)
        means[d] = est.mean
        stderrs[d] = est.stderr
        tails[d] = est.mean_tail_bound
    average = float(np.mean(means))
    stderr = float(np.sqrt(np.sum(stderrs ** 2)) / n_dirs)
    return SphereAverageReport(
        average=average, stderr=stderr, n_dirs=n_dirs, n_per_dir=n_per_dir,
        directions=dirs, dir_means=means, dir_stderrs=stderrs,
        mean_tail_bound=float(np.mean(tails)))


# --------------------------------------------------------------------------
# identity and implication checks

def truncation_sweep(theta, potential: Potential, radii, n: int,
                     cfg: PathConfig, *, coupling: float = 1.0,
                     workers: int = 1) -> TruncationSweepReport:
    """Absorption of the outer remainders of ``potential`` at increasing
    truncation radii, along shared paths.

    Paths do not depend on the potential, so one path ensemble serves every
    radius; with radii at least 2 apart the cutoff bands are disjoint and
    the per-sample weights are nondecreasing in the radius exactly, not
    just on average."""
    radii = [float(r) for r in radii]
    if len(radii) < 1:
        raise DomainError("truncation_sweep needs at least one radius")
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise DomainError(f"radii must be strictly increasing, got {radii}")
    if coupling <= 0.0 or not np.isfinite(coupling):
        raise DomainError(f"coupling must be positive, got {coupling!r}")
    drift = DriftField.constant(theta)
    outers = [truncate(potential, r, "outer") for r in radii]
    _, absol, final = functional_integrals(drift, outers, cfg,
                                           _indices(n, 0), workers)
    estimates = []
    nondecreasing = True
    prev = None
    for k, outer in enumerate(outers):
        weights = np.exp(-0.5 * coupling * absol[k])
        tails = ray_tail_bound(outer, final,
                               np.broadcast_to(drift.theta, final.shape))
        estimates.append(_real_estimate(weights, tails))
        if prev is not None and not np.all(weights >= prev):
            nondecreasing = False
        prev = weights
    bands_disjoint = all(b - a >= 2.0 for a, b in zip(radii, radii[1:]))
    return TruncationSweepReport(radii=radii, estimates=estimates,
                                 samplewise_nondecreasing=nondecreasing,
                                 bands_disjoint=bands_disjoint,
                                 coupling=coupling)


def decoupling_check(theta, potential: Potential, inner_radius: float,
                     outer_radius: float, n: int, cfg: PathConfig, *,
                     workers: int = 1) -> DecouplingReport:
    """Check that the absorption weight approximately factorizes across the
    first passage of an intermediate sphere.

    Along each path: phase 1 weighs the inner truncation at
    inner_radius / 2 until the path first reaches ``inner_radius``; phase 2
    weighs the outer remainder at ``outer_radius`` from there on.  The
    product of phase factors dominates the undivided weight samplewise, and
    its mean approaches (first-phase mean) * (origin-started outer factor)
    as ``outer_radius`` grows.  The outer factor is estimated from the
    disjoint index range [n, 2n)."""
    if inner_radius <= 2.0:
        raise DomainError(
            f"inner_radius must exceed 2, got {inner_radius!r}")
    if outer_radius <= inner_radius:
        raise DomainError("outer_radius must exceed inner_radius")
    phase1 = truncate(potential, inner_radius / 2.0, "inner")
    phase2 = truncate(potential, outer_radius, "outer")
    batch = split_functional_batch(theta, phase1, phase2, potential,
                                   inner_radius, cfg, _indices(n, 0),
                                   workers=workers)
    f = np.exp(-0.5 * batch.integral_phase1)
    g = np.exp(-0.5 * batch.integral_phase2)
    combined_w = f * g
    undivided_w = np.exp(-0.5 * batch.integral_full)
    combined = _real_estimate(combined_w, batch.tail_bound)
    undivided = _real_estimate(undivided_w, batch.tail_bound)
    first = _real_estimate(f, np.zeros_like(f))
    outer = estimate_absorption(theta, phase2, n, cfg, index_offset=n,
                                workers=workers)
    product = first.mean * outer.mean
    product_stderr = math.hypot(outer.mean * first.stderr,
                                first.mean * outer.stderr)
    gap = abs(combined.mean - product)
    gap_stderr = math.hypot(combined.stderr, product_stderr)
    switched = batch.switched
    return DecouplingReport(
        combined=combined, undivided=undivided, first_factor=first,
        outer_factor=outer, product_value=product,
        product_stderr=product_stderr, gap=gap, gap_stderr=gap_stderr,
        samplewise_dominates=bool(np.all(combined_w >= undivided_w)),
        switch_fraction=float(np.mean(switched)),
        mean_switch_time=(float(np.mean(batch.switch_times[switched]))
                          if switched.any() else math.nan),
        inner_radius=float(inner_radius), outer_radius=float(outer_radius))


def phase_threshold_check(theta, potential: Potential,
                          remainder_radius: float, truncation_radius: float,
                          lambdas, n: int, cfg: PathConfig, *,
                          coupling: float = 1.0,
                          workers: int = 1) -> ThresholdReport:
    """If the outer remainder at ``remainder_radius`` absorbs almost
    nothing (mean weight above 0.99), the phase amplitudes of its inner
    truncation at ``truncation_radius`` should stay away from the origin:
    modulus above 1/2 across a whole coupling grid.

    One path ensemble provides both the premise weights and the signed
    integrals; each grid coupling only reweights the same integrals, so the
    zero coupling entry is exactly 1 and opposite couplings give exact
    conjugates."""
    if truncation_radius < remainder_radius:
        raise DomainError("truncation_radius must be >= remainder_radius")
    lam = np.asarray(lambdas, dtype=float)
    if lam.ndim != 1 or len(lam) == 0 or not np.all(np.isfinite(lam)):
        raise DomainError("lambdas must be a nonempty finite 1-d grid")
    if coupling <= 0.0 or not np.isfinite(coupling):
        raise DomainError(f"coupling must be positive, got {coupling!r}")
    drift = DriftField.constant(theta)
    remainder = truncate(potential, remainder_radius, "outer")
    window = truncate(remainder, truncation_radius, "inner")
    signed, absol, final = functional_integrals(
        drift, [remainder, window], cfg, _indices(n, 0), workers)
    theta_dirs = np.broadcast_to(drift.theta, final.shape)
    premise_w = np.exp(-0.5 * coupling * absol[0])
    premise = _real_estimate(premise_w,
                             ray_tail_bound(remainder, final, theta_dirs))
    premise_met = premise.mean > PREMISE_LEVEL
    window_tails = ray_tail_bound(window, final, theta_dirs)
    estimates = []
    for lv in lam:
        weights = np.exp(-0.5j * lv * signed[1])
        estimates.append(_complex_estimate(weights, window_tails))
    moduli = np.array([e.modulus for e in estimates])
    moduli_se = np.array([e.modulus_stderr for e in estimates])
    moduli_ok = (moduli - 3.0 * moduli_se) > MODULUS_FLOOR
    return ThresholdReport(
        premise=premise, premise_met=premise_met, lambdas=lam,
        estimates=estimates, moduli=moduli, moduli_stderr=moduli_se,
        moduli_ok=moduli_ok,
        implication_holds=bool((not premise_met) or moduli_ok.all()),
        remainder_radius=float(remainder_radius),
        truncation_radius=float(truncation_radius), coupling=coupling)


def summability_histogram(drift: DriftField, potential: Potential, n: int,
                          cfg: PathConfig, *, bins: int = 40,
                          workers: int = 1) -> SummabilityReport:
    """Distribution of the absolute potential integral along paths: the
    empirical evidence that the path functional is finite and well spread.
    """
    _, absol, final = functional_integrals(drift, [potential], cfg,
                                           _indices(n, 0), workers)
    samples = absol[0]
    radii = np.linalg.norm(final, axis=-1)
    if drift.kind == "constant":
        dirs = np.broadcast_to(drift.theta, final.shape)
    else:
        r = radii[:, None]
        dirs = np.where(r > 0.0, final / np.where(r > 0.0, r, 1.0), 0.0)
    tails = ray_tail_bound(potential, final, dirs)
    counts, edges = np.histogram(samples, bins=bins)
    qs = {q: float(np.quantile(samples, q)) for q in (0.5, 0.9, 0.99)}
    return SummabilityReport(
        n=n, drift_kind=drift.kind, mean_integral=float(np.mean(samples)),
        quantiles=qs, max_integral=float(np.max(samples)),
        hist_counts=counts, hist_edges=edges,
        escaped_fraction=float(np.mean(radii > cfg.stop_radius)),
        mean_tail_bound=float(np.mean(tails)))
