"""Potential library: a small set of standard radial and half-space shapes
plus smooth radial truncation.

A Potential bundles a vectorized evaluator with the metadata the sampling
engine needs to reason about tails: a global sup bound, a radius beyond
which a radial envelope is valid, and the envelope itself (nonincreasing in
r).  Evaluators are small dataclasses rather than closures so that
potentials can cross process boundaries when sampling in parallel.

Truncation multiplies by the smooth cutoff band [radius-1, radius+1].  The
outer piece is computed as V - V*omega, which makes the partition
inner + outer == V exact in floating point on the plateaus and correct to
the final rounding everywhere else.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core_math import CutoffSpec, as_vec3, smooth_cutoff, smoothstep
from .errors import ConfigError

STANDARD_KINDS = ("gaussian_bump", "ball_bump", "half_space", "power_decay",
                  "constant")


@dataclass(frozen=True)
class Potential:
    """A scalar potential on R^3 with tail metadata.

    ``evaluate`` maps points of shape (..., 3) to values of shape (...).
    ``bound`` dominates |V| everywhere; ``tail_profile(r)`` dominates |V|
    on spheres of radius r >= decay_radius and is nonincreasing.
    """

    evaluate: Callable
    bound: float
    decay_radius: float
    tail_profile: Callable
    label: str

    def __call__(self, points):
        return self.evaluate(points)


def _radii(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    return np.sqrt(np.sum(pts * pts, axis=-1))


# --- evaluators -----------------------------------------------------------

@dataclass(frozen=True)
class _GaussianBumpEval:
    amplitude: float
    center: np.ndarray
    width: float

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        d2 = np.sum((pts - self.center) ** 2, axis=-1)
        return self.amplitude * np.exp(-d2 / self.width ** 2)


@dataclass(frozen=True)
class _BallBumpEval:
    amplitude: float
    center: np.ndarray
    width: float

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        u = np.sum((pts - self.center) ** 2, axis=-1) / self.width ** 2
        t = 1.0 - u
        with np.errstate(divide="ignore"):
            arg = np.where(t > 0.0, 1.0 - 1.0 / np.where(t > 0.0, t, 1.0),
                           -np.inf)
        return self.amplitude * np.exp(arg)


@dataclass(frozen=True)
class _HalfSpaceEval:
    amplitude: float

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        return self.amplitude * smoothstep(pts[..., 0] + 0.5)


@dataclass(frozen=True)
class _PowerDecayEval:
    amplitude: float
    exponent: float

    def __call__(self, points):
        r2 = np.sum(np.asarray(points, dtype=float) ** 2, axis=-1)
        return self.amplitude * (1.0 + r2) ** (-0.5 * self.exponent)


@dataclass(frozen=True)
class _ConstantEval:
    amplitude: float

    def __call__(self, points):
        pts = np.asarray(points, dtype=float)
        return np.full(pts.shape[:-1], self.amplitude)


@dataclass(frozen=True)
class _InnerTruncEval:
    base: Potential
    cutoff: CutoffSpec

    def __call__(self, points):
        return self.base.evaluate(points) * smooth_cutoff(_radii(points),
                                                          self.cutoff)


@dataclass(frozen=True)
class _OuterTruncEval:
    base: Potential
    cutoff: CutoffSpec

    def __call__(self, points):
        v = self.base.evaluate(points)
        return v - v * smooth_cutoff(_radii(points), self.cutoff)


# --- tail profiles --------------------------------------------------------

@dataclass(frozen=True)
class _GaussianTail:
    amplitude: float
    center_norm: float
    width: float

    def __call__(self, r):
        d = np.maximum(np.asarray(r, dtype=float) - self.center_norm, 0.0)
        return self.amplitude * np.exp(-(d / self.width) ** 2)


@dataclass(frozen=True)
class _StepTail:
    """Constant level out to a support radius, zero beyond."""
    amplitude: float
    support: float

    def __call__(self, r):
        return np.where(np.asarray(r, dtype=float) < self.support,
                        self.amplitude, 0.0)


@dataclass(frozen=True)
class _ConstantTail:
    amplitude: float

    def __call__(self, r):
        return np.full(np.shape(r), self.amplitude)


@dataclass(frozen=True)
class _PowerTail:
    amplitude: float
    exponent: float

    def __call__(self, r):
        r_arr = np.asarray(r, dtype=float)
        return self.amplitude * (1.0 + r_arr ** 2) ** (-0.5 * self.exponent)


@dataclass(frozen=True)
class _CappedTail:
    """Base tail forced to zero at and beyond a compact-support radius."""
    base: Callable
    support: float

    def __call__(self, r):
        r_arr = np.asarray(r, dtype=float)
        return np.where(r_arr < self.support, self.base(r_arr), 0.0)


# --- constructors ---------------------------------------------------------

def _center_from_params(params, n_expected_tail: int, kind: str) -> np.ndarray:
    """Parse [A, c, w]-style params where c is either the literal 0 (origin)
    or three components [A, cx, cy, cz, w]."""
    if len(params) == n_expected_tail + 2:
        c = params[1]
        if c != 0:
            raise ConfigError(
                f"{kind}: scalar center must be 0 (origin); pass "
                f"[A, cx, cy, cz, ...] for an off-center bump")
        return np.zeros(3)
    if len(params) == n_expected_tail + 4:
        return as_vec3(params[1:4])
    raise ConfigError(
        f"{kind}: expected {n_expected_tail + 2} or {n_expected_tail + 4} "
        f"params, got {len(params)}")


def make_standard_potential(kind: str, params: Sequence[float]) -> Potential:
    """Build one of the standard potentials.

    Parameter layouts:
      gaussian_bump: [A, c, w]  (c = 0 for origin, or [A, cx, cy, cz, w])
      ball_bump:     [A, c, w]  (same center convention; support |x-c| < w)
      half_space:    [A]        (mollified indicator of {x1 > 0}, width 1)
      power_decay:   [A, alpha] (A * (1+|x|^2)^(-alpha/2))
      constant:      [A]
    """
    if kind not in STANDARD_KINDS:
        raise ConfigError(
            f"unknown potential kind {kind!r}; known: {', '.join(STANDARD_KINDS)}")
    params = [float(p) for p in params]
    a_abs = abs(params[0]) if params else 0.0

    if kind == "gaussian_bump":
        center = _center_from_params(params, 1, kind)
        amp, width = params[0], params[-1]
        if width <= 0.0:
            raise ConfigError(f"gaussian_bump: width must be > 0, got {width}")
        cn = float(np.linalg.norm(center))
        return Potential(
            evaluate=_GaussianBumpEval(amp, center, width),
            bound=a_abs,
            decay_radius=cn,
            tail_profile=_GaussianTail(a_abs, cn, width),
            label=f"gaussian_bump(A={amp:g}, c={tuple(center)}, w={width:g})")

    if kind == "ball_bump":
        center = _center_from_params(params, 1, kind)
        amp, width = params[0], params[-1]
        if width <= 0.0:
            raise ConfigError(f"ball_bump: width must be > 0, got {width}")
        cn = float(np.linalg.norm(center))
        return Potential(
            evaluate=_BallBumpEval(amp, center, width),
            bound=a_abs,
            decay_radius=cn + width,
            tail_profile=_StepTail(a_abs, cn + width),
            label=f"ball_bump(A={amp:g}, c={tuple(center)}, w={width:g})")

    if kind == "half_space":
        if len(params) != 1:
            raise ConfigError(f"half_space: expected [A], got {len(params)} params")
        return Potential(
            evaluate=_HalfSpaceEval(params[0]),
            bound=a_abs,
            decay_radius=0.0,
            tail_profile=_ConstantTail(a_abs),
            label=f"half_space(A={params[0]:g})")

    if kind == "power_decay":
        if len(params) != 2:
            raise ConfigError(f"power_decay: expected [A, alpha], got {len(params)}")
        amp, alpha = params
        if alpha <= 0.0:
            raise ConfigError(f"power_decay: exponent must be > 0, got {alpha}")
        return Potential(
            evaluate=_PowerDecayEval(amp, alpha),
            bound=a_abs,
            decay_radius=0.0,
            tail_profile=_PowerTail(a_abs, alpha),
            label=f"power_decay(A={amp:g}, alpha={alpha:g})")

    # constant
    if len(params) != 1:
        raise ConfigError(f"constant: expected [A], got {len(params)} params")
    return Potential(
        evaluate=_ConstantEval(params[0]),
        bound=a_abs,
        decay_radius=0.0,
        tail_profile=_ConstantTail(a_abs),
        label=f"constant(A={params[0]:g})")


def truncate(potential: Potential, radius: float, mode: str) -> Potential:
    """Smoothly truncate a potential at a radial band [radius-1, radius+1].

    mode "inner" keeps the part near the origin (compact support inside
    radius+1); mode "outer" keeps the complement, vanishing identically
    inside radius-1.  inner + outer reproduces the original potential.
    """
    if mode not in ("inner", "outer"):
        raise ConfigError(f"truncate mode must be 'inner' or 'outer', got {mode!r}")
    cutoff = CutoffSpec(radius=float(radius))
    if mode == "inner":
        return Potential(
            evaluate=_InnerTruncEval(potential, cutoff),
            bound=potential.bound,
            decay_radius=potential.decay_radius,
            tail_profile=_CappedTail(potential.tail_profile, radius + 1.0),
            label=f"inner[{radius:g}]({potential.label})")
    return Potential(
        evaluate=_OuterTruncEval(potential, cutoff),
        bound=potential.bound,
        decay_radius=potential.decay_radius,
        tail_profile=potential.tail_profile,
        label=f"outer[{radius:g}]({potential.label})")
