"""Shared numerical kernels: Bessel-ratio drift, smooth radial cutoffs,
and the outgoing free-space Green function.

Everything here is pure and vectorized over trailing axes; no RNG, no I/O.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError

# Crossover below which the small-argument series for the Bessel ratio is
# used instead of the hyperbolic closed form (which cancels badly near 0).
R_SWITCH = 1e-2


def as_vec3(x) -> np.ndarray:
    """Coerce to a finite float64 vector of shape (3,)."""
    v = np.asarray(x, dtype=float)
    if v.shape != (3,):
        raise DomainError(f"expected a 3-vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise DomainError(f"3-vector has non-finite entries: {v}")
    return v


def as_unit_vec3(x, tol: float = 1e-9) -> np.ndarray:
    """Coerce to a 3-vector and require unit length within ``tol``."""
    v = as_vec3(x)
    nrm = float(np.linalg.norm(v))
    if abs(nrm - 1.0) > tol:
        raise DomainError(f"expected a unit vector, |v| = {nrm!r}")
    return v


def bessel_drift_magnitude(r, nu: float = 0.5):
    """Ratio I_{nu+1}(r) / I_nu(r) of modified Bessel functions.

    For ``nu = 0.5`` (the radial-process case in three dimensions) this
    reduces to coth(r) - 1/r, evaluated by its Taylor series
    r/3 - r^3/45 + 2 r^5/945 below ``R_SWITCH`` to avoid cancellation.
    Other ``nu`` values are evaluated with a modified Lentz continued
    fraction; they are provided for experimentation and are checked only
    against direct Bessel evaluations, not against any diffusion.

    Accepts scalars or arrays of nonnegative ``r``; the value at 0 is the
    limit 0.
    """
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0.0) or not np.all(np.isfinite(r_arr)):
        raise DomainError("bessel_drift_magnitude requires finite r >= 0")
    if nu == 0.5:
        out = _ratio_half(r_arr)
    else:
        if nu <= -1.0 or not np.isfinite(nu):
            raise DomainError(f"order nu must be finite and > -1, got {nu!r}")
        out = _ratio_lentz(r_arr, nu)
    return out if r_arr.shape else float(out)


def _ratio_half(r: np.ndarray) -> np.ndarray:
    small = r < R_SWITCH
    out = np.empty_like(r)
    rs = r[small]
    r2 = rs * rs
    out[small] = rs * (1.0 / 3.0 - r2 * (1.0 / 45.0 - r2 * (2.0 / 945.0)))
    rb = r[~small]
    out[~small] = 1.0 / np.tanh(rb) - 1.0 / rb
    return out


def _ratio_lentz(r: np.ndarray, nu: float, tol: float = 1e-15,
                 max_terms: int = 400) -> np.ndarray:
    """I_{nu+1}(z)/I_nu(z) as the continued fraction
    1 / (2(nu+1)/z + 1 / (2(nu+2)/z + ...)), modified Lentz iteration."""
    z = np.atleast_1d(r).astype(float)
    out = np.zeros_like(z)
    pos = z > 0.0
    zp = z[pos]
    if zp.size:
        tiny = 1e-290
        f = np.full_like(zp, tiny)
        c = f.copy()
        d = np.zeros_like(zp)
        converged = np.zeros(zp.shape, dtype=bool)
        for k in range(1, max_terms + 1):
            act = ~converged
            b = 2.0 * (nu + k) / zp
            dn = b + d
            dn[dn == 0.0] = tiny
            dn = 1.0 / dn
            cn = b + 1.0 / c
            cn[cn == 0.0] = tiny
            delta = cn * dn
            # Freeze lanes once they have converged so a lane's value does
            # not depend on how it was batched with slower-converging radii.
            d[act] = dn[act]
            c[act] = cn[act]
            f[act] = f[act] * delta[act]
            converged |= act & (np.abs(delta - 1.0) < tol)
            if converged.all():
                break
        else:
            raise DomainError(
                f"Bessel-ratio continued fraction did not converge in "
                f"{max_terms} terms (nu={nu}, max z={zp.max():g})")
        out[pos] = f
    return out.reshape(np.shape(r))


def bessel_drift(positions, nu: float = 0.5):
    """Radial drift field p(|x|) * x/|x| with p the Bessel ratio.

    ``positions`` has shape (..., 3); the value at the origin is the zero
    vector (the ratio vanishes linearly).
    """
    x = np.asarray(positions, dtype=float)
    if x.shape[-1] != 3:
        raise DomainError(f"positions must have trailing axis 3, got {x.shape}")
    r = np.sqrt(np.sum(x * x, axis=-1))
    mag = bessel_drift_magnitude(r, nu=nu)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(r > 0.0, mag / np.where(r > 0.0, r, 1.0), 0.0)
    return x * scale[..., None]


@dataclass(frozen=True)
class CutoffSpec:
    """Radial cutoff profile: identically 1 inside ``radius - 1``,
    identically 0 outside ``radius + 1``, smooth monotone step between."""

    radius: float

    def __post_init__(self):
        if not np.isfinite(self.radius) or self.radius < 1.0:
            raise DomainError(
                f"cutoff radius must be finite and >= 1, got {self.radius!r}")


def smoothstep(t):
    """C-infinity monotone step: 0 for t <= 0, 1 for t >= 1, and
    h(t) / (h(t) + h(1-t)) with h(t) = exp(-1/t) in between.

    The plateau values are exact (h(0) underflows to an exact 0), and
    smoothstep(0.5) is exactly 0.5.
    """
    t_arr = np.asarray(t, dtype=float)
    out = np.empty_like(t_arr)
    lo = t_arr <= 0.0
    hi = t_arr >= 1.0
    mid = ~(lo | hi)
    out[lo] = 0.0
    out[hi] = 1.0
    if np.any(mid):
        tm = t_arr[mid]
        # -1/t overflows to -inf for subnormal t; exp then gives the
        # correct limit 0, so the overflow warning carries no information
        with np.errstate(over="ignore"):
            a = np.exp(-1.0 / tm)
            b = np.exp(-1.0 / (1.0 - tm))
        out[mid] = a / (a + b)
    return out if t_arr.shape else float(out)


def smooth_cutoff(r, spec: CutoffSpec):
    """Evaluate the cutoff profile of ``spec`` at radii ``r`` (scalar or
    array).  Exactly 1 for r <= radius - 1 and exactly 0 for r >= radius + 1;
    at r = radius the value is exactly 1/2."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0.0):
        raise DomainError("smooth_cutoff requires r >= 0")
    return smoothstep((spec.radius + 1.0 - r_arr) / 2.0)


def free_green(x, y, k: complex):
    """Outgoing free-space Green function exp(ik|x-y|) / (4 pi |x-y|).

    Requires Im k > 0 (so the kernel decays) and x != y.  ``x`` and ``y``
    broadcast over leading axes.
    """
    if not np.isfinite(k) or complex(k).imag <= 0.0:
        raise DomainError(f"free_green requires Im k > 0, got k = {k!r}")
    xv = np.asarray(x, dtype=float)
    yv = np.asarray(y, dtype=float)
    if xv.shape[-1] != 3 or yv.shape[-1] != 3:
        raise DomainError("free_green points must have trailing axis 3")
    diff = xv - yv
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    if np.any(dist == 0.0):
        raise DomainError("free_green is singular at coincident points")
    out = np.exp(1j * complex(k) * dist) / (4.0 * np.pi * dist)
    return out if np.ndim(dist) else complex(out)
