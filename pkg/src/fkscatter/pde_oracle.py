"""Deterministic finite-difference oracle for the first-exit expectation.

Solves the complex Dirichlet problem

    1/2 lap(phi) + drift_on * d(phi)/dx1 - (i/2) V phi = -F   on |x| < r,
    phi = 0                                                    on |x| = r,

on a uniform cube grid covering [-r, r]^3 with the ball carved out by a
node mask.  The same quantity is what the first-exit sampler estimates by
Monte Carlo, so the two sides cross-validate each other without either
being ground truth.

Discretization: 7-point Laplacian, centered (default) or forward-upwind
first difference for the drift term, and a complex diagonal from the
potential.  Nodes outside the open ball are pinned to zero.  Where a grid
link crosses the sphere, the exterior endpoint is eliminated by linear
interpolation between the interior node and the zero boundary value at
the crossing point; this keeps the scheme second order in the max norm
(plain masking without the correction degrades to first order, which
fails the h-refinement ratio check).

The linear system is solved matrix-free by BiCGSTAB with a Jacobi
preconditioner.  All operations are fixed-order numpy array arithmetic,
so repeated solves are bitwise identical, and negating V conjugates every
intermediate quantity exactly (F real), which the tests assert bitwise.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np
import yaml

from .errors import ConfigError, DomainError, SolverError
from .potentials import Potential
from .sde_engine import PathConfig, sample_exit_batch

REL_TOL = 1e-8
MAX_ITER = 100_000
# Boundary-crossing fractions below this are clamped; the eliminated ghost
# weight (1 - a) / a would otherwise blow up for nodes grazing the sphere.
ALPHA_FLOOR = 1e-3

_SCHEMES = ("centered", "upwind")


@dataclass(eq=False)
class GridSolution:
    """Solution values on the cube grid, zero outside the interior mask.

    ``h`` is the effective spacing (the requested spacing rounded so that
    2r is a whole number of cells and the center is a node).
    """

    h: float
    radius: float
    drift_on: bool
    scheme: str
    values: np.ndarray          # (m, m, m) complex
    interior: np.ndarray        # (m, m, m) bool
    iterations: int
    residual: float             # relative residual at termination

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def axis(self) -> np.ndarray:
        return _axis(self.m, self.h)

    def value_at(self, point) -> complex:
        """Trilinear interpolation at an off-node point inside the cube."""
        p = np.asarray(point, dtype=float)
        if p.shape != (3,):
            raise DomainError(f"query point must be a 3-vector, got {point!r}")
        half = (self.m // 2) * self.h
        if np.any(np.abs(p) > half):
            raise DomainError(
                f"query point {point!r} outside the grid cube of half-width "
                f"{half}")
        u = (p + half) / self.h
        i0 = np.minimum(np.floor(u).astype(int), self.m - 2)
        w = u - i0
        out = 0.0 + 0.0j
        for corner in range(8):
            off = [(corner >> a) & 1 for a in range(3)]
            wt = 1.0
            for a in range(3):
                wt *= w[a] if off[a] else 1.0 - w[a]
            out += wt * self.values[i0[0] + off[0],
                                    i0[1] + off[1],
                                    i0[2] + off[2]]
        return complex(out)

    # -- persistence ------------------------------------------------------

    def _header(self) -> dict:
        return {
            "format": "grid_solution",
            "version": 1,
            "m": int(self.m),
            "h": float(self.h),
            "radius": float(self.radius),
            "drift_on": bool(self.drift_on),
            "scheme": self.scheme,
            "iterations": int(self.iterations),
            "residual": float(self.residual),
            "dtype": "complex128",
            "order": "C",
        }

    def export_binary(self, stem: str) -> None:
        """Write ``stem`` + '.bin' (flat complex128, C order) and
        ``stem`` + '.yaml' (header with grid metadata)."""
        np.ascontiguousarray(self.values, dtype=np.complex128).tofile(
            stem + ".bin")
        with open(stem + ".yaml", "w") as fh:
            yaml.safe_dump(self._header(), fh, sort_keys=True)

    def export_csv(self, path: str) -> None:
        """Write interior nodes as ``i,j,k,re,im`` rows; non-interior nodes
        are identically zero and omitted.  Header comments carry the grid
        metadata needed to rebuild the full array."""
        hdr = self._header()
        idx = np.argwhere(self.interior)
        vals = self.values[self.interior]
        with open(path, "w") as fh:
            for key in ("format", "version", "m", "h", "radius", "drift_on",
                        "scheme", "iterations", "residual"):
                fh.write(f"# {key}={hdr[key]!r}\n")
            fh.write("# columns: i,j,k,re,im\n")
            for (i, j, k), v in zip(idx, vals):
                fh.write(f"{i},{j},{k},{float(v.real)!r},{float(v.imag)!r}\n")


def _rebuild(header: dict, values: np.ndarray) -> GridSolution:
    m = int(header["m"])
    h = float(header["h"])
    radius = float(header["radius"])
    interior = _interior_mask(m, h, radius)
    return GridSolution(h=h, radius=radius,
                        drift_on=bool(header["drift_on"]),
                        scheme=str(header["scheme"]),
                        values=values.reshape(m, m, m), interior=interior,
                        iterations=int(header["iterations"]),
                        residual=float(header["residual"]))


def load_binary(stem: str) -> GridSolution:
    with open(stem + ".yaml") as fh:
        header = yaml.safe_load(fh)
    if header.get("format") != "grid_solution":
        raise ConfigError(f"{stem}.yaml is not a grid solution header")
    values = np.fromfile(stem + ".bin", dtype=np.complex128)
    m = int(header["m"])
    if values.size != m ** 3:
        raise ConfigError(
            f"{stem}.bin holds {values.size} values, expected {m ** 3}")
    return _rebuild(header, values)


def load_csv(path: str) -> GridSolution:
    header = {}
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, raw = body.partition("=")
                    header[key.strip()] = raw.strip().strip("'\"")
                continue
            parts = line.split(",")
            rows.append((int(parts[0]), int(parts[1]), int(parts[2]),
                         float(parts[3]), float(parts[4])))
    if header.get("format") != "grid_solution":
        raise ConfigError(f"{path} is missing the grid solution header")
    m = int(header["m"])
    values = np.zeros((m, m, m), dtype=np.complex128)
    for i, j, k, re, im in rows:
        values[i, j, k] = re + 1j * im
    header["drift_on"] = header["drift_on"] in ("True", "1", "true")
    return _rebuild(header, values)


# --------------------------------------------------------------------------
# grid geometry

def _axis(m: int, h: float) -> np.ndarray:
    k = m // 2
    return (np.arange(m) - k) * h


def _interior_mask(m: int, h: float, radius: float) -> np.ndarray:
    ax = _axis(m, h)
    r2 = (ax[:, None, None] ** 2 + ax[None, :, None] ** 2
          + ax[None, None, :] ** 2)
    mask = r2 < radius * radius
    # cube faces never count as interior, whatever the rounding of m * h
    for a in range(3):
        sl = [slice(None)] * 3
        for edge in (0, m - 1):
            sl[a] = edge
            mask[tuple(sl)] = False
    return mask


def _grid_shape(radius: float, h: float):
    if not (np.isfinite(radius) and radius > 0.0):
        raise ConfigError(f"ball radius must be positive, got {radius!r}")
    if not (np.isfinite(h) and h > 0.0):
        raise ConfigError(f"grid spacing must be positive, got {h!r}")
    k = int(round(radius / h))
    if k < 10:
        raise ConfigError(
            f"grid spacing h = {h!r} too coarse for radius {radius!r}; "
            f"need h <= r / 10")
    return 2 * k + 1, radius / k


# --------------------------------------------------------------------------
# operator assembly (matrix-free)

class _Stencil:
    """Precomputed diagonal and neighbor links for one Dirichlet problem.

    ``diag`` holds the full diagonal (Laplacian center, drift center for
    the upwind scheme, potential term, and the eliminated boundary-ghost
    weights).  ``coeff[d]`` is the scalar weight of the neighbor in
    direction d; exterior neighbors contribute nothing because the state
    is kept zero outside the interior mask.
    """

    def __init__(self, potential: Potential, radius: float, h: float, m: int,
                 drift_on: bool, scheme: str):
        ax = _axis(m, h)
        interior = _interior_mask(m, h, radius)
        xx = np.broadcast_to(ax[:, None, None], (m, m, m))
        yy = np.broadcast_to(ax[None, :, None], (m, m, m))
        zz = np.broadcast_to(ax[None, None, :], (m, m, m))
        pts = np.stack([xx, yy, zz], axis=-1)
        vvals = np.asarray(potential.evaluate(pts.reshape(-1, 3)),
                           dtype=float).reshape(m, m, m)

        inv_h2 = 1.0 / (h * h)
        lap_off = 0.5 * inv_h2
        diag = np.zeros((m, m, m), dtype=np.complex128)
        diag[interior] = -3.0 * inv_h2 - 0.5j * vvals[interior]

        # neighbor weights per direction: (axis, step) -> scalar
        coeff = {}
        for a in range(3):
            for step in (-1, 1):
                c = lap_off
                if drift_on and a == 0:
                    if scheme == "centered":
                        c += step * (0.5 / h)
                    elif step == 1:
                        # forward difference (phi_E - phi_P) / h for unit
                        # drift along +x1 keeps every neighbor weight >= 0
                        c += 1.0 / h
                coeff[(a, step)] = c
        if drift_on and scheme == "upwind":
            diag[interior] -= 1.0 / h

        # eliminate sphere-crossing links: for an interior node whose
        # neighbor is not interior, the zero boundary value at the crossing
        # point a*h along the link folds back onto the diagonal
        rr2 = xx * xx + yy * yy + zz * zz
        for a in range(3):
            for step in (-1, 1):
                nbr_int = np.zeros_like(interior)
                src = [slice(None)] * 3
                dst = [slice(None)] * 3
                if step == 1:
                    dst[a] = slice(None, -1)
                    src[a] = slice(1, None)
                else:
                    dst[a] = slice(1, None)
                    src[a] = slice(None, -1)
                nbr_int[tuple(dst)] = interior[tuple(src)]
                cut = interior & ~nbr_int
                if not cut.any():
                    continue
                comp = (xx, yy, zz)[a][cut]
                c0 = rr2[cut] - radius * radius        # < 0 on interior
                bh = step * h * comp
                disc = bh * bh - (h * h) * c0
                s = (-bh + np.sqrt(np.maximum(disc, 0.0))) * inv_h2
                alpha = np.clip(np.where(disc >= 0.0, s, 1.0),
                                ALPHA_FLOOR, 1.0)
                diag[cut] -= coeff[(a, step)] * (1.0 - alpha) / alpha
        self.m = m
        self.interior = interior
        self.diag = diag
        self.coeff = coeff
        self.potential_values = vvals

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Matrix-vector product on the full (m, m, m) state; entries
        outside the interior mask are zero in and out."""
        y = self.diag * x
        c = self.coeff
        y[1:, :, :] += c[(0, -1)] * x[:-1, :, :]
        y[:-1, :, :] += c[(0, 1)] * x[1:, :, :]
        y[:, 1:, :] += c[(1, -1)] * x[:, :-1, :]
        y[:, :-1, :] += c[(1, 1)] * x[:, 1:, :]
        y[:, :, 1:] += c[(2, -1)] * x[:, :, :-1]
        y[:, :, :-1] += c[(2, 1)] * x[:, :, 1:]
        y[~self.interior] = 0.0
        return y


def _vdot(a: np.ndarray, b: np.ndarray) -> complex:
    return np.vdot(a, b)


def _norm(a: np.ndarray) -> float:
    return float(np.sqrt(np.vdot(a, a).real))


def _bicgstab(op: _Stencil, b: np.ndarray, rel_tol: float, max_iter: int):
    """Preconditioned BiCGSTAB on the full grid state.

    Jacobi preconditioning divides by the diagonal, which is bounded away
    from zero (it carries the -3/h^2 Laplacian center).  Breakdown of any
    inner product and failure to reach the tolerance both raise, reporting
    the last relative residual; the solve never silently returns garbage.
    """
    norm_b = _norm(b)
    if norm_b == 0.0:
        return np.zeros_like(b), 0, 0.0
    inv_diag = np.zeros_like(op.diag)
    np.divide(1.0, op.diag, out=inv_diag, where=op.interior)

    x = np.zeros_like(b)
    r = b.copy()
    r_hat = r.copy()
    rho = 1.0 + 0.0j
    alpha = 1.0 + 0.0j
    omega = 1.0 + 0.0j
    v = np.zeros_like(b)
    p = np.zeros_like(b)
    rel = 1.0
    for it in range(1, max_iter + 1):
        rho_new = _vdot(r_hat, r)
        if rho_new == 0.0 or not np.isfinite(rho_new):
            raise SolverError(
                f"BiCGSTAB breakdown (rho) at iteration {it}, relative "
                f"residual {rel:.3e}")
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        p_hat = inv_diag * p
        v = op.apply(p_hat)
        denom = _vdot(r_hat, v)
        if denom == 0.0 or not np.isfinite(denom):
            raise SolverError(
                f"BiCGSTAB breakdown (denominator) at iteration {it}, "
                f"relative residual {rel:.3e}")
        alpha = rho / denom
        s = r - alpha * v
        rel = _norm(s) / norm_b
        if rel <= rel_tol:
            x = x + alpha * p_hat
            return x, it, rel
        s_hat = inv_diag * s
        t = op.apply(s_hat)
        tt = _vdot(t, t)
        if tt == 0.0:
            raise SolverError(
                f"BiCGSTAB breakdown (t = 0) at iteration {it}, relative "
                f"residual {rel:.3e}")
        omega = _vdot(t, s) / tt
        x = x + alpha * p_hat + omega * s_hat
        r = s - omega * t
        rel = _norm(r) / norm_b
        if rel <= rel_tol:
            return x, it, rel
        if omega == 0.0 or not np.isfinite(omega):
            raise SolverError(
                f"BiCGSTAB breakdown (omega) at iteration {it}, relative "
                f"residual {rel:.3e}")
    raise SolverError(
        f"BiCGSTAB did not reach relative residual {rel_tol:g} within "
        f"{max_iter} iterations; last residual {rel:.3e}")


def solve_dirichlet(potential: Potential, forcing: Potential, radius: float,
                    h: float, drift_on: bool = True, *,
                    scheme: str = "centered", rel_tol: float = REL_TOL,
                    max_iter: int = MAX_ITER) -> GridSolution:
    """Solve the exit-expectation Dirichlet problem on the ball.

    ``potential`` enters as the complex absorption term -(i/2) V and
    ``forcing`` as the real source -F.  The requested spacing is rounded
    so the cell count across the ball is even and the center is a node;
    spacings above r / 10 are rejected (the centered drift difference
    needs the cell Peclet number h under control, and coarser grids are
    not oracle material anyway).
    """
    if scheme not in _SCHEMES:
        raise ConfigError(f"scheme must be one of {_SCHEMES}, got {scheme!r}")
    m, h_eff = _grid_shape(radius, h)
    op = _Stencil(potential, radius, h_eff, m, bool(drift_on), scheme)
    ax = _axis(m, h_eff)
    pts = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)
    fvals = np.asarray(forcing.evaluate(pts.reshape(-1, 3)),
                       dtype=float).reshape(m, m, m)
    b = np.zeros((m, m, m), dtype=np.complex128)
    b[op.interior] = -fvals[op.interior]
    x, iterations, residual = _bicgstab(op, b, rel_tol, max_iter)
    x[~op.interior] = 0.0
    return GridSolution(h=h_eff, radius=float(radius), drift_on=bool(drift_on),
                        scheme=scheme, values=x, interior=op.interior,
                        iterations=iterations, residual=residual)


def discrete_residual(solution: GridSolution, potential: Potential,
                      forcing: Potential) -> float:
    """Recompute the relative residual of a grid solution against a fresh
    assembly of its discrete system; lets callers audit the stored value."""
    op = _Stencil(potential, solution.radius, solution.h, solution.m,
                  solution.drift_on, solution.scheme)
    ax = _axis(solution.m, solution.h)
    pts = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1)
    fvals = np.asarray(forcing.evaluate(pts.reshape(-1, 3)),
                       dtype=float).reshape(solution.m, solution.m, solution.m)
    b = np.zeros_like(solution.values)
    b[op.interior] = -fvals[op.interior]
    norm_b = _norm(b)
    if norm_b == 0.0:
        return 0.0
    return _norm(b - op.apply(solution.values)) / norm_b


# --------------------------------------------------------------------------
# Monte Carlo cross-check

@dataclass(eq=False)
class PdeComparison:
    """Two-sided estimate of the same exit expectation.

    Neither side is ground truth: the Monte Carlo mean carries sampling
    error (``mc_stderr``) and the grid value carries discretization error,
    estimated from one refinement step assuming second-order convergence.
    ``combined_uncertainty`` adds three standard errors to that estimate.
    """

    mc_mean: complex
    mc_stderr: float
    mc_n: int
    mc_anomalies: int
    pde_value: complex
    pde_coarse_value: complex
    h_fine: float
    h_coarse: float
    discretization_estimate: float
    abs_difference: float
    rel_difference: float
    combined_uncertainty: float

    @property
    def agrees(self) -> bool:
        return self.abs_difference <= self.combined_uncertainty


def mc_vs_pde(potential: Potential, forcing: Potential, radius: float,
              point, h: float, n: int, cfg: PathConfig, *,
              drift_on: bool = True, workers: int = 1) -> PdeComparison:
    """Compare the first-exit Monte Carlo estimate at ``point`` with the
    interpolated grid solution.

    The path configuration's start is replaced by ``point`` (the grid side
    is a whole field, the sampler estimates it at one base point).  The
    discretization estimate comes from a coarse companion solve at twice
    the spacing when that is still an admissible grid, otherwise from a
    refined solve at half the spacing.
    """
    p = np.asarray(point, dtype=float)
    if p.shape != (3,) or float(np.linalg.norm(p)) >= radius:
        raise DomainError(
            f"comparison point {point!r} must lie inside the ball of "
            f"radius {radius}")
    if n < 2:
        raise DomainError(f"need at least two samples, got {n}")

    run_cfg = dataclasses.replace(cfg, start=tuple(p))
    batch = sample_exit_batch(potential, forcing, radius, run_cfg,
                              np.arange(n), drift_on=drift_on,
                              workers=workers)
    mc_mean = complex(np.mean(batch.values))
    se_re = float(np.std(batch.values.real, ddof=1) / math.sqrt(n))
    se_im = float(np.std(batch.values.imag, ddof=1) / math.sqrt(n))
    mc_stderr = math.hypot(se_re, se_im)

    fine = solve_dirichlet(potential, forcing, radius, h, drift_on)
    if round(radius / (2.0 * h)) >= 10:
        coarse = solve_dirichlet(potential, forcing, radius, 2.0 * h,
                                 drift_on)
        # second order: err(h) ~ |v_2h - v_h| / 3
        disc_scale = 1.0 / 3.0
    else:
        coarse = solve_dirichlet(potential, forcing, radius, 0.5 * h,
                                 drift_on)
        # the "coarse" companion is finer here: err(h) ~ (4/3) |v_h - v_h/2|
        disc_scale = 4.0 / 3.0
    v_fine = fine.value_at(p)
    v_coarse = coarse.value_at(p)
    disc = disc_scale * abs(v_fine - v_coarse)

    diff = abs(mc_mean - v_fine)
    denom = abs(v_fine)
    rel = diff / denom if denom > 0.0 else math.inf if diff > 0.0 else 0.0
    return PdeComparison(
        mc_mean=mc_mean, mc_stderr=mc_stderr, mc_n=n,
        mc_anomalies=batch.anomalies, pde_value=v_fine,
        pde_coarse_value=v_coarse, h_fine=fine.h, h_coarse=coarse.h,
        discretization_estimate=disc, abs_difference=diff,
        rel_difference=rel,
        combined_uncertainty=3.0 * mc_stderr + disc)
