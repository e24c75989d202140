"""Reproducible sampling of drifted diffusions and their path functionals.

Reproducibility model: every path owns a counter-based RNG stream keyed by
(master_seed, sample_index), and every kernel draws from a stream in a fixed
pattern that does not depend on how paths were batched together.  Per-sample
outputs are therefore bitwise identical for any chunk size or worker count;
means and error bars are taken once, centrally, over arrays assembled in
sample-index order.

Draw patterns (per path):

- constant-drift horizon kernels: one standard_normal((n_steps, 3)) call,
  then (only where sphere crossings are monitored) one uniform(n_steps) call;
- Bessel-drift kernels: standard_normal((block, 3)) calls with a fixed block
  length, consumed sequentially;
- first-exit kernels: alternating standard_normal((block, 3)) and
  uniform(block) calls until the path exits.

First-exit sampling uses grid crossings with linear interpolation of the
crossing fraction plus a Brownian-bridge sub-step test (crossing probability
exp(-2 d0 d1 / dt) toward the sphere); without the bridge test the exit-time
mean carries a +O(sqrt(dt)) boundary bias that is visible at the tolerances
this package is validated to.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core_math import as_vec3, as_unit_vec3, bessel_drift
from .errors import ConfigError, DomainError
from .potentials import Potential

# Work-unit size when splitting an index range across workers; fixed so that
# results do not depend on the worker count.
PAYLOAD_CHUNK = 8192
# Time-block length for sequential (Bessel / first-exit) kernels.
BESSEL_BLOCK = 1024
EXIT_BLOCK = 256
# Float budget per subchunk of the horizon kernels (positions + draws).
_CHUNK_FLOATS = 4_000_000
# First-exit paths still inside after 50 r^2 / dt steps are recorded as
# anomalies and stopped.
EXIT_CAP_FACTOR = 50.0

_TAIL_NODES = np.concatenate([[0.0], np.logspace(-3.0, 6.0, 128)])


def stream_for(master_seed: int, sample_index: int) -> np.random.Generator:
    """Counter-based stream for one sample: Philox keyed by (seed, index)."""
    key = np.array([master_seed, sample_index], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class PathConfig:
    """Time-stepping and reproducibility parameters shared by all kernels.

    ``t_max`` is the truncation horizon for functional integrals;
    ``stop_radius`` is the escape radius used for the escaped-fraction
    diagnostic and must satisfy t_max >= 2 * stop_radius so drifted paths
    have comfortably left by the horizon.
    """

    dt: float
    t_max: float
    stop_radius: float
    master_seed: int
    start: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if not (0.0 < self.dt <= 1e-2):
            raise ConfigError(f"dt must be in (0, 1e-2], got {self.dt!r}")
        if self.stop_radius <= 0.0:
            raise ConfigError(f"stop_radius must be > 0, got {self.stop_radius!r}")
        if self.t_max < 2.0 * self.stop_radius:
            raise ConfigError(
                f"t_max = {self.t_max!r} must be >= 2 * stop_radius = "
                f"{2.0 * self.stop_radius!r}")
        if not isinstance(self.master_seed, (int, np.integer)):
            raise ConfigError(f"master_seed must be an integer, got "
                              f"{type(self.master_seed).__name__}")
        if not (0 <= int(self.master_seed) < 2 ** 64):
            raise ConfigError(f"master_seed must fit in 64 bits, got "
                              f"{self.master_seed!r}")
        object.__setattr__(self, "start", tuple(float(c) for c in self.start))
        as_vec3(self.start)

    @property
    def n_steps(self) -> int:
        n = int(round(self.t_max / self.dt))
        return max(n, 1)

    @property
    def t_end(self) -> float:
        return self.n_steps * self.dt

    def start_vec(self) -> np.ndarray:
        return np.asarray(self.start, dtype=float)


@dataclass(frozen=True, eq=False)
class DriftField:
    """Either the constant unit drift of a scattering direction or the
    radial Bessel-ratio drift of the conditioned free path."""

    kind: str
    theta: np.ndarray = field(default=None)

    @staticmethod
    def constant(theta) -> "DriftField":
        return DriftField(kind="constant", theta=as_unit_vec3(theta))

    @staticmethod
    def bessel() -> "DriftField":
        return DriftField(kind="bessel")

    def __post_init__(self):
        if self.kind not in ("constant", "bessel"):
            raise DomainError(f"unknown drift kind {self.kind!r}")
        if self.kind == "constant" and self.theta is None:
            raise DomainError("constant drift requires a direction")

    def __call__(self, positions):
        if self.kind == "constant":
            return np.broadcast_to(self.theta,
                                   np.shape(positions)).astype(float)
        return bessel_drift(positions)


@dataclass(eq=False)
class FunctionalSample:
    """Path functional of one sample: signed and absolute potential
    integrals along the path up to t_end, plus tail diagnostics."""

    integral_V: float
    integral_absV: float
    t_end: float
    escaped: bool
    tail_bound: float


@dataclass(eq=False)
class FunctionalBatch:
    integral_V: np.ndarray      # (n,)
    integral_absV: np.ndarray   # (n,)
    t_end: float
    escaped: np.ndarray         # (n,) bool
    tail_bound: np.ndarray      # (n,)


@dataclass(eq=False)
class ExitBatch:
    """First-exit functionals: values of the accumulated source integral
    with phase weight at the exit time, per sample."""

    values: np.ndarray          # (n,) complex
    exit_times: np.ndarray      # (n,)
    capped: np.ndarray          # (n,) bool
    radius: float

    @property
    def anomalies(self) -> int:
        return int(np.count_nonzero(self.capped))


@dataclass(eq=False)
class SplitBatch:
    """Per-sample pieces of a two-phase functional along one path: the
    first-phase integrand up to the switch at the first crossing of
    ``switch_radius``, the second-phase integrand afterwards, and the
    undivided integrand over the whole horizon (summed with identical
    term structure so that samplewise comparisons are exact)."""

    integral_phase1: np.ndarray   # (n,)
    integral_phase2: np.ndarray   # (n,)
    integral_full: np.ndarray     # (n,)
    switch_times: np.ndarray      # (n,)
    switched: np.ndarray          # (n,) bool
    t_end: float
    tail_bound: np.ndarray        # (n,)


@dataclass(eq=False)
class LaplaceCheck:
    """Monte Carlo exit-time Laplace transform against the closed form."""

    mean: float
    stderr: float
    reference: float
    beta: float
    radius: float
    n: int
    anomalies: int


# --------------------------------------------------------------------------
# shared helpers

def _chunk_indices(indices: np.ndarray, size: int):
    for lo in range(0, len(indices), size):
        yield indices[lo:lo + size]


def _run_payloads(worker, payloads, workers: int):
    if workers <= 1:
        return [worker(p) for p in payloads]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(worker, payloads))


def _trapezoid_terms(vals: np.ndarray, dt: float) -> np.ndarray:
    """Per-step trapezoid contributions (..., n_steps) from node values
    (..., n_steps+1).  Shared by every constant-drift kernel so sums built
    from the same path agree term by term."""
    return (vals[..., :-1] + vals[..., 1:]) * (0.5 * dt)


def _draw_normals(gens, n_steps: int) -> np.ndarray:
    out = np.empty((len(gens), n_steps, 3))
    for i, g in enumerate(gens):
        out[i] = g.standard_normal((n_steps, 3))
    return out


def _draw_uniforms(gens, n_steps: int) -> np.ndarray:
    out = np.empty((len(gens), n_steps))
    for i, g in enumerate(gens):
        out[i] = g.random(n_steps)
    return out


def _as_index_array(indices) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise DomainError("sample indices must be one-dimensional")
    if len(idx) and idx.min() < 0:
        raise DomainError("sample indices must be nonnegative")
    return idx


def ray_tail_bound(potential: Potential, final_pos: np.ndarray,
                   drift_dir: np.ndarray) -> np.ndarray:
    """Upper bound for the remaining |V| integral if the path kept moving
    ballistically from ``final_pos`` along ``drift_dir``: integrates the
    radial envelope along the ray, extrapolating the far tail by a local
    power fit (infinite when the envelope does not decay).

    Heuristic bound for reporting; positions with radius below the
    potential's decay_radius make it loose but it is never used in the
    estimators themselves.
    """
    fp = np.atleast_2d(np.asarray(final_pos, dtype=float))
    dd = np.broadcast_to(np.asarray(drift_dir, dtype=float), fp.shape)
    d0sq = np.sum(fp * fp, axis=-1, keepdims=True)
    proj = np.sum(fp * dd, axis=-1, keepdims=True)
    s = _TAIL_NODES[None, :]
    radii = np.sqrt(np.maximum(d0sq + 2.0 * s * proj + s * s, 0.0))
    prof = np.asarray(potential.tail_profile(radii), dtype=float)
    base = np.trapezoid(prof, x=_TAIL_NODES, axis=1)
    # power-law extrapolation of the remainder beyond the last node
    f1, f2 = prof[:, -2], prof[:, -1]
    r1, r2 = radii[:, -2], radii[:, -1]
    with np.errstate(divide="ignore", invalid="ignore"):
        expo = np.log(f1 / f2) / np.log(r2 / r1)
        rem = np.where(f2 <= 0.0, 0.0,
                       np.where(expo > 1.01, f2 * r2 / np.maximum(expo - 1.0, 1e-10),
                                np.inf))
    return base + rem


# --------------------------------------------------------------------------
# horizon kernels (fixed number of steps)

def _integrals_constant(theta, potentials, cfg, idx):
    """Paths x_0 = start, x_{j+1} = x_j + theta dt + sqrt(dt) xi_j for
    n_steps steps; returns per-potential integrals (shared trapezoid term
    structure, pairwise-summed per path) and final positions."""
    n_steps = cfg.n_steps
    dt = cfg.dt
    b = len(idx)
    signed = [np.empty(b) for _ in potentials]
    absol = [np.empty(b) for _ in potentials]
    final = np.empty((b, 3))
    sub_size = max(1, _CHUNK_FLOATS // (3 * (n_steps + 1)))
    start = cfg.start_vec()
    for lo in range(0, b, sub_size):
        sub = idx[lo:lo + sub_size]
        gens = [stream_for(cfg.master_seed, int(i)) for i in sub]
        xi = _draw_normals(gens, n_steps)
        xi *= math.sqrt(dt)
        xi += theta * dt
        pos = np.empty((len(sub), n_steps + 1, 3))
        pos[:, 0] = start
        np.cumsum(xi, axis=1, out=pos[:, 1:])
        pos[:, 1:] += start
        del xi
        for k, pot in enumerate(potentials):
            vals = pot.evaluate(pos)
            terms = _trapezoid_terms(vals, dt)
            signed[k][lo:lo + len(sub)] = np.sum(terms, axis=-1)
            absol[k][lo:lo + len(sub)] = np.sum(
                _trapezoid_terms(np.abs(vals), dt), axis=-1)
        final[lo:lo + len(sub)] = pos[:, -1]
        del pos
    return signed, absol, final


def _integrals_bessel(potentials, cfg, idx):
    """Sequential Euler-Maruyama with the radial Bessel-ratio drift.

    Node values are accumulated pairwise per step ((v_j + v_{j+1}) running
    sum, scaled by dt/2 at the end), one fixed order per path.
    """
    n_steps = cfg.n_steps
    dt = cfg.dt
    sq = math.sqrt(dt)
    b = len(idx)
    signed = [np.empty(b) for _ in potentials]
    absol = [np.empty(b) for _ in potentials]
    final = np.empty((b, 3))
    sub_size = max(16, _CHUNK_FLOATS // (3 * BESSEL_BLOCK))
    start = cfg.start_vec()
    for lo in range(0, b, sub_size):
        sub = idx[lo:lo + sub_size]
        m = len(sub)
        gens = [stream_for(cfg.master_seed, int(i)) for i in sub]
        pos = np.broadcast_to(start, (m, 3)).copy()
        v_prev = [np.asarray(pot.evaluate(pos), dtype=float).copy()
                  for pot in potentials]
        s_signed = [np.zeros(m) for _ in potentials]
        s_abs = [np.zeros(m) for _ in potentials]
        done = 0
        while done < n_steps:
            block = min(BESSEL_BLOCK, n_steps - done)
            xi = _draw_normals(gens, block)
            for j in range(block):
                pos += bessel_drift(pos) * dt
                pos += sq * xi[:, j]
                for k, pot in enumerate(potentials):
                    v = np.asarray(pot.evaluate(pos), dtype=float)
                    s_signed[k] += v_prev[k] + v
                    s_abs[k] += np.abs(v_prev[k]) + np.abs(v)
                    v_prev[k] = v
            done += block
        for k in range(len(potentials)):
            signed[k][lo:lo + m] = s_signed[k] * (0.5 * dt)
            absol[k][lo:lo + m] = s_abs[k] * (0.5 * dt)
        final[lo:lo + m] = pos
    return signed, absol, final


def _functional_worker(payload):
    drift, potentials, cfg, idx = payload
    if drift.kind == "constant":
        return _integrals_constant(drift.theta, potentials, cfg, idx)
    return _integrals_bessel(potentials, cfg, idx)


def functional_integrals(drift: DriftField, potentials, cfg: PathConfig,
                         indices, workers: int = 1):
    """Signed and absolute integrals of several potentials along the same
    paths.  Returns (signed, absolute, final_positions) where the first two
    are lists of (n,) arrays aligned with ``potentials``."""
    pots = list(potentials)
    idx = _as_index_array(indices)
    payloads = [(drift, pots, cfg, chunk)
                for chunk in _chunk_indices(idx, PAYLOAD_CHUNK)]
    parts = _run_payloads(_functional_worker, payloads, workers)
    signed = [np.concatenate([p[0][k] for p in parts]) if parts else np.empty(0)
              for k in range(len(pots))]
    absol = [np.concatenate([p[1][k] for p in parts]) if parts else np.empty(0)
             for k in range(len(pots))]
    final = (np.concatenate([p[2] for p in parts])
             if parts else np.empty((0, 3)))
    return signed, absol, final


def _drift_dirs(drift: DriftField, final_pos: np.ndarray) -> np.ndarray:
    if drift.kind == "constant":
        return np.broadcast_to(drift.theta, final_pos.shape)
    r = np.linalg.norm(final_pos, axis=-1, keepdims=True)
    return np.where(r > 0.0, final_pos / np.where(r > 0.0, r, 1.0), 0.0)


def simulate_functional_batch(drift: DriftField, potential: Potential,
                              cfg: PathConfig, indices,
                              workers: int = 1) -> FunctionalBatch:
    """Potential integrals along ``len(indices)`` paths of the drifted
    diffusion started at cfg.start, truncated at the horizon."""
    signed, absol, final = functional_integrals(drift, [potential], cfg,
                                                indices, workers)
    radii = np.linalg.norm(final, axis=-1)
    tails = ray_tail_bound(potential, final, _drift_dirs(drift, final))
    return FunctionalBatch(
        integral_V=signed[0],
        integral_absV=absol[0],
        t_end=cfg.t_end,
        escaped=radii > cfg.stop_radius,
        tail_bound=tails,
    )


def simulate_functional(drift: DriftField, potential: Potential,
                        cfg: PathConfig, sample_index: int) -> FunctionalSample:
    batch = simulate_functional_batch(drift, potential, cfg, [sample_index])
    return FunctionalSample(
        integral_V=float(batch.integral_V[0]),
        integral_absV=float(batch.integral_absV[0]),
        t_end=batch.t_end,
        escaped=bool(batch.escaped[0]),
        tail_bound=float(batch.tail_bound[0]),
    )


def simulate_path(drift: DriftField, cfg: PathConfig, sample_index: int):
    """Record one path on the step grid: (times (n+1,), positions (n+1, 3)).

    Uses the same draw pattern as the batch kernels, so the recorded path
    is the path the functionals integrate over.
    """
    n_steps = cfg.n_steps
    dt = cfg.dt
    sq = math.sqrt(dt)
    gen = stream_for(cfg.master_seed, int(sample_index))
    times = np.arange(n_steps + 1) * dt
    start = cfg.start_vec()
    if drift.kind == "constant":
        xi = gen.standard_normal((n_steps, 3))
        xi *= sq
        xi += drift.theta * dt
        pos = np.empty((n_steps + 1, 3))
        pos[0] = start
        np.cumsum(xi, axis=0, out=pos[1:])
        pos[1:] += start
        return times, pos
    pos = np.empty((n_steps + 1, 3))
    pos[0] = start
    cur = start.reshape(1, 3).copy()
    done = 0
    while done < n_steps:
        block = min(BESSEL_BLOCK, n_steps - done)
        xi = gen.standard_normal((block, 3))
        for j in range(block):
            cur += bessel_drift(cur) * dt
            cur += sq * xi[j]
            pos[done + j + 1] = cur[0]
        done += block
    return times, pos


# --------------------------------------------------------------------------
# split (two-phase) kernel

def _split_worker(payload):
    theta, pot1, pot2, pot_full, switch_radius, cfg, idx = payload
    n_steps = cfg.n_steps
    dt = cfg.dt
    b = len(idx)
    out_i1 = np.empty(b)
    out_i2 = np.empty(b)
    out_if = np.empty(b)
    out_ts = np.empty(b)
    out_sw = np.empty(b, dtype=bool)
    final = np.empty((b, 3))
    sub_size = max(1, _CHUNK_FLOATS // (3 * (n_steps + 1)))
    start = cfg.start_vec()
    for lo in range(0, b, sub_size):
        sub = idx[lo:lo + sub_size]
        m = len(sub)
        gens = [stream_for(cfg.master_seed, int(i)) for i in sub]
        xi = _draw_normals(gens, n_steps)
        unif = _draw_uniforms(gens, n_steps)
        xi *= math.sqrt(dt)
        xi += theta * dt
        pos = np.empty((m, n_steps + 1, 3))
        pos[:, 0] = start
        np.cumsum(xi, axis=1, out=pos[:, 1:])
        pos[:, 1:] += start
        del xi
        dist = switch_radius - np.linalg.norm(pos, axis=-1)   # (m, n+1)
        d0, d1 = dist[:, :-1], dist[:, 1:]
        grid_cross = d1 <= 0.0
        with np.errstate(over="ignore"):
            p_bridge = np.exp(np.minimum(
                (-2.0 / dt) * np.maximum(d0, 0.0) * np.maximum(d1, 0.0), 0.0))
        bridge = (~grid_cross) & (d0 > 0.0) & (unif < p_bridge)
        events = grid_cross | bridge
        has = events.any(axis=1)
        first = np.argmax(events, axis=1)            # step j of the event
        first = np.where(has, first, n_steps - 1)
        # crossing fraction: interpolated for grid crossings, midpoint for
        # bridge-detected sub-step excursions
        j_rows = np.arange(m)
        dj0 = d0[j_rows, first]
        dj1 = d1[j_rows, first]
        frac = np.where(grid_cross[j_rows, first],
                        dj0 / np.where(dj0 - dj1 != 0.0, dj0 - dj1, 1.0),
                        0.5)
        out_ts[lo:lo + m] = np.where(has, (first + frac) * dt, cfg.t_end)
        out_sw[lo:lo + m] = has
        # integrand switch happens at the first grid node at/after the event
        switch_node = np.where(has, first + 1, n_steps + 1)
        steps = np.arange(n_steps)[None, :]
        w1 = _trapezoid_terms(np.abs(np.asarray(pot1.evaluate(pos))), dt)
        w2 = _trapezoid_terms(np.abs(np.asarray(pot2.evaluate(pos))), dt)
        wf = _trapezoid_terms(np.abs(np.asarray(pot_full.evaluate(pos))), dt)
        before = steps < switch_node[:, None]
        out_i1[lo:lo + m] = np.sum(np.where(before, w1, 0.0), axis=1)
        out_i2[lo:lo + m] = np.sum(np.where(before, 0.0, w2), axis=1)
        out_if[lo:lo + m] = np.sum(wf, axis=1)
        final[lo:lo + m] = pos[:, -1]
        del pos
    return out_i1, out_i2, out_if, out_ts, out_sw, final


def split_functional_batch(theta, phase1: Potential, phase2: Potential,
                           full: Potential, switch_radius: float,
                           cfg: PathConfig, indices,
                           workers: int = 1) -> SplitBatch:
    """Two-phase |V| functionals along shared paths.

    Phase 1 integrates |phase1| until the path first reaches the sphere of
    ``switch_radius`` (grid crossing or bridge detection, mirroring the
    first-exit rule); phase 2 integrates |phase2| from the next grid node to
    the horizon.  ``full`` is integrated undivided over the same path with
    the same per-step terms, so exp(-(I1+I2)/2) >= exp(-I_full/2) holds
    samplewise whenever both phases are pointwise dominated by ``full``.
    """
    th = as_unit_vec3(theta)
    if switch_radius <= np.linalg.norm(cfg.start_vec()):
        raise DomainError("switch_radius must exceed |start|")
    idx = _as_index_array(indices)
    payloads = [(th, phase1, phase2, full, float(switch_radius), cfg, chunk)
                for chunk in _chunk_indices(idx, PAYLOAD_CHUNK)]
    parts = _run_payloads(_split_worker, payloads, workers)
    cat = (lambda k: np.concatenate([p[k] for p in parts]) if parts
           else np.empty(0))
    final = cat(5).reshape(-1, 3)
    tails = ray_tail_bound(full, final, np.broadcast_to(th, final.shape))
    return SplitBatch(
        integral_phase1=cat(0), integral_phase2=cat(1), integral_full=cat(2),
        switch_times=cat(3), switched=cat(4).astype(bool), t_end=cfg.t_end,
        tail_bound=tails,
    )


# --------------------------------------------------------------------------
# first-exit kernel

def _exit_worker(payload):
    potential, source, radius, drift_on, cfg, idx = payload
    dt = cfg.dt
    sq = math.sqrt(dt)
    b = len(idx)
    start = cfg.start_vec()
    cap_steps = int(math.ceil(EXIT_CAP_FACTOR * radius * radius / dt))
    mu_dt = (np.array([dt, 0.0, 0.0]) if drift_on
             else np.zeros(3))
    values = np.zeros(b, dtype=complex)
    times = np.zeros(b)
    capped = np.zeros(b, dtype=bool)

    gens = [stream_for(cfg.master_seed, int(i)) for i in idx]
    orig = np.arange(b)
    pos = np.broadcast_to(start, (b, 3)).copy()
    d0 = np.full(b, radius - float(np.linalg.norm(start)))
    v_prev = np.asarray(potential.evaluate(pos), dtype=float).copy()
    iv = np.zeros(b)
    g_prev = np.asarray(source.evaluate(pos), dtype=complex).copy()
    acc = np.zeros(b, dtype=complex)

    k_base = 0
    while len(orig) and k_base < cap_steps:
        block = min(EXIT_BLOCK, cap_steps - k_base)
        xi = _draw_normals(gens, block)
        unif = _draw_uniforms(gens, block)
        live = np.ones(len(orig), dtype=bool)
        for j in range(block):
            x1 = pos + mu_dt + sq * xi[:, j]
            d1 = radius - np.sqrt(np.sum(x1 * x1, axis=-1))
            v1 = np.asarray(potential.evaluate(x1), dtype=float)
            iv1 = iv + (v_prev + v1) * (0.5 * dt)
            g1 = np.exp(-0.5j * iv1) * source.evaluate(x1)
            crossed = d1 <= 0.0
            with np.errstate(over="ignore"):
                p_b = np.exp(np.minimum(
                    (-2.0 / dt) * np.maximum(d0, 0.0) * np.maximum(d1, 0.0),
                    0.0))
            exiting = live & (crossed | (unif[:, j] < p_b))
            cont = live & ~exiting
            acc += np.where(cont, (g_prev + g1) * (0.5 * dt), 0.0)
            if exiting.any():
                rows = np.nonzero(exiting)[0]
                de0 = d0[rows]
                de1 = d1[rows]
                cr = crossed[rows]
                denom = de0 - de1
                s = np.where(cr, de0 / np.where(denom != 0.0, denom, 1.0), 0.5)
                x_c = pos[rows] + s[:, None] * (x1[rows] - pos[rows])
                v_c = np.asarray(potential.evaluate(x_c), dtype=float)
                iv_c = iv[rows] + (v_prev[rows] + v_c) * (0.5 * dt) * s
                g_c = np.exp(-0.5j * iv_c) * source.evaluate(x_c)
                val = acc[rows] + (g_prev[rows] + g_c) * (0.5 * dt) * s
                dest = orig[rows]
                values[dest] = val
                times[dest] = (k_base + j + s) * dt
                live[rows] = False
            pos = x1
            d0 = d1
            v_prev = v1
            iv = iv1
            g_prev = g1
        k_base += block
        if not live.all():
            keep = np.nonzero(live)[0]
            gens = [gens[i] for i in keep]
            orig = orig[keep]
            pos = pos[keep]
            d0 = d0[keep]
            v_prev = v_prev[keep]
            iv = iv[keep]
            g_prev = g_prev[keep]
            acc = acc[keep]
    if len(orig):
        values[orig] = acc
        times[orig] = cap_steps * dt
        capped[orig] = True
    return values, times, capped


def sample_exit_batch(potential: Potential, source: Potential, radius: float,
                      cfg: PathConfig, indices, drift_on: bool = True,
                      workers: int = 1) -> ExitBatch:
    """Accumulate int_0^T exp(-(i/2) int_0^t V) F(x_t) dt along paths
    stopped at their first exit from the ball of ``radius``.

    With ``drift_on`` the drift is the unit vector along the first axis;
    otherwise the path is plain Brownian motion.  Exits are detected by grid
    crossing (with interpolated crossing fraction) or by the Brownian-bridge
    sub-step test (with midpoint fraction).  Paths still inside after
    50 r^2 / dt steps are cut and counted in ``capped``.
    """
    if radius <= 0.0 or not np.isfinite(radius):
        raise DomainError(f"exit radius must be positive, got {radius!r}")
    if np.linalg.norm(cfg.start_vec()) >= radius:
        raise DomainError(
            f"start {cfg.start} lies outside the ball of radius {radius}")
    idx = _as_index_array(indices)
    payloads = [(potential, source, float(radius), bool(drift_on), cfg, chunk)
                for chunk in _chunk_indices(idx, PAYLOAD_CHUNK)]
    parts = _run_payloads(_exit_worker, payloads, workers)
    cat = (lambda k: np.concatenate([p[k] for p in parts]) if parts
           else np.empty(0))
    return ExitBatch(values=cat(0).astype(complex), exit_times=cat(1),
                     capped=cat(2).astype(bool), radius=float(radius))


def sample_exit(potential: Potential, source: Potential, radius: float,
                cfg: PathConfig, sample_index: int,
                drift_on: bool = True) -> complex:
    batch = sample_exit_batch(potential, source, radius, cfg, [sample_index],
                              drift_on=drift_on)
    return complex(batch.values[0])


def exit_time_laplace_check(radius: float, beta: float, n: int,
                            cfg: PathConfig, workers: int = 1) -> LaplaceCheck:
    """Zero-drift exit-time transform E[exp(-beta T)] for the ball of
    ``radius`` against the closed form (radius c / sinh(radius c) from the
    center, c = sqrt(2 beta))."""
    if beta <= 0.0:
        raise DomainError(f"beta must be positive, got {beta!r}")
    from .potentials import make_standard_potential
    zero = make_standard_potential("constant", [0.0])
    one = make_standard_potential("constant", [1.0])
    batch = sample_exit_batch(zero, one, radius, cfg, np.arange(n),
                              drift_on=False, workers=workers)
    # with V = 0, F = 1 the accumulated value is exactly the exit time
    samples = np.exp(-beta * batch.exit_times)
    mean = float(np.mean(samples))
    stderr = (float(np.std(samples, ddof=1) / math.sqrt(n)) if n > 1 else 0.0)
    c = math.sqrt(2.0 * beta)
    rho = float(np.linalg.norm(cfg.start_vec()))
    if rho == 0.0:
        ref = radius * c / math.sinh(radius * c)
    else:
        ref = (radius / rho) * math.sinh(rho * c) / math.sinh(radius * c)
    return LaplaceCheck(mean=mean, stderr=stderr, reference=ref, beta=beta,
                        radius=radius, n=n, anomalies=batch.anomalies)
