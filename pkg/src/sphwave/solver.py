"""End-to-end exterior solver: boundary data, transforms, per-mode marching.

Pipeline for a :class:`ScatteringProblem`:

1. sample the boundary data on the unit-sphere grid at every collocation time
   (and at the step ends) of ``[0, T - r + 1]``;
2. analyse each time slice into packed ``m >= 0`` harmonic coefficients;
3. march every mode (n, m) with the plan for n (shared by all m);
4. synthesise the mode values at radius r, time T, and compare with the
   closed-form field when the data come from point sources.
"""
from __future__ import annotations

import configparser
import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .harmonic_transform import (
    SphericalGrid,
    analyze_real,
    l2_norm,
    packed_index,
    synthesize_real,
)
from .time_marcher import ModeSignal, build_plan, collocation_times, extract_mode, march
from .zero_finder import ZeroKind, dirichlet_zeros, robin_zeros

__all__ = [
    "SolveError",
    "PointSource",
    "ScatteringProblem",
    "SolveResult",
    "TabulatedData",
    "REFERENCE_SOURCES",
    "desk_sources",
    "exact_solution",
    "exact_radial_derivative",
    "boundary_data",
    "solve",
    "convergence_sweep",
    "scattering_demo",
    "load_config",
    "load_tabulated",
    "write_tabulated",
    "write_table",
]


class SolveError(RuntimeError):
    """A mode march failed; the message names the mode order."""


@dataclass(frozen=True)
class PointSource:
    """``c exp(-(t - t0 - d)**2 / a) cos(k (t - d)) / d`` with ``d = |x - y|``."""

    c: float
    y: tuple
    t0: float
    a: float
    k: float

    def __post_init__(self):
        if self.a <= 0:
            raise ValueError("Gaussian width a must be positive")
        object.__setattr__(self, "y", tuple(float(v) for v in self.y))
        if len(self.y) != 3:
            raise ValueError("source location must have three components")

    @property
    def interior(self):
        return float(np.linalg.norm(self.y)) < 1.0


REFERENCE_SOURCES = (
    PointSource(1.0, (0.3, -0.5, 0.6), 1.2, 0.05, 100.0),
    PointSource(1.0, (-0.4, -0.5, 0.7), 3.2, 0.28, 80.0),
)


def desk_sources(k1=20.0, k2=16.0):
    """The two interior sources above with reduced carrier frequencies."""
    a, b = REFERENCE_SOURCES
    return (replace(a, k=k1), replace(b, k=k2))


def _geometry(src, x):
    diff = np.asarray(x, float) - np.asarray(src.y)
    d = np.sqrt(np.sum(diff * diff, axis=-1))
    if np.any(d == 0):
        raise ValueError("field evaluated at a source location")
    return diff, d


def _field(sources, x, t, value=True, radial=False):
    # value and/or d/dr of the point-source field, skipping underflowed times
    t = np.asarray(t, float)
    x = np.asarray(x, float)
    shape = t.shape + x.shape[:-1]
    u = np.zeros(shape) if value else None
    du = np.zeros(shape) if radial else None
    tf = t.reshape(-1)
    xf = x.reshape(-1, 3)
    if radial:
        xhat = xf / np.linalg.norm(xf, axis=-1, keepdims=True)
    for s in sources:
        diff, d = _geometry(s, xf)
        # exp(-tau^2/a) < 1e-300 once |tau| > sqrt(691 a)
        reach = math.sqrt(691.0 * s.a)
        live = (tf - s.t0 > d.min() - reach) & (tf - s.t0 < d.max() + reach)
        if not live.any():
            continue
        tt = tf[live][:, None]
        tau = tt - s.t0 - d
        with np.errstate(under="ignore"):
            G = s.c * np.exp(-tau * tau / s.a)
        # cos(k (t - d)) by angle addition: trig per time and per point only
        ckt, skt = np.cos(s.k * tt), np.sin(s.k * tt)
        ckd, skd = np.cos(s.k * d), np.sin(s.k * d)
        C = ckt * ckd + skt * skd
        if value:
            u.reshape(len(tf), -1)[live] += G * C / d
        if radial:
            dd_dr = np.sum(xhat * diff, axis=-1) / d
            S = skt * ckd - ckt * skd
            dU = G * ((2.0 * tau / s.a) * C + s.k * S - C / d) / d
            du.reshape(len(tf), -1)[live] += dU * dd_dr
    return u, du


def exact_solution(sources, x, t):
    """Closed-form field at points x (..., 3) and times t.

    The result has shape ``np.shape(t) + x.shape[:-1]``.
    """
    return _field(sources, x, t)[0]


def exact_radial_derivative(sources, x, t):
    """d/dr of the closed-form field at points x (..., 3), analytically."""
    return _field(sources, x, t, value=False, radial=True)[1]


def boundary_data(sources, bc, x, t, negate=False):
    """Dirichlet trace ``u`` or Robin trace ``(d/dr + 1) u`` on the unit sphere."""
    kind = ZeroKind.parse(bc)
    u, du = _field(sources, x, t, radial=kind is ZeroKind.ROBIN)
    val = u if du is None else u + du
    return -val if negate else val


@dataclass
class TabulatedData:
    """Boundary samples at collocation times on a grid, from a CSV file."""

    grid: SphericalGrid
    samples: np.ndarray  # (N_T * p, N_theta, N_phi)
    times: np.ndarray


@dataclass
class ScatteringProblem:
    """Configuration of one exterior solve.

    ``N_T`` counts time steps; each step holds ``p`` collocation times, so the
    boundary data are sampled ``N_T * p`` times on ``[0, T - r + 1]``.
    """

    bc: str = "dirichlet"
    sources: tuple = field(default_factory=desk_sources)
    data_file: str = None
    N: int = 16
    p: int = 10
    N_T: int = 50
    r: float = 10.0
    T: float = 12.0
    grid: tuple = None
    grid_factor: int = 4
    negate: bool = False

    def __post_init__(self):
        self.bc = ZeroKind.parse(self.bc).name.lower()
        if self.r <= 1:
            raise ValueError("target radius must exceed 1")
        if self.T <= self.r - 1:
            raise ValueError("T must exceed r - 1 (the field is zero before then)")
        if self.N < 0 or self.N_T < 1 or not 1 <= self.p <= 32:
            raise ValueError("need N >= 0, N_T >= 1 and 1 <= p <= 32")
        self.sources = tuple(self.sources or ())

    @property
    def dt(self):
        return (self.T - self.r + 1.0) / self.N_T

    def make_grid(self):
        if self.grid:
            return SphericalGrid.create(*self.grid)
        return SphericalGrid.for_order(max(self.N, 1), factor=self.grid_factor)

    def summary(self):
        d = asdict(self)
        d["sources"] = [asdict(s) for s in self.sources]
        d["version"] = __version__
        return d


@dataclass
class SolveResult:
    problem: ScatteringProblem
    grid: SphericalGrid
    times: np.ndarray  # target times r - 1 + k dt
    modes: np.ndarray  # packed mode values at radius r, shape (K, N_T + 1)
    field: np.ndarray  # field on the target sphere at time T
    exact: np.ndarray = None
    rel_l2_error: float = None
    timings: dict = field(default_factory=dict)

    def trace(self, theta, phi):
        """Time trace of the field at radius r in direction (theta, phi)."""
        th = np.atleast_1d(theta)
        ph = np.atleast_1d(phi)
        return synthesize_real(self.problem.N, self.modes.T, (th, ph))


def _sample_coefficients(problem, grid, times, chunk_points=3_000_000, data=None,
                         workers=1):
    """Packed coefficients of the boundary data at each time, shape (K, len(times))."""
    N = problem.N
    K = (N + 1) * (N + 2) // 2
    out = np.empty((K, len(times)), complex)
    if data is not None:
        step = 64
        def job(s):
            out[:, s:s + step] = analyze_real(grid, data[s:s + step], N).T
    else:
        xs = grid.unit_vectors()
        step = max(1, chunk_points // (grid.N_theta * grid.N_phi))
        def job(s):
            vals = boundary_data(problem.sources, problem.bc, xs, times[s:s + step],
                                 negate=problem.negate)
            out[:, s:s + step] = analyze_real(grid, vals, N).T
    starts = range(0, len(times), step)
    if workers > 1:
        # each chunk writes its own columns, so the result is order independent
        with ThreadPoolExecutor(workers) as ex:
            list(ex.map(job, starts))
    else:
        for s in starts:
            job(s)
    return out


def _mode_rows(N):
    # packed row of (n, m) for m = 0..n
    n_idx, m_idx = packed_index(N)
    offset = np.concatenate([[0], np.cumsum([N + 1 - m for m in range(N + 1)])])
    return lambda n: offset[: n + 1] + (n - np.arange(n + 1))


def solve(problem, *, workers=1, probes=None, tabulated=None, keep_samples=False):
    """Solve one exterior problem and measure the error when sources are known.

    Parameters
    ----------
    problem : ScatteringProblem
    workers : int
        Threads used for the per-n marches (results are assembled in a fixed
        order, so the output does not depend on scheduling).
    probes : sequence of (theta, phi), optional
        Directions at which time traces are returned in ``timings['probes']``.
    tabulated : TabulatedData, optional
        Boundary samples instead of point sources.
    """
    t_start = time.perf_counter()
    N, p, N_T = problem.N, problem.p, problem.N_T
    dt = problem.dt
    if tabulated is None and problem.data_file:
        tabulated = load_tabulated(problem.data_file, problem)
    grid = tabulated.grid if tabulated is not None else problem.make_grid()
    grid.check(N)
    node_t = collocation_times(dt, p, N_T).ravel()
    end_t = np.arange(N_T + 1) * dt

    t0 = time.perf_counter()
    if tabulated is not None:
        nodes = _sample_coefficients(problem, grid, node_t, data=tabulated.samples,
                                     workers=workers)
        ends = None
    else:
        nodes = _sample_coefficients(problem, grid, node_t, workers=workers)
        ends = _sample_coefficients(problem, grid, end_t, workers=workers)
    t_sample = time.perf_counter() - t0

    rows_of = _mode_rows(N)
    K = nodes.shape[0]
    modes = np.zeros((K, N_T + 1), complex)
    alpha_tabs = {}

    def run(n):
        try:
            plan = build_plan(n, problem.bc, problem.r, dt, p)
            rows = rows_of(n)
            sig = ModeSignal(nodes[rows].reshape(len(rows), N_T, p),
                             None if ends is None else ends[rows], n=n)
            vals = extract_mode(plan, march(plan, sig))
        except Exception as exc:
            raise SolveError(f"mode order n={n} ({problem.bc}, dt={dt:g}): {exc}") from exc
        if not np.all(np.isfinite(vals)):
            raise SolveError(f"mode order n={n}: non-finite values in the march")
        return n, rows, vals

    # zero tables first so threads share cached tables
    for n in range(N + 1):
        alpha_tabs[n] = dirichlet_zeros(n)
        if problem.bc == "robin":
            robin_zeros(n)
    t0 = time.perf_counter()
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(run, range(N + 1)))
    else:
        results = [run(n) for n in range(N + 1)]
    for n, rows, vals in results:
        modes[rows] = vals
    t_march = time.perf_counter() - t0

    t0 = time.perf_counter()
    field_T = synthesize_real(N, modes[:, -1], grid)
    t_synth = time.perf_counter() - t0
    times = problem.r - 1.0 + end_t
    res = SolveResult(problem, grid, times, modes, field_T)
    if problem.sources and tabulated is None:
        x = problem.r * grid.unit_vectors()
        exact = exact_solution(problem.sources, x, problem.T)
        if problem.negate:
            exact = -exact
        res.exact = exact
        norm = l2_norm(grid, exact)
        res.rel_l2_error = l2_norm(grid, field_T - exact) / norm if norm else l2_norm(grid, field_T)
    res.timings = {"sample": t_sample, "march": t_march, "synthesize": t_synth,
                   "total": time.perf_counter() - t_start}
    if probes is not None:
        th = np.array([q[0] for q in probes], float)
        ph = np.array([q[1] for q in probes], float)
        res.timings["probes"] = synthesize_real(N, modes.T, (th, ph))
    if keep_samples:
        res.timings["node_coefficients"] = nodes
    return res


def convergence_sweep(base, axis, values, *, workers=1):
    """Rows ``(axis, value, rel_l2_error, wall_seconds)`` for ascending values."""
    if axis not in ("N", "N_T"):
        raise ValueError("axis must be 'N' or 'N_T'")
    values = list(values)
    if any(b <= a for a, b in zip(values, values[1:])):
        raise ValueError("sweep values must be ascending")
    rows = []
    for v in values:
        prob = replace(base, **{axis: int(v)})
        t0 = time.perf_counter()
        res = solve(prob, workers=workers)
        rows.append((axis, int(v), res.rel_l2_error, time.perf_counter() - t0))
    return rows


def scattering_demo(problem=None, *, radii_stride=4, r_max=3.0, snapshot_time=4.0,
                    angles=181):
    """Exterior-source scattering with sound-soft (Dirichlet) or impedance data.

    Boundary data are the negated incident trace (``-u_inc`` or
    ``-(d/dr + 1) u_inc``) so the computed field is the scattered wave.

    Returns a dict of plot-ready arrays: ``boundary_trace`` (t, value at the
    north pole of the unit sphere), ``target_trace`` (t, value at the north
    pole of the target sphere) and ``annulus`` (x, z, value) in the xz-plane at
    ``snapshot_time`` for ``1 < r <= r_max``.
    """
    if problem is None:
        problem = ScatteringProblem(
            bc="dirichlet",
            sources=(PointSource(1.0, (0, 0, 1.3), 0.6, 0.02, 20.0),
                     PointSource(1.0, (0, 0, 1.7), 1.2, 0.02, 20.0)),
            N=32, p=8, N_T=60, r=10.0, T=13.0, negate=True)
    if any(s.interior for s in problem.sources):
        raise ValueError("scattering demo needs exterior sources")
    problem = replace(problem, negate=True)
    res = solve(problem, probes=[(0.0, 0.0)])
    north = np.array([[0.0, 0.0, 1.0]])
    tb = np.linspace(0.0, problem.T - problem.r + 1.0, 400)
    bvals = boundary_data(problem.sources, problem.bc, north, tb, negate=True)[:, 0]
    out = {"boundary_trace": np.column_stack([tb, bvals]),
           "target_trace": np.column_stack([res.times, res.timings["probes"][:, 0]])}

    # annulus: radii on the step grid so every radius shares one data sampling
    snap = replace(problem, r=1.0 + 1e-9, T=snapshot_time)
    dt = snapshot_time / problem.N_T
    steps = np.arange(radii_stride, problem.N_T, radii_stride)
    radii = 1.0 + steps * dt
    radii = radii[radii <= r_max]
    N, p = problem.N, problem.p
    grid = problem.make_grid()
    node_t = collocation_times(dt, p, problem.N_T).ravel()
    end_t = np.arange(problem.N_T + 1) * dt
    nodes = _sample_coefficients(snap, grid, node_t)
    ends = _sample_coefficients(snap, grid, end_t)
    rows_of = _mode_rows(N)
    ang = np.linspace(0.0, 2.0 * np.pi, angles)
    theta = np.where(ang <= np.pi, ang, 2.0 * np.pi - ang)
    phi = np.where(ang <= np.pi, 0.0, np.pi)
    pts = []
    for r, k_end in zip(radii, problem.N_T - steps[: len(radii)]):
        modes = np.zeros(nodes.shape[0], complex)
        for n in range(N + 1):
            plan = build_plan(n, problem.bc, r, dt, p)
            rows = rows_of(n)
            sig = ModeSignal(nodes[rows].reshape(len(rows), -1, p)[:, :k_end],
                             ends[rows][:, : k_end + 1])
            modes[rows] = extract_mode(plan, march(plan, sig))[:, -1]
        vals = synthesize_real(N, modes, (theta, phi))
        pts.append(np.column_stack([r * np.sin(ang), r * np.cos(ang), vals]))
    out["annulus"] = np.concatenate(pts) if pts else np.zeros((0, 3))
    out["result"] = res
    return out


# -- configuration and file formats ------------------------------------------

_INT_KEYS = {"N", "p", "N_T"}
_FLOAT_KEYS = {"r", "T"}


def load_config(path):
    """Read a flat ``key = value`` file into ScatteringProblem keyword arguments.

    Keys: bc, N, p, N_T, r, T, grid (``N_theta, N_phi``), grid_factor,
    data_file, negate,
    and any number of ``source<i> = c, y1, y2, y3, t0, a, k`` lines.
    ``#`` starts a comment.
    """
    parser = configparser.ConfigParser(comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",))
    parser.optionxform = str
    parser.read_string("[problem]\n" + Path(path).read_text())
    kw, sources = {}, []
    for key, val in parser["problem"].items():
        if key in _INT_KEYS:
            kw[key] = int(val)
        elif key in _FLOAT_KEYS:
            kw[key] = float(val)
        elif key == "grid_factor":
            kw[key] = int(val)
        elif key == "grid":
            kw["grid"] = tuple(int(v) for v in val.split(","))
        elif key == "bc":
            kw["bc"] = val.strip()
        elif key == "data_file":
            kw["data_file"] = val.strip()
        elif key == "negate":
            kw["negate"] = parser["problem"].getboolean(key)
        elif key.startswith("source"):
            c, y1, y2, y3, t0, a, k = (float(v) for v in val.split(","))
            sources.append(PointSource(c, (y1, y2, y3), t0, a, k))
        else:
            raise ValueError(f"unknown config key {key!r}")
    if sources:
        kw["sources"] = tuple(sources)
    return kw


def write_tabulated(path, problem, values_fn=None):
    """Write boundary data on the collocation grid as ``t,theta,phi,value`` CSV."""
    grid = problem.make_grid()
    times = collocation_times(problem.dt, problem.p, problem.N_T).ravel()
    xs = grid.unit_vectors()
    th, ph = np.meshgrid(grid.theta, grid.phi, indexing="ij")
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "theta", "phi", "value"])
        for t in times:
            vals = (values_fn(xs, t) if values_fn is not None else
                    boundary_data(problem.sources, problem.bc, xs, t, problem.negate))
            for a, b, v in zip(th.ravel(), ph.ravel(), np.ravel(vals)):
                w.writerow([repr(float(t)), repr(float(a)), repr(float(b)), repr(float(v))])


def load_tabulated(path, problem, tol=1e-9):
    """Load ``t,theta,phi,value`` CSV and check it matches the problem's grids."""
    arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if arr.shape[1] != 4:
        raise ValueError("tabulated data needs columns t,theta,phi,value")
    times = np.unique(arr[:, 0])
    expect_t = collocation_times(problem.dt, problem.p, problem.N_T).ravel()
    if len(times) != len(expect_t) or np.max(np.abs(np.sort(expect_t) - times)) > tol:
        raise ValueError("tabulated times are not the problem's collocation times")
    grid = problem.make_grid()
    thetas, phis = np.unique(arr[:, 1]), np.unique(arr[:, 2])
    if (len(thetas) != grid.N_theta or len(phis) != grid.N_phi
            or np.max(np.abs(thetas - grid.theta)) > tol
            or np.max(np.abs(phis - grid.phi)) > tol):
        raise ValueError("tabulated (theta, phi) points do not form the problem grid")
    if len(arr) != len(times) * grid.N_theta * grid.N_phi:
        raise ValueError("tabulated data has missing or repeated points")
    ti = np.searchsorted(times, arr[:, 0])
    ii = np.searchsorted(thetas, arr[:, 1])
    kk = np.searchsorted(phis, arr[:, 2])
    samples = np.full((len(times), grid.N_theta, grid.N_phi), np.nan)
    samples[ti, ii, kk] = arr[:, 3]
    order = np.argsort(np.argsort(expect_t))
    return TabulatedData(grid, samples[order], expect_t)


def write_table(path, rows, header, config=None, fmt="csv"):
    """Write rows with a configuration header (CSV comments or JSON object)."""
    import json
    import sys

    config = dict(config or {})
    config.setdefault("version", __version__)
    fh = sys.stdout if str(path) == "-" else Path(path).open("w", newline="")
    try:
        if fmt == "json":
            recs = [dict(zip(header, (_plain(v) for v in row))) for row in rows]
            json.dump({"config": _plain(config), "rows": recs}, fh, indent=2)
            fh.write("\n")
        else:
            for k, v in config.items():
                v = _plain(v)
                text = json.dumps(v) if isinstance(v, (dict, list)) or v is None else v
                fh.write(f"# {k}={text}\n")
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows([[_plain(v) for v in row] for row in rows])
    finally:
        if fh is not sys.stdout:
            fh.close()


def _plain(v):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v
