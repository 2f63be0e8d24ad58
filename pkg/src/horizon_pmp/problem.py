"""Problem and process data model on the extended half-line [0, inf].

A :class:`ControlProblem` bundles the callables of an infinite-horizon
problem in minimisation form

    J = int_0^inf omega(t) f(t, x, u) dt -> inf,   x' = phi(t, x, u),
    h0(x(0)) = 0,  lim h1(t, x(t)) = 0,  u in U,  g_j(t, x) <= 0.

Maximisation problems are stated by negating ``f``.  A :class:`Process`
pairs a convergent state with a control path sampled on a
:class:`SemiInfiniteGrid`; when closed forms are available they are kept
alongside the samples and used for every off-grid evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidInputError

ENDPOINT_KINDS = ("free", "fixed", "mixed")


# ---------------------------------------------------------------------------
# compactifying time maps and grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimeMap:
    """Monotone bijection s in [0, 1) -> t in [0, inf) with its speed dt/ds."""

    name: str
    forward: Callable[[float], float]
    speed: Callable[[float], float]
    inverse: Callable[[float], float]

    def __call__(self, s):
        return self.forward(s)


LOG_MAP = TimeMap(
    "log",
    forward=lambda s: -np.log1p(-np.asarray(s, dtype=float)),
    speed=lambda s: 1.0 / (1.0 - np.asarray(s, dtype=float)),
    inverse=lambda t: -np.expm1(-np.asarray(t, dtype=float)),
)

RATIONAL_MAP = TimeMap(
    "rational",
    forward=lambda s: np.asarray(s, dtype=float) / (1.0 - np.asarray(s, dtype=float)),
    speed=lambda s: 1.0 / (1.0 - np.asarray(s, dtype=float)) ** 2,
    inverse=lambda t: np.asarray(t, dtype=float) / (1.0 + np.asarray(t, dtype=float)),
)

TIME_MAPS = {"log": LOG_MAP, "rational": RATIONAL_MAP}


def get_time_map(horizon_map) -> TimeMap:
    if isinstance(horizon_map, TimeMap):
        return horizon_map
    try:
        return TIME_MAPS[horizon_map]
    except KeyError:
        raise InvalidInputError(
            f"unknown horizon map {horizon_map!r}; known: {sorted(TIME_MAPS)}"
        ) from None


@dataclass(frozen=True)
class SemiInfiniteGrid:
    """Finite nodes 0 = t_0 < ... < t_{N-1} plus the point at infinity."""

    nodes: np.ndarray
    time_map: Optional[TimeMap] = LOG_MAP
    includes_infinity: bool = True

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size == 0:
            raise InvalidInputError("grid needs at least one finite node")
        if nodes[0] != 0.0:
            raise InvalidInputError(f"grid must start at t=0, got {nodes[0]}")
        if not np.all(np.isfinite(nodes)):
            raise InvalidInputError("finite grid nodes must be finite")
        if np.any(np.diff(nodes) <= 0):
            raise InvalidInputError("grid nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def size(self) -> int:
        return int(self.nodes.size)

    @property
    def t_last(self) -> float:
        return float(self.nodes[-1])

    def times(self) -> np.ndarray:
        """Finite nodes followed by ``inf`` when the grid carries infinity."""
        if self.includes_infinity:
            return np.append(self.nodes, np.inf)
        return self.nodes.copy()

    def with_nodes(self, extra: Sequence[float]) -> "SemiInfiniteGrid":
        """Grid with exact breakpoints inserted (duplicates are dropped)."""
        extra = [float(t) for t in extra if np.isfinite(t) and t >= 0]
        merged = np.union1d(self.nodes, np.asarray(extra, dtype=float))
        return SemiInfiniteGrid(merged, self.time_map, self.includes_infinity)

    def index_of(self, t: float, atol: float = 1e-12) -> Optional[int]:
        k = int(np.searchsorted(self.nodes, t))
        for j in (k - 1, k):
            if 0 <= j < self.size and abs(self.nodes[j] - t) <= atol * max(1.0, abs(t)):
                return j
        return None


def make_grid(horizon_map="log", N: int = 256) -> SemiInfiniteGrid:
    """Nodes ``generator(k/N)``, k = 0..N-1, plus the marker for t = inf."""
    if int(N) != N or N < 8:
        raise InvalidInputError(f"grid needs N >= 8 nodes, got {N}")
    tmap = get_time_map(horizon_map)
    s = np.arange(int(N)) / float(N)
    return SemiInfiniteGrid(np.asarray(tmap.forward(s), dtype=float), tmap)


# ---------------------------------------------------------------------------
# functions on the grid
# ---------------------------------------------------------------------------


def _as_rows(values, width=None) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr[:, None] if width in (None, 1) else arr.reshape(-1, width)
    return arr


@dataclass(frozen=True)
class ConvergentFunction:
    """Vector function on [0, inf] with a limit at infinity.

    Off-grid values come from ``fn`` when it is given.  Otherwise the
    samples are interpolated linearly between nodes, and beyond the last
    node the function relaxes to ``limit`` linearly in the compactified
    variable s = 1 - exp(-t).

    With ``interpolation="exponential"`` the deviation from the limit is
    interpolated log-linearly wherever consecutive samples share a sign,
    and the tail continues with the decay rate of the last two samples.
    Exponentially converging states are then reproduced exactly.
    """

    grid: SemiInfiniteGrid
    values: np.ndarray
    limit: np.ndarray
    fn: Optional[Callable[[float], np.ndarray]] = None
    tail_tol: Optional[float] = None
    interpolation: str = "linear"

    def __post_init__(self):
        if self.interpolation not in ("linear", "exponential"):
            raise InvalidInputError(f"unknown interpolation {self.interpolation!r}")
        values = _as_rows(self.values)
        limit = np.atleast_1d(np.asarray(self.limit, dtype=float))
        if values.shape[0] != self.grid.size:
            raise InvalidInputError(
                f"{values.shape[0]} samples for a grid of {self.grid.size} nodes"
            )
        if values.shape[1] != limit.size:
            raise InvalidInputError("limit dimension does not match the samples")
        if self.tail_tol is not None and self.tail_gap > self.tail_tol:
            raise InvalidInputError(
                f"last sample is {self.tail_gap:.3g} away from the limit "
                f"(tail tolerance {self.tail_tol:.3g})"
            )
        values.setflags(write=False)
        limit.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "limit", limit)
        if self.interpolation == "exponential":
            dev = values - limit
            rate = np.ones(limit.size)
            if values.shape[0] >= 2:
                a, b = dev[-2], dev[-1]
                with np.errstate(divide="ignore", invalid="ignore"):
                    r = np.log(a / b) / (self.grid.nodes[-1] - self.grid.nodes[-2])
                # no usable decay estimate: fall back to unit rate
                rate = np.where(np.isfinite(r) & (r > 0) & (a * b > 0), r, 1.0)
            object.__setattr__(self, "_dev", dev)
            object.__setattr__(self, "_tail_rate", rate)

    @property
    def dim(self) -> int:
        return int(self.limit.size)

    @property
    def tail_gap(self) -> float:
        return float(np.linalg.norm(self.values[-1] - self.limit))

    def __call__(self, t: float) -> np.ndarray:
        if np.isinf(t):
            return self.limit.copy()
        if self.fn is not None:
            return np.atleast_1d(np.asarray(self.fn(t), dtype=float))
        nodes = self.grid.nodes
        if self.interpolation == "exponential":
            return self._exponential(t)
        if t >= nodes[-1]:
            w = np.exp(-(t - nodes[-1]))
            return self.limit + (self.values[-1] - self.limit) * w
        return np.array([np.interp(t, nodes, self.values[:, i]) for i in range(self.dim)])

    def _exponential(self, t):
        nodes, dev = self.grid.nodes, self._dev
        if t >= nodes[-1]:
            return self.limit + dev[-1] * np.exp(-self._tail_rate * (t - nodes[-1]))
        k = min(max(int(np.searchsorted(nodes, t, side="right")) - 1, 0), nodes.size - 2)
        th = (t - nodes[k]) / (nodes[k + 1] - nodes[k])
        a, b = dev[k], dev[k + 1]
        if np.all(a * b > 0):
            return self.limit + a * (b / a) ** th
        with np.errstate(divide="ignore", invalid="ignore"):
            geo = a * np.abs(b / a) ** th
        return self.limit + np.where(a * b > 0, geo, a + th * (b - a))

    @classmethod
    def from_callable(cls, grid, fn, limit, tail_tol=None) -> "ConvergentFunction":
        values = np.array([np.atleast_1d(fn(t)) for t in grid.nodes], dtype=float)
        return cls(grid, values, limit, fn=fn, tail_tol=tail_tol)


@dataclass(frozen=True)
class ControlPath:
    """Piecewise-constant control on the grid, or a closed form with switches.

    Without ``fn`` the control is right-continuous and constant on each
    [t_k, t_{k+1}); every node is then a potential switch.
    """

    grid: SemiInfiniteGrid
    values: np.ndarray
    limit: np.ndarray
    fn: Optional[Callable[[float], np.ndarray]] = None
    switch_times: tuple = ()

    def __post_init__(self):
        values = _as_rows(self.values)
        limit = np.atleast_1d(np.asarray(self.limit, dtype=float))
        if values.shape[0] != self.grid.size:
            raise InvalidInputError("control samples do not match the grid")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "limit", limit)
        object.__setattr__(self, "switch_times", tuple(sorted(float(s) for s in self.switch_times)))

    @property
    def dim(self) -> int:
        return int(self.limit.size)

    @property
    def breakpoints(self) -> tuple:
        if self.fn is None:
            return tuple(float(t) for t in self.grid.nodes[1:])
        return self.switch_times

    def __call__(self, t: float) -> np.ndarray:
        if np.isinf(t):
            return self.limit.copy()
        if self.fn is not None:
            return np.atleast_1d(np.asarray(self.fn(t), dtype=float))
        k = int(np.searchsorted(self.grid.nodes, t, side="right")) - 1
        return self.values[max(k, 0)].copy()

    @classmethod
    def from_callable(cls, grid, fn, limit, switch_times=()) -> "ControlPath":
        values = np.array([np.atleast_1d(fn(t)) for t in grid.nodes], dtype=float)
        return cls(grid, values, limit, fn=fn, switch_times=tuple(switch_times))


@dataclass(frozen=True)
class Process:
    """A state/control pair on a common grid."""

    x: ConvergentFunction
    u: ControlPath
    label: str = ""
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.x.grid is not self.u.grid and not np.array_equal(
            self.x.grid.nodes, self.u.grid.nodes
        ):
            raise InvalidInputError("state and control live on different grids")

    @property
    def grid(self) -> SemiInfiniteGrid:
        return self.x.grid

    @property
    def breakpoints(self) -> tuple:
        return self.u.breakpoints

    def state(self, t):
        return self.x(t)

    def control(self, t):
        return self.u(t)

    def with_grid(self, grid: SemiInfiniteGrid) -> "Process":
        """Resample closed-form components onto another grid."""
        if self.x.fn is None or self.u.fn is None:
            raise InvalidInputError("only closed-form processes can be resampled")
        x = ConvergentFunction.from_callable(grid, self.x.fn, self.x.limit)
        u = ControlPath.from_callable(grid, self.u.fn, self.u.limit, self.u.switch_times)
        return Process(x, u, self.label, dict(self.metadata))


def clim_norms(x: ConvergentFunction) -> tuple[float, float]:
    """Sup norm and the split norm ||x - a||_inf + ||a|| of a convergent function."""
    values = np.asarray(x.values, dtype=float)
    if values.size == 0:
        raise InvalidInputError("empty grid")
    a = np.asarray(x.limit, dtype=float)
    sup_norm = max(float(np.max(np.linalg.norm(values, axis=1))), float(np.linalg.norm(a)))
    split_norm = float(np.max(np.linalg.norm(values - a, axis=1))) + float(np.linalg.norm(a))
    return sup_norm, split_norm


# ---------------------------------------------------------------------------
# control sets
# ---------------------------------------------------------------------------


def _golden_max(fun, lo, hi, tol=1e-11, max_iter=200):
    """Golden-section search for the maximum of a unimodal ``fun`` on [lo, hi]."""
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fun(c), fun(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fun(d)
    return (c, fc) if fc >= fd else (d, fd)


@dataclass(frozen=True)
class BoxControlSet:
    """Axis-aligned box sampled on a tensor grid of ``resolution`` points per axis.

    ``truncated`` marks a box that stands in for an unbounded U; only then
    is the sup of H probed on enlarged boxes.
    """

    lower: np.ndarray
    upper: np.ndarray
    resolution: int = 201
    truncated: bool = False

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or np.any(hi < lo):
            raise InvalidInputError("box bounds must satisfy lower <= upper")
        if self.resolution < 2:
            raise InvalidInputError("box resolution must be at least 2")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return int(self.lower.size)

    def samples(self) -> np.ndarray:
        axes = [np.linspace(l, h, self.resolution) for l, h in zip(self.lower, self.upper)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def contains(self, u, tol: float = 1e-9) -> bool:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return bool(np.all(u >= self.lower - tol) and np.all(u <= self.upper + tol))

    def random(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper)

    def enlarged(self, factor: float) -> "BoxControlSet":
        centre = 0.5 * (self.lower + self.upper)
        half = 0.5 * (self.upper - self.lower) * factor
        return BoxControlSet(centre - half, centre + half, self.resolution, self.truncated)

    def refine(self, objective, u_best, sweeps: int = 2):
        """Coordinate-wise golden-section polish around a grid sample."""
        u = np.array(u_best, dtype=float)
        step = (self.upper - self.lower) / (self.resolution - 1)
        value = objective(u)
        for _ in range(sweeps if self.dim > 1 else 1):
            for i in range(self.dim):
                lo = max(self.lower[i], u[i] - step[i])
                hi = min(self.upper[i], u[i] + step[i])
                if hi <= lo:
                    continue

                def along(v, i=i):
                    w = u.copy()
                    w[i] = v
                    return objective(w)

                v, fv = _golden_max(along, lo, hi)
                if fv > value:
                    u[i], value = v, fv
        return u, value


@dataclass(frozen=True)
class FiniteControlSet:
    points: np.ndarray

    def __post_init__(self):
        pts = _as_rows(self.points)
        if pts.shape[0] == 0:
            raise InvalidInputError("control set must be non-empty")
        object.__setattr__(self, "points", pts)

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])

    def samples(self) -> np.ndarray:
        return self.points.copy()

    def contains(self, u, tol: float = 1e-9) -> bool:
        u = np.atleast_1d(np.asarray(u, dtype=float))
        return bool(np.min(np.linalg.norm(self.points - u, axis=1)) <= tol)

    def random(self, rng: np.random.Generator) -> np.ndarray:
        return self.points[rng.integers(len(self.points))].copy()

    def refine(self, objective, u_best, sweeps: int = 2):
        return np.array(u_best, dtype=float), objective(u_best)


# ---------------------------------------------------------------------------
# the problem datum
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StateConstraint:
    """g(t, x) <= 0 with gradient g_x(t, x)."""

    g: Callable
    g_x: Callable
    name: str = ""


@dataclass(frozen=True)
class ControlProblem:
    """Callables of an infinite-horizon problem in minimisation form.

    With ``vectorized=True`` the callables ``f`` and ``phi`` accept a batch
    of controls of shape (k, m) and return shapes (k,) and (k, n).
    """

    state_dim: int
    control_dim: int
    f: Callable
    f_x: Callable
    phi: Callable
    phi_x: Callable
    omega: Callable
    omega_l1: float
    control_set: object
    h0: Optional[Callable] = None
    h0_x: Optional[Callable] = None
    h1: Optional[Callable] = None
    h1_x: Optional[Callable] = None
    constraints: tuple = ()
    endpoint_kind: str = "free"
    free_components: Optional[int] = None
    breakpoints: tuple = ()
    gamma: float = 0.5
    vectorized: bool = False
    name: str = ""

    def __post_init__(self):
        if self.state_dim < 1 or self.control_dim < 1:
            raise InvalidInputError("state and control dimensions must be positive")
        if self.endpoint_kind not in ENDPOINT_KINDS:
            raise InvalidInputError(f"endpoint kind must be one of {ENDPOINT_KINDS}")
        if self.endpoint_kind == "mixed" and self.free_components is None:
            raise InvalidInputError("mixed endpoint needs the number of free components")
        if not self.omega_l1 > 0:
            raise InvalidInputError("density must have positive L1 norm")
        if (self.h0 is None) != (self.h0_x is None) or (self.h1 is None) != (self.h1_x is None):
            raise InvalidInputError("boundary maps and their Jacobians come in pairs")
        if self.control_set.dim != self.control_dim:
            raise InvalidInputError("control set dimension does not match control_dim")
        object.__setattr__(self, "constraints", tuple(self.constraints))
        object.__setattr__(self, "breakpoints", tuple(float(b) for b in self.breakpoints))

    @property
    def n(self) -> int:
        return self.state_dim

    @property
    def m(self) -> int:
        return self.control_dim

    @property
    def l(self) -> int:
        return len(self.constraints)

    @property
    def s0(self) -> int:
        return 0 if self.h0 is None else int(np.atleast_1d(self.h0(np.zeros(self.n))).size)

    @property
    def s1(self) -> int:
        return 0 if self.h1 is None else int(np.atleast_1d(self.h1(0.0, np.zeros(self.n))).size)

    # small helpers returning arrays of fixed shape
    def f_val(self, t, x, u) -> float:
        return float(self.f(t, x, u))

    def fx_val(self, t, x, u) -> np.ndarray:
        return np.asarray(self.f_x(t, x, u), dtype=float).reshape(self.n)

    def phi_val(self, t, x, u) -> np.ndarray:
        return np.asarray(self.phi(t, x, u), dtype=float).reshape(self.n)

    def phix_val(self, t, x, u) -> np.ndarray:
        return np.asarray(self.phi_x(t, x, u), dtype=float).reshape(self.n, self.n)

    def h0x_val(self, x) -> np.ndarray:
        return np.asarray(self.h0_x(x), dtype=float).reshape(-1, self.n)

    def h1x_val(self, t, x) -> np.ndarray:
        return np.asarray(self.h1_x(t, x), dtype=float).reshape(-1, self.n)

    def gx_val(self, j, t, x) -> np.ndarray:
        return np.asarray(self.constraints[j].g_x(t, x), dtype=float).reshape(self.n)

    def g_val(self, j, t, x) -> float:
        return float(self.constraints[j].g(t, x))


def check_density(problem: ControlProblem, grid: SemiInfiniteGrid) -> bool:
    return all(problem.omega(t) >= 0 for t in grid.nodes)


# ---------------------------------------------------------------------------
# Jacobian consistency
# ---------------------------------------------------------------------------


@dataclass
class JacobianReport:
    points: int
    max_error: float
    worst: Optional[str]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance


def _central_jacobian(fun, x, step):
    x = np.asarray(x, dtype=float)
    base = np.atleast_1d(fun(x))
    jac = np.empty((base.size, x.size))
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = step * max(1.0, abs(x[i]))
        jac[:, i] = (np.atleast_1d(fun(x + e)) - np.atleast_1d(fun(x - e))) / (2 * e[i])
    return jac


def jacobian_check(
    problem: ControlProblem,
    n_points: int = 100,
    step: float = 1e-6,
    rtol: float = 1e-5,
    seed: int = 0,
    t_range: tuple = (0.0, 5.0),
    centre=None,
) -> JacobianReport:
    """Compare every analytic Jacobian with central differences at random points.

    The error measure is ||fd - analytic|| / max(1, ||analytic||), after
    discounting the cancellation floor eps |fun(x)| / step of the
    difference quotient (large offsets in g would otherwise swamp it).
    """
    rng = np.random.default_rng(seed)
    n = problem.n
    worst, max_err = None, 0.0
    for _ in range(n_points):
        t = float(rng.uniform(*t_range))
        x = rng.normal(size=n) if centre is None else np.asarray(centre(t)) + rng.normal(scale=0.1, size=n)
        u = problem.control_set.random(rng)
        pairs = [
            ("f_x", lambda z: problem.f_val(t, z, u), problem.fx_val(t, x, u).reshape(1, n)),
            ("phi_x", lambda z: problem.phi_val(t, z, u), problem.phix_val(t, x, u)),
        ]
        for j, c in enumerate(problem.constraints):
            pairs.append((f"g{j + 1}_x", lambda z, j=j: problem.g_val(j, t, z), problem.gx_val(j, t, x).reshape(1, n)))
        if problem.h0 is not None:
            pairs.append(("h0_x", lambda z: problem.h0(z), problem.h0x_val(x)))
        if problem.h1 is not None:
            pairs.append(("h1_x", lambda z: problem.h1(t, z), problem.h1x_val(t, x)))
        for name, fun, analytic in pairs:
            fd = _central_jacobian(fun, x, step)
            floor = 1e3 * np.finfo(float).eps * float(np.max(np.abs(np.atleast_1d(fun(x))))) / step
            err = max(float(np.linalg.norm(fd - analytic)) - floor, 0.0) / max(1.0, float(np.linalg.norm(analytic)))
            if err > max_err:
                max_err, worst = err, f"{name} at t={t:.4g}"
    return JacobianReport(n_points, max_err, worst, rtol)
