"""Boundary-driven exclusion process on gasket graphs.

Dynamics (level N, accelerated clock): every discordant edge exchanges at
rate 5^N; the corner a_i flips at rate 5^N b_i^(-N) [lambda_- eta(a) +
lambda_+ (1 - eta(a))].  Engine time IS the macroscopic time of the limit
theorems; no rescaling happens afterwards.

Exact Gillespie with a swap-list over discordant edges (all bulk events
share one rate, so selection is a uniform pick; updates touch only the
<= 8 edges incident to the changed sites).  Replica streams are splitmix64
states derived by hashing (master_seed, stream_id), so replicas have no
sequential dependence and a trajectory is a pure function of its stream.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _kernel
from .calculus import check_field, laplacian, normal_derivative
from .errors import CapacityError, DomainError, InsufficientDataError
from .gasket import GasketGraph, cell_vertices, corner_cell
from .spectral import BoundaryCondition

ROBIN_THRESHOLD = Fraction(5, 3)

_M64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z &= _M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return (z ^ (z >> 31)) & _M64


def _sm_next(state: int) -> tuple[int, float]:
    """Python twin of the kernel's splitmix64 draw; returns (state, u01]."""
    state = (state + _GOLDEN) & _M64
    z = _mix64(state)
    u = ((z >> 11) + 1) * (1.0 / 9007199254740992.0)
    return state, u


@dataclass(frozen=True)
class RngStream:
    """Replica stream identity; (master_seed, stream_id) fully determines
    the trajectory."""

    master_seed: int
    stream_id: int = 0

    def initial_state(self) -> int:
        return _mix64(_mix64(self.master_seed & _M64) ^ ((self.stream_id * _GOLDEN) & _M64))


class RngState:
    """Mutable splitmix64 cursor for incremental stepping."""

    __slots__ = ("value",)

    def __init__(self, source):
        if isinstance(source, RngStream):
            self.value = source.initial_state()
        else:
            self.value = int(source) & _M64

    def u01(self) -> float:
        self.value, u = _sm_next(self.value)
        return u


def parse_b(value) -> Fraction:
    """Exact boundary exponent: ints/Fractions as-is, strings like "5/3"
    or "1.2" parsed exactly, floats taken at their exact binary value."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, float):
        return Fraction(value)
    raise DomainError(f"cannot interpret boundary exponent {value!r}")


@dataclass(frozen=True)
class BoundarySpec:
    """Per-corner reservoir rates and inverse-strength exponents.

    regime(a): Dirichlet if b_a < 5/3, Robin if b_a == 5/3 (exact rational
    comparison), Neumann if b_a > 5/3.
    """

    lambda_plus: tuple[float, float, float]
    lambda_minus: tuple[float, float, float]
    b: tuple[Fraction, Fraction, Fraction]

    def __post_init__(self):
        if len(self.lambda_plus) != 3 or len(self.lambda_minus) != 3 or len(self.b) != 3:
            raise DomainError("lambda_plus, lambda_minus, b must be triples")
        if any(not (v > 0) for v in self.lambda_plus + self.lambda_minus):
            raise DomainError("reservoir rates must be positive")
        if any(not (bb > 0) for bb in self.b):
            raise DomainError("boundary exponents must be positive")

    @classmethod
    def uniform(cls, lambda_plus: float, lambda_minus: float, b) -> "BoundarySpec":
        bb = parse_b(b)
        return cls(
            (float(lambda_plus),) * 3, (float(lambda_minus),) * 3, (bb, bb, bb)
        )

    @classmethod
    def per_corner(cls, lambda_plus, lambda_minus, b) -> "BoundarySpec":
        return cls(
            tuple(float(v) for v in lambda_plus),
            tuple(float(v) for v in lambda_minus),
            tuple(parse_b(v) for v in b),
        )

    @property
    def lambda_sigma(self) -> tuple[float, float, float]:
        return tuple(
            p + m for p, m in zip(self.lambda_plus, self.lambda_minus)
        )

    @property
    def rho_bar(self) -> tuple[float, float, float]:
        return tuple(
            p / (p + m) for p, m in zip(self.lambda_plus, self.lambda_minus)
        )

    @property
    def regimes(self) -> tuple[str, str, str]:
        out = []
        for bb in self.b:
            if bb < ROBIN_THRESHOLD:
                out.append("dirichlet")
            elif bb == ROBIN_THRESHOLD:
                out.append("robin")
            else:
                out.append("neumann")
        return tuple(out)

    @property
    def is_equilibrium(self) -> bool:
        return len(set(self.lambda_plus)) == 1 and len(set(self.lambda_minus)) == 1

    def boundary_scale(self, level: int) -> np.ndarray:
        """5^N * b_a^(-N) per corner (the corner-flip rate prefactor)."""
        return np.array([5.0**level / float(bb) ** level for bb in self.b])

    def boundary_condition(self) -> BoundaryCondition:
        """Regime-classified limit boundary condition; Robin coefficient is
        lambda_sigma(a)."""
        kinds = self.regimes
        robin = tuple(
            s if k == "robin" else 0.0 for s, k in zip(self.lambda_sigma, kinds)
        )
        return BoundaryCondition(kinds, robin)

    def to_json_dict(self) -> dict:
        return {
            "lambda_plus": list(self.lambda_plus),
            "lambda_minus": list(self.lambda_minus),
            "b": [str(bb) for bb in self.b],
            "regimes": list(self.regimes),
        }


@dataclass
class Configuration:
    """Occupation state in {0,1}^{V_N} plus the current (accelerated) time."""

    occupation: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        occ = np.asarray(self.occupation, dtype=np.uint8)
        if occ.ndim != 1 or not np.all((occ == 0) | (occ == 1)):
            raise DomainError("occupation must be a flat 0/1 vector")
        self.occupation = occ

    def copy(self) -> "Configuration":
        return Configuration(self.occupation.copy(), self.time)


def initial_configuration(g: GasketGraph, spec, rng: RngState | None = None) -> Configuration:
    """Initial conditions: 'empty', 'full', a 0/1 occupation array, or a
    density profile in [0,1] (iid Bernoulli(profile[x]) draws, consuming
    the replica stream)."""
    n = g.n_vertices
    if isinstance(spec, str):
        if spec == "empty":
            return Configuration(np.zeros(n, dtype=np.uint8))
        if spec == "full":
            return Configuration(np.ones(n, dtype=np.uint8))
        raise DomainError(f"unknown initial condition {spec!r}")
    arr = np.asarray(spec, dtype=np.float64)
    if arr.shape != (n,):
        raise DomainError(f"initial condition length {arr.shape} != |V_N| = {n}")
    if np.all((arr == 0.0) | (arr == 1.0)):
        return Configuration(arr.astype(np.uint8))
    if np.any(arr < 0) or np.any(arr > 1):
        raise DomainError("density profile must lie in [0, 1]")
    if rng is None:
        raise DomainError("a Bernoulli profile initial condition needs an RngState")
    occ = np.empty(n, dtype=np.uint8)
    for x in range(n):
        occ[x] = 1 if rng.u01() <= arr[x] else 0
    return Configuration(occ)


# ---------------------------------------------------------------------------
# rates and transitions


@dataclass(frozen=True)
class RateTable:
    """Positive-rate events of a configuration: discordant edges (each at
    bulk_rate) and the three corner flips."""

    bulk_rate: float
    discordant_edges: np.ndarray  # edge ids
    corner_rates: np.ndarray  # (3,)

    @property
    def total(self) -> float:
        return self.bulk_rate * len(self.discordant_edges) + float(
            self.corner_rates.sum()
        )


def _corner_flip_rates(g: GasketGraph, bs: BoundarySpec):
    scale = bs.boundary_scale(g.level)
    rate_occupied = scale * np.asarray(bs.lambda_minus)
    rate_empty = scale * np.asarray(bs.lambda_plus)
    return rate_occupied, rate_empty


def event_rates(c: Configuration, g: GasketGraph, bs: BoundarySpec) -> RateTable:
    occ = c.occupation
    if occ.size != g.n_vertices:
        raise DomainError("configuration does not match graph level")
    disc = np.nonzero(occ[g.edges[:, 0]] != occ[g.edges[:, 1]])[0]
    rate_occupied, rate_empty = _corner_flip_rates(g, bs)
    corner = np.where(
        occ[list(g.corners)] == 1, rate_occupied, rate_empty
    )
    return RateTable(
        bulk_rate=5.0**g.level, discordant_edges=disc, corner_rates=corner
    )


def transitions(c: Configuration, g: GasketGraph, bs: BoundarySpec):
    """Yield (rate, new_occupation) over every positive-rate event.

    Brute-force enumeration used by the drift/QV oracles and the
    master-equation generator; independent of the closed forms.
    """
    occ = c.occupation
    bulk = 5.0**g.level
    for x, y in g.edges:
        if occ[x] != occ[y]:
            new = occ.copy()
            new[x], new[y] = occ[y], occ[x]
            yield bulk, new
    rate_occupied, rate_empty = _corner_flip_rates(g, bs)
    for i, a in enumerate(g.corners):
        new = occ.copy()
        new[a] = 1 - occ[a]
        yield (rate_occupied[i] if occ[a] else rate_empty[i]), new


# ---------------------------------------------------------------------------
# observables and the engine


@dataclass(frozen=True)
class Observable:
    """Affine observable S(eta) = sum_x eta(x) w(x) + offset, recorded on the
    sample grid together with its exact time integral."""

    name: str
    weights: np.ndarray
    offset: float = 0.0


@dataclass
class MeasurementSeries:
    """Grid samples of the observables along one replica path.

    values[name][k]    = S(eta_t) at grid time t_k (left limit at events);
    integrals[name][k] = exact int_0^{t_k} S(eta_s) ds;
    occupation_time[x] = exact int over the whole run of eta_s(x) ds.
    """

    stream: RngStream
    times: np.ndarray
    values: dict
    integrals: dict
    final_config: Configuration
    occupation_time: np.ndarray
    n_events: int
    snapshots: np.ndarray | None = None


def pi_observable(g: GasketGraph, F: np.ndarray, name: str = "pi") -> Observable:
    """Empirical density pairing pi(F) = (1/|V_N|) sum eta(x) F(x)."""
    F = check_field(g, F)
    return Observable(name, F / g.n_vertices, 0.0)


def fluctuation_observable(
    g: GasketGraph, F: np.ndarray, rho: float, name: str = "Y"
) -> Observable:
    """Density fluctuation field Y(F) = |V_N|^(-1/2) sum (eta(x)-rho) F(x)."""
    F = check_field(g, F)
    root = math.sqrt(g.n_vertices)
    return Observable(name, F / root, -rho * float(F.sum()) / root)


def drift_weights(g: GasketGraph, bs: BoundarySpec, F: np.ndarray):
    """Affine representation of the closed-form drift 5^N L_N pi(F).

    w(x) = (D_N F)(x)/|V_N| at interior x;
    w(a) = -(3^N/|V_N|) [ (d_perp F)(a) + (5^N/(3^N b_a^N)) lam_sig(a) F(a) ];
    offset = (3^N/|V_N|) sum_a (5^N/(3^N b_a^N)) lam_sig(a) rho_bar(a) F(a).
    """
    F = check_field(g, F)
    n = g.n_vertices
    level = g.level
    w = laplacian(g, F) / n
    scale3 = 3.0**level / n
    kappa = bs.boundary_scale(level) / 3.0**level  # 5^N/(3^N b^N)
    offset = 0.0
    for i, a in enumerate(g.corners):
        lam = bs.lambda_sigma[i]
        w[a] = -scale3 * (normal_derivative(g, F, a) + kappa[i] * lam * F[a])
        offset += scale3 * kappa[i] * lam * bs.rho_bar[i] * F[a]
    return w, offset


def drift_observable(
    g: GasketGraph, bs: BoundarySpec, F: np.ndarray, name: str = "drift"
) -> Observable:
    w, offset = drift_weights(g, bs, F)
    return Observable(name, w, offset)


def _kernel_args(g: GasketGraph, bs: BoundarySpec, observables):
    K = len(observables)
    n = g.n_vertices
    W = np.zeros((K, n), dtype=np.float64)
    Woff = np.zeros(K, dtype=np.float64)
    for k, ob in enumerate(observables):
        w = check_field(g, ob.weights)
        W[k, :] = w
        Woff[k] = ob.offset
    rate_occupied, rate_empty = _corner_flip_rates(g, bs)
    return (
        W,
        Woff,
        g.edges,
        g.incident_ptr,
        g.incident_idx,
        np.asarray(g.corners, dtype=np.int64),
        rate_occupied,
        rate_empty,
        5.0**g.level,
    )


def sample_path(
    c0: Configuration,
    g: GasketGraph,
    bs: BoundarySpec,
    rng: RngStream | RngState,
    t_end: float,
    observables: list[Observable] | None = None,
    grid: np.ndarray | None = None,
    snapshots: bool = False,
) -> MeasurementSeries:
    """Exact Gillespie path on [c0.time, t_end] with observables sampled on
    the grid.  Identical (master_seed, stream_id) give identical output."""
    if t_end < c0.time:
        raise DomainError("t_end must be >= the configuration's current time")
    stream = rng if isinstance(rng, RngStream) else RngStream(-1, -1)
    state = rng.initial_state() if isinstance(rng, RngStream) else rng.value
    observables = list(observables or [])
    if grid is None:
        grid = np.array([t_end], dtype=np.float64)
    grid = np.asarray(grid, dtype=np.float64)
    if grid.size and (grid[0] < c0.time - 1e-12 or grid[-1] > t_end + 1e-12):
        raise DomainError("sample grid must lie within [t0, t_end]")
    if np.any(np.diff(grid) < 0):
        raise DomainError("sample grid must be nondecreasing")

    occ = c0.occupation.copy()
    args = _kernel_args(g, bs, observables)
    out_vals, out_ints, snaps, occ_time, n_events, new_state = _kernel.run_path(
        occ,
        float(c0.time),
        float(t_end),
        grid,
        *args,
        np.uint64(state),
        1 if snapshots else 0,
    )
    if isinstance(rng, RngState):
        rng.value = int(new_state)
    names = [ob.name for ob in observables]
    return MeasurementSeries(
        stream=stream,
        times=grid,
        values={name: out_vals[:, k].copy() for k, name in enumerate(names)},
        integrals={name: out_ints[:, k].copy() for k, name in enumerate(names)},
        final_config=Configuration(occ, float(t_end)),
        occupation_time=occ_time,
        n_events=int(n_events),
        snapshots=snaps if snapshots else None,
    )


def step(
    c: Configuration, g: GasketGraph, bs: BoundarySpec, rng: RngState
) -> Configuration:
    """Advance by exactly one Gillespie event (pure-Python reference path;
    consumes the stream in the same order as the compiled kernel)."""
    occ = c.occupation.copy()
    rates = event_rates(Configuration(occ, c.time), g, bs)
    total = rates.total
    u = rng.u01()
    t_next = c.time - math.log(u) / total
    v = rng.u01() * total
    bulk_total = rates.bulk_rate * len(rates.discordant_edges)
    if v <= bulk_total and len(rates.discordant_edges) > 0:
        j = min(int(v / rates.bulk_rate), len(rates.discordant_edges) - 1)
        e = rates.discordant_edges[j]
        x, y = g.edges[e]
        occ[x], occ[y] = occ[y], occ[x]
    else:
        w = v - bulk_total
        i = 0
        acc = rates.corner_rates[0]
        while w > acc and i < 2:
            i += 1
            acc += rates.corner_rates[i]
        a = g.corners[i]
        occ[a] = 1 - occ[a]
    return Configuration(occ, t_next)


def _py_run_path(c0, g, bs, state, t_end):
    """Line-for-line Python port of the kernel's event loop (occupations
    only), used to cross-validate the compiled engine bit for bit."""
    occ = c0.occupation.copy()
    E = g.n_edges
    disc_pos = np.full(E, -1, np.int64)
    disc_list = np.empty(E, np.int64)
    n_disc = 0
    for e in range(E):
        if occ[g.edges[e, 0]] != occ[g.edges[e, 1]]:
            disc_pos[e] = n_disc
            disc_list[n_disc] = e
            n_disc += 1
    rate_occupied, rate_empty = _corner_flip_rates(g, bs)
    bulk_rate = 5.0**g.level
    t = c0.time
    n_events = 0

    def upd(e2):
        nonlocal n_disc
        d = occ[g.edges[e2, 0]] != occ[g.edges[e2, 1]]
        if d and disc_pos[e2] < 0:
            disc_pos[e2] = n_disc
            disc_list[n_disc] = e2
            n_disc += 1
        elif (not d) and disc_pos[e2] >= 0:
            q = disc_pos[e2]
            last = disc_list[n_disc - 1]
            disc_list[q] = last
            disc_pos[last] = q
            disc_pos[e2] = -1
            n_disc -= 1

    while True:
        total = bulk_rate * n_disc
        for i in range(3):
            a = g.corners[i]
            total += rate_occupied[i] if occ[a] else rate_empty[i]
        state, u = _sm_next(state)
        t_next = t - math.log(u) / total
        if t_next >= t_end:
            break
        t = t_next
        state, u = _sm_next(state)
        v = u * total
        bulk_total = bulk_rate * n_disc
        if v <= bulk_total and n_disc > 0:
            j = min(int(v / bulk_rate), n_disc - 1)
            e = disc_list[j]
            x, y = g.edges[e]
            occ[x], occ[y] = occ[y], occ[x]
            for p in range(g.incident_ptr[x], g.incident_ptr[x + 1]):
                upd(g.incident_idx[p])
            for p in range(g.incident_ptr[y], g.incident_ptr[y + 1]):
                upd(g.incident_idx[p])
        else:
            w = v - bulk_total
            i = 0
            acc = rate_occupied[0] if occ[g.corners[0]] else rate_empty[0]
            while w > acc and i < 2:
                i += 1
                acc += rate_occupied[i] if occ[g.corners[i]] else rate_empty[i]
            a = g.corners[i]
            occ[a] = 1 - occ[a]
            for p in range(g.incident_ptr[a], g.incident_ptr[a + 1]):
                upd(g.incident_idx[p])
        n_events += 1
    return Configuration(occ, t_end), n_events


def _replica_job(args):
    (g, bs, initial, stream, t_end, observables, grid, snapshots) = args
    rng = RngState(stream)
    c0 = initial_configuration(g, initial, rng)
    return sample_path(c0, g, bs, rng, t_end, observables, grid, snapshots)


def run_replicas(
    g: GasketGraph,
    bs: BoundarySpec,
    initial,
    master_seed: int,
    n_replicas: int,
    t_end: float,
    observables: list[Observable] | None = None,
    grid: np.ndarray | None = None,
    jobs: int = 1,
    snapshots: bool = False,
    stream_offset: int = 0,
) -> list[MeasurementSeries]:
    """Independent replicas on streams (master_seed, offset..offset+M-1).

    Results are returned ordered by stream id regardless of completion
    order.  Each replica's initial Bernoulli draw (when `initial` is a
    density profile) consumes the head of its own stream.
    """
    streams = [RngStream(master_seed, stream_offset + i) for i in range(n_replicas)]
    arglist = [
        (g, bs, initial, st, t_end, observables, grid, snapshots) for st in streams
    ]
    if jobs <= 1 or n_replicas <= 1:
        return [_replica_job(a) for a in arglist]
    _warmup_kernel()
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        out = list(pool.map(_replica_job, arglist, chunksize=max(1, n_replicas // (4 * jobs))))
    return out


_warmed = False


def _warmup_kernel():
    """Compile the engine once before forking worker processes."""
    global _warmed
    if _warmed:
        return
    from .gasket import build_cached

    g = build_cached(0)
    bs = BoundarySpec.uniform(1.0, 1.0, 1)
    c0 = Configuration(np.zeros(3, dtype=np.uint8))
    sample_path(c0, g, bs, RngStream(0, 0), 0.01)
    _warmed = True


# ---------------------------------------------------------------------------
# generator algebra


def measure_density(c: Configuration, F: np.ndarray) -> float:
    """pi(F) = (1/|V_N|) sum eta(x) F(x)."""
    F = np.asarray(F, dtype=np.float64)
    if F.shape != c.occupation.shape:
        raise DomainError("field length does not match configuration")
    return float(c.occupation @ F) / F.size


def local_average(c: Configuration, g: GasketGraph, corner: int, depth: int) -> float:
    """Mean occupation over the depth-j corner cell K_j(a) intersect V_N."""
    ids = sorted(cell_vertices(g, corner_cell(g, corner, depth)))
    return float(c.occupation[ids].mean())


def generator_apply(
    F: np.ndarray, c: Configuration, g: GasketGraph, bs: BoundarySpec
) -> float:
    """Closed-form drift 5^N L_N pi(F): interior Laplacian pairing plus the
    corner normal-derivative / reservoir term.  Equals the transition
    enumeration exactly (to rounding)."""
    w, offset = drift_weights(g, bs, F)
    return float(c.occupation @ w) + offset


def generator_apply_bruteforce(
    F: np.ndarray, c: Configuration, g: GasketGraph, bs: BoundarySpec
) -> float:
    """Oracle: sum over events of rate * (pi(F)(eta') - pi(F)(eta))."""
    F = check_field(g, F)
    base = measure_density(c, F)
    acc = 0.0
    for rate, new in transitions(c, g, bs):
        acc += rate * (float(new @ F) / F.size - base)
    return acc


def qv_rate(F: np.ndarray, c: Configuration, g: GasketGraph, bs: BoundarySpec) -> float:
    """Closed-form quadratic-variation rate of the Dynkin martingale of
    pi(F):

        (5^N/|V_N|^2) sum_{edges} (eta(x)-eta(y))^2 (F(x)-F(y))^2
      + sum_a (5^N/(b_a^N |V_N|^2)) [lam_- eta(a) + lam_+ (1-eta(a))] F(a)^2.

    The edge sum runs over unordered edges, which is what the transition
    enumeration gives.
    """
    F = check_field(g, F)
    occ = c.occupation
    n = g.n_vertices
    i, j = g.edges[:, 0], g.edges[:, 1]
    disc = (occ[i] != occ[j]).astype(np.float64)
    bulk = 5.0**g.level / n**2 * float(disc @ (F[i] - F[j]) ** 2)
    rate_occupied, rate_empty = _corner_flip_rates(g, bs)
    boundary = 0.0
    for k, a in enumerate(g.corners):
        r = rate_occupied[k] if occ[a] else rate_empty[k]
        boundary += r * F[a] ** 2 / n**2
    return bulk + boundary


def qv_rate_bruteforce(
    F: np.ndarray, c: Configuration, g: GasketGraph, bs: BoundarySpec
) -> float:
    """Oracle: sum over events of rate * (pi(F)(eta') - pi(F)(eta))^2."""
    F = check_field(g, F)
    base = measure_density(c, F)
    acc = 0.0
    for rate, new in transitions(c, g, bs):
        acc += rate * (float(new @ F) / F.size - base) ** 2
    return acc


# ---------------------------------------------------------------------------
# replacement diagnostics


@dataclass(frozen=True)
class ReplacementResult:
    corner: int
    depth: int | None
    t_end: float
    estimate: float
    stderr: float
    n_replicas: int


def replacement_diagnostic(
    g: GasketGraph,
    bs: BoundarySpec,
    corner: int,
    depth: int | None,
    t_end: float,
    master_seed: int,
    n_replicas: int,
    initial="stationary-density",
    jobs: int = 1,
) -> ReplacementResult:
    """Monte Carlo E | int_0^t (eta_s(a) - X_s) ds | with X the depth-j cell
    average (depth given) or the stationary corner density rho_bar(a)
    (depth None).  Returns the replica mean with its standard error."""
    if n_replicas < 10:
        raise InsufficientDataError("need at least 10 replicas")
    if isinstance(initial, str) and initial == "stationary-density":
        initial = np.full(g.n_vertices, float(np.mean(bs.rho_bar)))
    n = g.n_vertices
    w = np.zeros(n)
    w[corner] = 1.0
    offset = 0.0
    if depth is None:
        offset = -bs.rho_bar[list(g.corners).index(corner)]
    else:
        ids = sorted(cell_vertices(g, corner_cell(g, corner, depth)))
        w[ids] -= 1.0 / len(ids)
    ob = Observable("gap", w, offset)
    series = run_replicas(
        g, bs, initial, master_seed, n_replicas, t_end, [ob], jobs=jobs
    )
    vals = np.array([abs(s.integrals["gap"][-1]) for s in series])
    return ReplacementResult(
        corner=corner,
        depth=depth,
        t_end=t_end,
        estimate=float(vals.mean()),
        stderr=float(vals.std(ddof=1) / math.sqrt(n_replicas)),
        n_replicas=n_replicas,
    )


# ---------------------------------------------------------------------------
# exact small-system oracles


MASTER_EQUATION_CAP = 12
#: cap for full configuration-space enumeration (detailed balance, MPL); N <= 2
ENUMERATION_CAP = 15


def _require_small(g: GasketGraph, cap: int = MASTER_EQUATION_CAP):
    if g.n_vertices > cap:
        raise CapacityError(f"|V_N| = {g.n_vertices} exceeds enumeration cap {cap}")


def generator_matrix(g: GasketGraph, bs: BoundarySpec) -> np.ndarray:
    """Dense CTMC generator Q over {0,1}^{V_N}; Q[s, s'] is the s -> s' rate
    and rows sum to zero."""
    _require_small(g)
    n = g.n_vertices
    S = 1 << n
    states = np.arange(S, dtype=np.int64)
    bits = (states[:, None] >> np.arange(n)) & 1
    Q = np.zeros((S, S), dtype=np.float64)
    bulk = 5.0**g.level
    for x, y in g.edges:
        disc = bits[:, x] != bits[:, y]
        targets = states[disc] ^ ((1 << int(x)) | (1 << int(y)))
        Q[states[disc], targets] += bulk
    rate_occupied, rate_empty = _corner_flip_rates(g, bs)
    for i, a in enumerate(g.corners):
        occ = bits[:, a] == 1
        targets = states ^ (1 << int(a))
        Q[states[occ], targets[occ]] += rate_occupied[i]
        Q[states[~occ], targets[~occ]] += rate_empty[i]
    Q[states, states] -= Q.sum(axis=1)
    return Q


def master_equation_oracle(
    g: GasketGraph, bs: BoundarySpec, p0: np.ndarray, t: float
) -> np.ndarray:
    """p0 exp(tQ) by uniformization with truncation error < 1e-12."""
    _require_small(g)
    if t < 0:
        raise DomainError("time must be >= 0")
    p = np.asarray(p0, dtype=np.float64)
    S = 1 << g.n_vertices
    if p.shape != (S,):
        raise DomainError(f"distribution must have length {S}")
    if abs(p.sum() - 1.0) > 1e-9 or np.any(p < -1e-15):
        raise DomainError("p0 must be a probability distribution")
    if t == 0:
        return p.copy()
    Q = generator_matrix(g, bs)
    lam = float(np.max(-np.diag(Q)))
    if lam == 0.0:
        return p.copy()
    # keep each uniformization segment's Poisson mean moderate
    n_seg = max(1, int(math.ceil(lam * t / 64.0)))
    dt = t / n_seg
    P = np.eye(S) + Q / lam
    mu = lam * dt
    for _ in range(n_seg):
        out = np.zeros(S)
        v = p.copy()
        weight = math.exp(-mu)
        out += weight * v
        covered = weight
        k = 0
        while covered < 1.0 - 1e-13:
            k += 1
            v = v @ P
            weight *= mu / k
            out += weight * v
            covered += weight
            if k > 50 * (mu + 10):
                break
        p = out / out.sum()
    return p


def product_bernoulli(g: GasketGraph, rho) -> np.ndarray:
    """Product measure over {0,1}^{V_N} with per-site density rho."""
    _require_small(g, ENUMERATION_CAP)
    n = g.n_vertices
    rho = np.broadcast_to(np.asarray(rho, dtype=np.float64), (n,))
    S = 1 << n
    bits = (np.arange(S)[:, None] >> np.arange(n)) & 1
    logp = bits * np.log(rho) + (1 - bits) * np.log1p(-rho)
    return np.exp(logp.sum(axis=1))


def stationary_distribution(g: GasketGraph, bs: BoundarySpec) -> np.ndarray:
    """Unique stationary law of the finite CTMC (dense nullspace solve)."""
    Q = generator_matrix(g, bs)
    S = Q.shape[0]
    A = Q.T.copy()
    A[0, :] = 1.0
    b = np.zeros(S)
    b[0] = 1.0
    pi = np.linalg.solve(A, b)
    pi[pi < 0] = 0.0
    return pi / pi.sum()


def detailed_balance_check(
    g: GasketGraph, bs: BoundarySpec, rho: float | None = None
) -> tuple[bool, float]:
    """Check nu_rho(eta) r(eta->eta') = nu_rho(eta') r(eta'->eta) over all
    transitions; exact (up to 1e-12 relative) for uniform equal rates with
    rho = lambda_+/lambda_sigma.  Returns (ok, max relative violation)."""
    _require_small(g, ENUMERATION_CAP)
    if rho is None:
        rho = bs.rho_bar[0]
    n = g.n_vertices
    S = 1 << n
    states = np.arange(S, dtype=np.int64)
    bits = (states[:, None] >> np.arange(n)) & 1
    nu = product_bernoulli(g, rho)
    worst = 0.0
    bulk = 5.0**g.level
    for x, y in g.edges:
        disc = bits[:, x] != bits[:, y]
        src = states[disc]
        tgt = src ^ ((1 << int(x)) | (1 << int(y)))
        lhs = nu[src] * bulk
        rhs = nu[tgt] * bulk
        rel = np.abs(lhs - rhs) / np.maximum(np.maximum(lhs, rhs), 1e-300)
        if rel.size:
            worst = max(worst, float(rel.max()))
    rate_occupied, rate_empty = _corner_flip_rates(g, bs)
    for i, a in enumerate(g.corners):
        occ = bits[:, a] == 1
        src = states[occ]
        tgt = src ^ (1 << int(a))
        lhs = nu[src] * rate_occupied[i]
        rhs = nu[tgt] * rate_empty[i]
        rel = np.abs(lhs - rhs) / np.maximum(np.maximum(lhs, rhs), 1e-300)
        if rel.size:
            worst = max(worst, float(rel.max()))
    return worst <= 1e-12, worst


def mpl_check(
    g: GasketGraph, f: np.ndarray, x: int, y: int, rho: float
) -> float:
    """Moving-particle-lemma slack for one configuration functional f:

        R_eff(x,y) * (1/2) int sum_edges (f(eta^e) - f(eta))^2 dnu_rho
        - (1/2) int (f(eta^{xy}) - f(eta))^2 dnu_rho  >=  0.

    f is indexed by configuration bitmask (bit x = eta(x)).  Exact sums
    over all 2^|V_N| configurations; requires the small-system cap.
    """
    from .calculus import effective_resistance

    n = g.n_vertices
    if n > 15:
        raise CapacityError("mpl_check is limited to |V_N| <= 15 (N <= 2)")
    S = 1 << n
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (S,):
        raise DomainError(f"f must have one value per configuration ({S})")
    states = np.arange(S, dtype=np.int64)
    bits = (states[:, None] >> np.arange(n)) & 1
    nu = product_bernoulli(g, rho)

    def swap_diff_sq(a, b):
        disc = bits[:, a] != bits[:, b]
        tgt = np.where(disc, states ^ ((1 << int(a)) | (1 << int(b))), states)
        return (f[tgt] - f) ** 2

    lhs = 0.5 * float(nu @ swap_diff_sq(x, y))
    total = np.zeros(S)
    for ex, ey in g.edges:
        total += swap_diff_sq(int(ex), int(ey))
    rhs = effective_resistance(g, x, y) * 0.5 * float(nu @ total)
    return rhs - lhs
