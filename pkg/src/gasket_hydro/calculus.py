"""Discrete analysis on gasket graphs.

Conventions (level N):

* Laplacian        (Dف f)(x) = 5^N * sum_{y~x} (f(y) - f(x)), interior x only.
* Normal deriv.    (d_perp f)(a) = (5/3)^N * sum_{y~a} (f(a) - f(y)), corner a.
  The sum runs over all neighbors of a; for N >= 1 these are interior anyway.
* Energy           E_N(f, h) = (5/3)^N * sum_{edges} (f(x)-f(y))(h(x)-h(y)).
* Exact summation by parts:
      E_N(f, h) = 3^(-N) * sum_{interior} (-D f)(x) h(x)
                  + sum_{corners} (d_perp f)(a) h(a).
  Note the interior weight 3^(-N) = (1/|V_N|) * (3/2)(1 + 3^(-N)); using the
  asymptotic weight (3/2)/|V_N| leaves an O(3^(-N)) defect.

Fields are plain float arrays of length |V_N| in canonical vertex order.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DomainError, SingularityError
from .gasket import GasketGraph, build_cached


def check_field(g: GasketGraph, f: np.ndarray) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (g.n_vertices,):
        raise DomainError(
            f"field has shape {f.shape}, expected ({g.n_vertices},) for level {g.level}"
        )
    return f


def _neighbor_sums(g: GasketGraph, f: np.ndarray) -> np.ndarray:
    return np.add.reduceat(f[g.neighbor_idx], g.neighbor_ptr[:-1])


def laplacian(g: GasketGraph, f: np.ndarray) -> np.ndarray:
    """5^N-scaled graph Laplacian; corner entries are undefined and set to 0.

    Use ``g.interior_mask`` to select the meaningful entries.
    """
    f = check_field(g, f)
    lap = 5.0**g.level * (_neighbor_sums(g, f) - g.degrees * f)
    lap[list(g.corners)] = 0.0
    return lap


def normal_derivative(g: GasketGraph, f: np.ndarray, corner: int) -> float:
    """(5/3)^N-scaled outward normal derivative at a corner vertex."""
    f = check_field(g, f)
    if corner not in g.corners:
        raise DomainError(f"vertex {corner} is not a boundary corner")
    nbrs = g.neighbors(corner)
    return float((5.0 / 3.0) ** g.level * np.sum(f[corner] - f[nbrs]))


def normal_derivatives(g: GasketGraph, f: np.ndarray) -> np.ndarray:
    """All three corner normal derivatives as an array."""
    return np.array([normal_derivative(g, f, a) for a in g.corners])


def energy(g: GasketGraph, f: np.ndarray, h: np.ndarray | None = None) -> float:
    """(5/3)^N-scaled Dirichlet energy form; energy(g, f) = E_N(f, f) >= 0."""
    f = check_field(g, f)
    h = f if h is None else check_field(g, h)
    i, j = g.edges[:, 0], g.edges[:, 1]
    return float((5.0 / 3.0) ** g.level * np.dot(f[i] - f[j], h[i] - h[j]))


def summation_by_parts_residual(g: GasketGraph, f: np.ndarray, h: np.ndarray) -> float:
    """E_N(f,h) minus the exact interior+boundary decomposition; 0 to rounding."""
    f = check_field(g, f)
    h = check_field(g, h)
    lap = laplacian(g, f)
    mask = g.interior_mask
    interior = 3.0 ** (-g.level) * np.dot(-lap[mask], h[mask])
    boundary = sum(normal_derivative(g, f, a) * h[a] for a in g.corners)
    return energy(g, f, h) - (interior + boundary)


def harmonic_extension(
    boundary_values, level: int | None = None, *, graph: GasketGraph | None = None
) -> np.ndarray:
    """Energy-minimizing extension of corner values via the 1/5-2/5 rule.

    The midpoint opposite corner C of a cell with corner values (A, B, C)
    receives (2A + 2B + C) / 5.  The result is discrete-harmonic at every
    interior vertex of every level <= N.
    """
    if graph is None:
        if level is None:
            raise DomainError("pass either level= or graph=")
        graph = build_cached(level)
    vals = np.asarray(boundary_values, dtype=np.float64)
    if vals.shape != (3,):
        raise DomainError("boundary_values must be a triple")

    out = np.empty(graph.n_vertices, dtype=np.float64)
    scale = 2**graph.level
    # stack entries: (corner lattice points of the cell, their values, size)
    a0, a1, a2 = (0, 0), (scale, 0), (0, scale)
    stack = [((a0, a1, a2), (vals[0], vals[1], vals[2]), scale)]
    while stack:
        (p0, p1, p2), (v0, v1, v2), size = stack.pop()
        if size == 1:
            out[graph.vertex_id(*p0)] = v0
            out[graph.vertex_id(*p1)] = v1
            out[graph.vertex_id(*p2)] = v2
            continue
        m01 = ((p0[0] + p1[0]) // 2, (p0[1] + p1[1]) // 2)
        m02 = ((p0[0] + p2[0]) // 2, (p0[1] + p2[1]) // 2)
        m12 = ((p1[0] + p2[0]) // 2, (p1[1] + p2[1]) // 2)
        w01 = (2.0 * v0 + 2.0 * v1 + v2) / 5.0
        w02 = (2.0 * v0 + 2.0 * v2 + v1) / 5.0
        w12 = (2.0 * v1 + 2.0 * v2 + v0) / 5.0
        half = size // 2
        stack.append(((p0, m01, m02), (v0, w01, w02), half))
        stack.append(((m01, p1, m12), (w01, v1, w12), half))
        stack.append(((m02, m12, p2), (w02, w12, v2), half))
    return out


def _unit_laplacian(g: GasketGraph) -> np.ndarray:
    """Dense unit-conductance graph Laplacian (no 5^N scale)."""
    n = g.n_vertices
    L = np.zeros((n, n), dtype=np.float64)
    for i, j in g.edges:
        L[i, i] += 1.0
        L[j, j] += 1.0
        L[i, j] -= 1.0
        L[j, i] -= 1.0
    return L


class ResistanceSolver:
    """Effective resistances of the unit-conductance network.

    Grounds one vertex and inverts the reduced Laplacian once; pairwise
    resistances are then O(1) lookups.  The reduced matrix is SPD so a
    Cholesky-backed dense solve is used (no pivoting; entries are O(1)).
    """

    def __init__(self, g: GasketGraph, ground: int = 0):
        self.graph = g
        self.ground = ground
        L = _unit_laplacian(g)
        keep = [i for i in range(g.n_vertices) if i != ground]
        self._keep = np.array(keep, dtype=np.int64)
        self._pos = np.full(g.n_vertices, -1, dtype=np.int64)
        self._pos[self._keep] = np.arange(len(keep))
        self._green = np.linalg.inv(L[np.ix_(keep, keep)])

    def resistance(self, x: int, y: int) -> float:
        if x == y:
            raise DomainError("effective resistance requires x != y")
        if x == self.ground:
            x, y = y, x
        px = self._pos[x]
        if y == self.ground:
            return float(self._green[px, px])
        py = self._pos[y]
        return float(self._green[px, px] + self._green[py, py] - 2.0 * self._green[px, py])


@lru_cache(maxsize=8)
def _resistance_solver(level: int, ground: int) -> ResistanceSolver:
    return ResistanceSolver(build_cached(level), ground)


def effective_resistance(g: GasketGraph, x: int, y: int) -> float:
    """Kirchhoff effective resistance between x and y, unit conductances."""
    if x == y:
        raise DomainError("effective resistance requires x != y")
    n = g.n_vertices
    if not (0 <= x < n and 0 <= y < n):
        raise DomainError(f"vertex ids {x}, {y} out of range for level {g.level}")
    return _resistance_solver(g.level, 0).resistance(x, y)


@dataclass(frozen=True)
class RobinCoefficients:
    """Per-corner Robin data kappa(a) >= 0 and right-hand side gamma(a)."""

    kappa: tuple[float, float, float]
    gamma: tuple[float, float, float]

    def __post_init__(self):
        if len(self.kappa) != 3 or len(self.gamma) != 3:
            raise DomainError("kappa and gamma must be triples")
        if any(k < 0 for k in self.kappa):
            raise DomainError("kappa entries must be nonnegative")

    @property
    def determinant(self) -> float:
        k0, k1, k2 = self.kappa
        return 3.0 * (k0 + k1 + k2) + 2.0 * (k0 * k1 + k1 * k2 + k2 * k0) + k0 * k1 * k2


def dtn_robin_solve(rc: RobinCoefficients) -> np.ndarray:
    """Corner values c solving (2 + kappa_j) c_j - sum_{i != j} c_i = gamma_j.

    The harmonic extension of c then satisfies
    d_perp h(a) + kappa(a) h(a) = gamma(a) exactly at every corner (the
    normal derivative of a harmonic extension is level-independent and
    equals 2*c_i - c_j - c_k at corner i).
    """
    k = np.asarray(rc.kappa, dtype=np.float64)
    det = rc.determinant
    if abs(det) <= 1e-12 * (1.0 + np.abs(k).sum()) ** 3:
        raise SingularityError(
            "corner system is singular (pure-Neumann case: all kappa = 0?)"
        )
    A = np.full((3, 3), -1.0)
    np.fill_diagonal(A, 2.0 + k)
    return np.linalg.solve(A, np.asarray(rc.gamma, dtype=np.float64))


# ---------------------------------------------------------------------------
# field import/export


def field_to_csv(path, f: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["vertex_id", "value"])
        for i, v in enumerate(np.asarray(f, dtype=np.float64)):
            writer.writerow([i, repr(float(v))])


def field_from_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["vertex_id", "value"]:
            raise DomainError(f"unexpected field CSV header {header!r}")
        for row in reader:
            rows.append((int(row[0]), float(row[1])))
    rows.sort()
    if [i for i, _ in rows] != list(range(len(rows))):
        raise DomainError("field CSV must cover vertex ids 0..n-1 exactly once")
    return np.array([v for _, v in rows], dtype=np.float64)


def field_to_json(path, f: np.ndarray) -> None:
    with open(path, "w") as fh:
        json.dump([float(v) for v in f], fh)


def field_from_json(path) -> np.ndarray:
    with open(path) as fh:
        return np.asarray(json.load(fh), dtype=np.float64)
