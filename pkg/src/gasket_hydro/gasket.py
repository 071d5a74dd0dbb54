"""Level-N Sierpinski gasket approximating graphs.

Vertices are produced by the three midpoint contractions of the unit
equilateral triangle with corners a0=(0,0), a1=(1,0), a2=(1/2, sqrt(3)/2).
Identity of vertices is resolved with exact lattice coordinates: every
vertex of the level-N graph is alpha*a1 + beta*a2 with alpha, beta dyadic
rationals of denominator 2**N, stored as integer numerators.  Floating
point is used only for the exported planar coordinates.

Canonical vertex order: the three corners first (ids 0, 1, 2), then the
remaining vertices sorted lexicographically by planar (x, y).  Two builds
at the same level produce identical vertex and edge arrays.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import CapacityError, DomainError

#: Hard cap on graph construction level.
MAX_LEVEL = 12

_SQRT3_2 = np.sqrt(3.0) / 2.0


def vertex_count(level: int) -> int:
    """|V_N| = (3/2)(3^N + 1)."""
    return 3 * (3**level + 1) // 2


def edge_count(level: int) -> int:
    """|E_N| = 3^(N+1)."""
    return 3 ** (level + 1)


@dataclass(frozen=True)
class GasketGraph:
    """Immutable level-N gasket graph with canonical vertex order.

    ``lattice[i]`` holds the exact (alpha, beta) numerators of vertex i over
    denominator ``2**level``; ``coords[i]`` the planar (x, y) doubles.
    ``corners`` are always ``(0, 1, 2)`` = (a0, a1, a2).
    """

    level: int
    lattice: np.ndarray  # (n, 2) int64, exact numerators over 2**level
    coords: np.ndarray  # (n, 2) float64 planar coordinates
    edges: np.ndarray  # (m, 2) int32, each row sorted, rows sorted
    corners: tuple[int, int, int]
    neighbor_ptr: np.ndarray  # CSR over vertices -> neighbor vertex ids
    neighbor_idx: np.ndarray
    incident_ptr: np.ndarray  # CSR over vertices -> incident edge ids
    incident_idx: np.ndarray

    @property
    def n_vertices(self) -> int:
        return self.lattice.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.neighbor_ptr)

    @property
    def interior_mask(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[list(self.corners)] = False
        return mask

    @property
    def vertex_measure(self) -> float:
        """Uniform mass per vertex, 1/|V_N|."""
        return 1.0 / self.n_vertices

    def neighbors(self, x: int) -> np.ndarray:
        return self.neighbor_idx[self.neighbor_ptr[x] : self.neighbor_ptr[x + 1]]

    def incident_edges(self, x: int) -> np.ndarray:
        return self.incident_idx[self.incident_ptr[x] : self.incident_ptr[x + 1]]

    def vertex_id(self, alpha_num: int, beta_num: int) -> int:
        """Look up a vertex by exact lattice numerators."""
        return _vertex_index(self.level)[(alpha_num, beta_num)]

    def to_json_dict(self) -> dict:
        """Graph export schema: {level, vertices:[{id,x,y,is_corner}], edges:[[i,j]]}."""
        corners = set(self.corners)
        return {
            "level": self.level,
            "vertices": [
                {
                    "id": i,
                    "x": float(self.coords[i, 0]),
                    "y": float(self.coords[i, 1]),
                    "is_corner": i in corners,
                }
                for i in range(self.n_vertices)
            ],
            "edges": [[int(i), int(j)] for i, j in self.edges],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_json_dict(), **kwargs)


def _enumerate_cells(level: int):
    """Yield (origin_alpha, origin_beta) for every level-`level` cell.

    A cell of side 1 (lattice units) anchored at (oa, ob) has corner points
    (oa, ob), (oa+1, ob), (oa, ob+1).  Subdividing the full triangle by the
    letters 0/1/2 moves the anchor toward a0/a1/a2.
    """
    stack = [(0, 0, 2**level)]
    while stack:
        oa, ob, size = stack.pop()
        if size == 1:
            yield oa, ob
            continue
        half = size // 2
        stack.append((oa, ob, half))
        stack.append((oa + half, ob, half))
        stack.append((oa, ob + half, half))


def build(level: int) -> GasketGraph:
    """Construct the canonical level-N gasket graph.

    Raises CapacityError for level > MAX_LEVEL and DomainError for
    negative levels.  The construction audit (vertex/edge counts, degree
    profile, connectivity) runs on every build.
    """
    if level < 0:
        raise DomainError(f"level must be >= 0, got {level}")
    if level > MAX_LEVEL:
        raise CapacityError(f"level {level} exceeds construction cap {MAX_LEVEL}")

    scale = 2**level
    corner_keys = [(0, 0), (scale, 0), (0, scale)]

    index: dict[tuple[int, int], int] = {}
    for key in corner_keys:
        index[key] = len(index)

    cell_triples = []
    noncorner = set()
    for oa, ob in _enumerate_cells(level):
        tri = ((oa, ob), (oa + 1, ob), (oa, ob + 1))
        cell_triples.append(tri)
        for key in tri:
            if key not in index:
                noncorner.add(key)

    # canonical order: corners, then lex by planar (x, y) = ((2a+b)/2^{N+1}, b*sqrt3/2^{N+1})
    for key in sorted(noncorner, key=lambda ab: (2 * ab[0] + ab[1], ab[1])):
        index[key] = len(index)

    n = len(index)
    lattice = np.empty((n, 2), dtype=np.int64)
    for (a, b), i in index.items():
        lattice[i, 0] = a
        lattice[i, 1] = b

    coords = np.empty((n, 2), dtype=np.float64)
    coords[:, 0] = (lattice[:, 0] + 0.5 * lattice[:, 1]) / scale
    coords[:, 1] = lattice[:, 1] * _SQRT3_2 / scale

    edge_set = set()
    for tri in cell_triples:
        ids = [index[k] for k in tri]
        for u, v in ((0, 1), (0, 2), (1, 2)):
            i, j = ids[u], ids[v]
            edge_set.add((i, j) if i < j else (j, i))
    edges = np.array(sorted(edge_set), dtype=np.int32)

    neighbor_ptr, neighbor_idx, incident_ptr, incident_idx = _adjacency(n, edges)

    g = GasketGraph(
        level=level,
        lattice=lattice,
        coords=coords,
        edges=edges,
        corners=(0, 1, 2),
        neighbor_ptr=neighbor_ptr,
        neighbor_idx=neighbor_idx,
        incident_ptr=incident_ptr,
        incident_idx=incident_idx,
    )
    _audit(g)
    return g


def _adjacency(n: int, edges: np.ndarray):
    m = edges.shape[0]
    deg = np.zeros(n, dtype=np.int64)
    for i, j in edges:
        deg[i] += 1
        deg[j] += 1
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(deg, out=ptr[1:])
    nbr = np.empty(2 * m, dtype=np.int32)
    inc = np.empty(2 * m, dtype=np.int32)
    fill = ptr[:-1].copy()
    for e in range(m):
        i, j = edges[e]
        nbr[fill[i]] = j
        inc[fill[i]] = e
        fill[i] += 1
        nbr[fill[j]] = i
        inc[fill[j]] = e
        fill[j] += 1
    return ptr, nbr, ptr.copy(), inc


def _audit(g: GasketGraph) -> None:
    n_expected = vertex_count(g.level)
    m_expected = edge_count(g.level)
    if g.n_vertices != n_expected:
        raise AssertionError(f"vertex count {g.n_vertices} != {n_expected}")
    if g.n_edges != m_expected:
        raise AssertionError(f"edge count {g.n_edges} != {m_expected}")
    deg = g.degrees
    corners = list(g.corners)
    if g.level == 0:
        if not np.all(deg == 2):
            raise AssertionError("level-0 degrees must all be 2")
    else:
        if not np.all(deg[corners] == 2):
            raise AssertionError("corner degrees must be 2")
        mask = g.interior_mask
        if not np.all(deg[mask] == 4):
            raise AssertionError("non-corner degrees must be 4")
    # connectivity via BFS from vertex 0
    seen = np.zeros(g.n_vertices, dtype=bool)
    stack = [0]
    seen[0] = True
    while stack:
        x = stack.pop()
        for y in g.neighbors(x):
            if not seen[y]:
                seen[y] = True
                stack.append(int(y))
    if not seen.all():
        raise AssertionError("graph is not connected")


@lru_cache(maxsize=None)
def _vertex_index(level: int) -> dict[tuple[int, int], int]:
    g = build_cached(level)
    return {(int(a), int(b)): i for i, (a, b) in enumerate(g.lattice)}


@lru_cache(maxsize=None)
def build_cached(level: int) -> GasketGraph:
    """Memoized build(); graphs are immutable so sharing is safe."""
    return build(level)


def parse_word(word) -> tuple[int, ...]:
    """Normalize a cell word given as a string of digits or an int sequence."""
    if isinstance(word, str):
        letters = tuple(int(ch) for ch in word if not ch.isspace())
    else:
        letters = tuple(int(w) for w in word)
    for w in letters:
        if w not in (0, 1, 2):
            raise DomainError(f"invalid letter {w!r} in cell word {word!r}")
    return letters


def cell_vertices(g: GasketGraph, word) -> frozenset[int]:
    """Vertex ids of V_N lying in the cell K_w; |w| <= N required.

    The empty word gives all of V_N.  Cardinality is (3/2)(3^(N-|w|)+1).
    """
    letters = parse_word(word)
    if len(letters) > g.level:
        raise DomainError(
            f"cell word length {len(letters)} exceeds graph level {g.level}"
        )
    size = 2**g.level
    oa = ob = 0
    for w in letters:
        size //= 2
        if w == 1:
            oa += size
        elif w == 2:
            ob += size
    a = g.lattice[:, 0]
    b = g.lattice[:, 1]
    inside = (a >= oa) & (b >= ob) & (a + b <= oa + ob + size)
    return frozenset(int(i) for i in np.nonzero(inside)[0])


def corner_cell(g: GasketGraph, corner: int, depth: int) -> str:
    """The unique depth-j cell word containing corner a_i: the letter i
    repeated j times (a_i is the fixed point of its contraction)."""
    if corner not in (0, 1, 2):
        raise DomainError(f"corner must be 0, 1 or 2, got {corner!r}")
    if depth < 0 or depth > g.level:
        raise DomainError(f"depth {depth} outside [0, {g.level}]")
    return str(corner) * depth
