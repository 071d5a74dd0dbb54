"""Boundary-conditioned operators on gasket graphs and their spectra.

Operator convention: the assembled matrix H_N acts on free vertices
(Dirichlet corners eliminated) as

    (H_N f)(x) = -(3/2) (Delta_N f)(x)                   at interior x,
    (H_N f)(a) = (3/2) 3^N [ (d_perp f)(a) + lam(a) f(a) 1_{Robin} ]
                                                          at free corners a,

which is exactly (3/2) 5^N L + (3/2) 3^N diag(Robin) with L the
unit-weight graph Laplacian, hence symmetric to machine precision.  Its
eigenvalues approximate those of the continuum -Delta operator with the
matching boundary condition; the 2/3 time-scaling factor is applied only
inside semigroup_apply, never stored in H_N.

Against the uniform vertex measure the operator represents the scaled form

    <H_N f, g>_{m_N} = (3^N / (3^N + 1)) [ E_N(f, g) + sum_Robin lam(a) f(a) g(a) ],

the 3^N/(3^N+1) -> 1 factor being the price of an exactly symmetric matrix
with the -(3/2) Delta_N interior convention.

Eigenvectors are returned orthonormal w.r.t. <f, g> = (1/|V_N|) sum f g,
with zeros re-inserted at eliminated Dirichlet corners.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, DomainError, InsufficientDataError
from .gasket import GasketGraph

#: dense eigensolver cap on |V_N| (N <= 6)
DENSE_CAP = 1100

KINDS = ("dirichlet", "neumann", "robin")


@dataclass(frozen=True)
class BoundaryCondition:
    """Per-corner boundary condition: Dirichlet, Neumann, or Robin(lam > 0)."""

    kinds: tuple[str, str, str]
    robin_coeff: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if len(self.kinds) != 3:
            raise DomainError("kinds must be a triple")
        for k in self.kinds:
            if k not in KINDS:
                raise DomainError(f"unknown boundary kind {k!r}")
        for k, lam in zip(self.kinds, self.robin_coeff):
            if k == "robin" and not lam > 0:
                raise DomainError("Robin coefficient must be positive")

    @classmethod
    def dirichlet(cls) -> "BoundaryCondition":
        return cls(("dirichlet",) * 3)

    @classmethod
    def neumann(cls) -> "BoundaryCondition":
        return cls(("neumann",) * 3)

    @classmethod
    def robin(cls, lam) -> "BoundaryCondition":
        lam = np.broadcast_to(np.asarray(lam, dtype=np.float64), (3,))
        return cls(("robin",) * 3, tuple(float(v) for v in lam))

    @property
    def is_pure_dirichlet(self) -> bool:
        return all(k == "dirichlet" for k in self.kinds)

    @property
    def is_pure_neumann(self) -> bool:
        return all(k == "neumann" for k in self.kinds)

    def describe(self) -> str:
        parts = []
        for i, k in enumerate(self.kinds):
            if k == "robin":
                parts.append(f"a{i}:robin({self.robin_coeff[i]:g})")
            else:
                parts.append(f"a{i}:{k}")
        return ", ".join(parts)


@dataclass(frozen=True)
class Operator:
    """Assembled symmetric matrix on the free (non-eliminated) vertices."""

    level: int
    n_vertices: int
    bc: BoundaryCondition
    free: np.ndarray  # free vertex ids, ascending
    matrix: np.ndarray  # (n_free, n_free) symmetric


def assemble(g: GasketGraph, bc: BoundaryCondition) -> Operator:
    """Build H_N for the given boundary condition (Dirichlet by elimination)."""
    eliminated = {a for a, k in zip(g.corners, bc.kinds) if k == "dirichlet"}
    free = np.array([i for i in range(g.n_vertices) if i not in eliminated])
    pos = np.full(g.n_vertices, -1, dtype=np.int64)
    pos[free] = np.arange(free.size)

    scale = 1.5 * 5.0**g.level
    H = np.zeros((free.size, free.size), dtype=np.float64)
    for i, j in g.edges:
        pi, pj = pos[i], pos[j]
        if pi >= 0:
            H[pi, pi] += scale
        if pj >= 0:
            H[pj, pj] += scale
        if pi >= 0 and pj >= 0:
            H[pi, pj] -= scale
            H[pj, pi] -= scale
    boundary_scale = 1.5 * 3.0**g.level
    for a, k, lam in zip(g.corners, bc.kinds, bc.robin_coeff):
        if k == "robin":
            H[pos[a], pos[a]] += boundary_scale * lam
    return Operator(level=g.level, n_vertices=g.n_vertices, bc=bc, free=free, matrix=H)


@dataclass(frozen=True)
class Spectrum:
    """Ascending eigenpairs of H_N, eigenvectors m_N-orthonormal."""

    level: int
    n_vertices: int
    bc: BoundaryCondition
    eigenvalues: np.ndarray  # (k,)
    eigenvectors: np.ndarray  # (n_vertices, k), zeros at Dirichlet corners

    @property
    def n_modes(self) -> int:
        return self.eigenvalues.size

    def coefficients(self, f: np.ndarray) -> np.ndarray:
        """m_N inner products <f, phi_n> = (1/|V_N|) sum f phi_n."""
        f = np.asarray(f, dtype=np.float64)
        return self.eigenvectors.T @ f / self.n_vertices


def eigendecompose(
    g: GasketGraph, bc: BoundaryCondition, *, dense_cap: int = DENSE_CAP
) -> Spectrum:
    """Full dense symmetric eigendecomposition of H_N.

    Raises CapacityError when |V_N| exceeds the dense cap (default 1100,
    i.e. N <= 6).  Neumann zero eigenvalues are clipped to exactly 0.
    """
    if g.n_vertices > dense_cap:
        raise CapacityError(
            f"|V_{g.level}| = {g.n_vertices} exceeds dense eigensolver cap {dense_cap}"
        )
    op = assemble(g, bc)
    evals, evecs = np.linalg.eigh(op.matrix)
    # m_N-orthonormal: the matrix eigenvectors are l2-orthonormal on free
    # vertices; scaling by sqrt(|V_N|) gives (1/|V_N|) sum phi^2 = 1.
    phi = np.zeros((g.n_vertices, evals.size), dtype=np.float64)
    phi[op.free, :] = evecs * np.sqrt(g.n_vertices)
    tiny = 1e-9 * max(1.0, float(np.abs(evals).max()))
    evals = np.where(np.abs(evals) < tiny, 0.0, evals)
    return Spectrum(
        level=g.level,
        n_vertices=g.n_vertices,
        bc=bc,
        eigenvalues=evals,
        eigenvectors=phi,
    )


def counting_function(s: Spectrum, threshold: float) -> int:
    """#(s) = number of eigenvalues <= threshold."""
    return int(np.searchsorted(s.eigenvalues, threshold, side="right"))


def weyl_slope(s: Spectrum) -> float:
    """Least-squares slope of log #(lambda_n) vs log lambda_n over the middle
    half of the spectrum.

    "Middle half" is taken on the log-eigenvalue axis: eigenvalues with
    log(lambda) in the central half of [log lambda_min+, log lambda_max].
    The top quarter of the discrete spectrum saturates at the lattice cutoff
    and departs from the continuum power law, which the log-range window
    excludes.  Requires at least 10 eigenvalues.
    """
    m = s.n_modes
    if m < 10:
        raise InsufficientDataError(f"need >= 10 eigenvalues, have {m}")
    lam = s.eigenvalues
    n = np.arange(1, m + 1, dtype=np.float64)
    good = lam > 0
    lam, n = lam[good], n[good]
    loglam = np.log(lam)
    lo = loglam[0] + 0.25 * (loglam[-1] - loglam[0])
    hi = loglam[0] + 0.75 * (loglam[-1] - loglam[0])
    sel = (loglam >= lo) & (loglam <= hi)
    if sel.sum() < 5:
        raise InsufficientDataError("too few eigenvalues in the fit window")
    slope = np.polyfit(loglam[sel], np.log(n[sel]), 1)[0]
    return float(slope)


def weyl_target_exponent() -> float:
    """d/(d+1) with d = log 3 / log(5/3), approximately 0.6826."""
    d = np.log(3.0) / np.log(5.0 / 3.0)
    return float(d / (d + 1.0))


def semigroup_apply(s: Spectrum, f: np.ndarray, t: float) -> np.ndarray:
    """Heat semigroup with generator (2/3) H_N applied to f.

    For Dirichlet conditions this projects f onto the free-vertex span
    (corner values do not persist), so t = 0 is the identity only on
    fields vanishing at eliminated corners.
    """
    if t < 0:
        raise DomainError(f"time must be >= 0, got {t}")
    f = np.asarray(f, dtype=np.float64)
    if f.shape != (s.n_vertices,):
        raise DomainError("field length does not match spectrum level")
    coef = s.coefficients(f) * np.exp(-(2.0 / 3.0) * s.eigenvalues * t)
    return s.eigenvectors @ coef


def heat_kernel(s: Spectrum, t: float, x: int, y: int) -> float:
    """p_t(x,y) = sum_n exp(-lambda_n t) phi_n(x) phi_n(y), t > 0."""
    if t <= 0:
        raise DomainError(f"heat kernel requires t > 0, got {t}")
    wx = s.eigenvectors[x, :]
    wy = s.eigenvectors[y, :]
    return float(np.sum(np.exp(-s.eigenvalues * t) * wx * wy))


def spectrum_to_csv(path, s: Spectrum) -> None:
    import csv as _csv

    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["n", "lambda"])
        for n, lam in enumerate(s.eigenvalues, start=1):
            w.writerow([n, repr(float(lam))])


def counting_to_csv(path, s: Spectrum, thresholds=None) -> None:
    import csv as _csv

    if thresholds is None:
        thresholds = s.eigenvalues
    with open(path, "w", newline="") as fh:
        w = _csv.writer(fh)
        w.writerow(["s", "count"])
        for th in thresholds:
            w.writerow([repr(float(th)), counting_function(s, th)])
