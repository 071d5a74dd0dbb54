"""Experiment orchestration CLI: `gasket-hydro <subcommand> --config FILE`.

One JSON config file is the source of truth; command-line flags override
individual keys.  Every run writes its outputs plus a manifest
(config hash, seed, tool version, timestamps, per-output sha256) into the
output directory.  Exit codes: 0 ok, 2 config error, 3 capacity error,
4 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import subprocess
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, fluct, pde, sim, spectral
from .calculus import field_from_csv, field_to_csv, ResistanceSolver
from .errors import (
    CapacityError,
    ConfigError,
    GasketHydroError,
)
from .gasket import build, cell_vertices, corner_cell
from .spectral import BoundaryCondition

OUTPUT_ROOT_ENV = "GASKET_HYDRO_OUTPUT"


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ExperimentConfig:
    level: int
    boundary: sim.BoundarySpec
    initial_kind: str
    initial_value: object
    horizon: float
    replicas: int
    eigen_indices: list[int]
    observable_files: list[str]
    grid_points: int
    seed: int
    output_dir: str | None
    jobs: int
    raw: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        try:
            level = int(raw.get("level", 2))
            if level < 0:
                raise ConfigError("level must be >= 0")
            boundary = _parse_boundary(raw.get("boundary", {}))
            init = raw.get("initial", {"kind": "constant", "value": 0.5})
            kind = init.get("kind", "constant")
            if kind == "constant":
                value = float(init.get("value", 0.5))
            elif kind == "harmonic":
                value = [float(v) for v in init["values"]]
            elif kind in ("empty", "full"):
                value = None
            elif kind in ("field-file", "configuration-file"):
                value = str(init["path"])
                if not Path(value).exists():
                    raise ConfigError(f"initial condition file not found: {value}")
            else:
                raise ConfigError(f"unknown initial condition kind {kind!r}")
            observables = raw.get("observables", {"eigen_indices": [1, 2, 3]})
            files = [str(p) for p in observables.get("files", [])]
            for p in files:
                if not Path(p).exists():
                    raise ConfigError(f"observable file not found: {p}")
            replicas = int(raw.get("replicas", 1))
            if replicas < 1:
                raise ConfigError("replicas must be >= 1")
            grid_points = int(raw.get("time_grid", {}).get("points", 101))
            if grid_points < 2:
                raise ConfigError("time grid needs at least 2 points")
            return cls(
                level=level,
                boundary=boundary,
                initial_kind=kind,
                initial_value=value,
                horizon=float(raw.get("horizon", 1.0)),
                replicas=replicas,
                eigen_indices=[int(i) for i in observables.get("eigen_indices", [1, 2, 3])],
                observable_files=files,
                grid_points=grid_points,
                seed=int(raw.get("seed", 0)),
                output_dir=raw.get("output_dir"),
                jobs=max(1, int(raw.get("jobs", 1))),
                raw=raw,
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad configuration: {exc}") from exc


def _parse_boundary(section: dict) -> sim.BoundarySpec:
    def triple(key, default):
        v = section.get(key, default)
        if isinstance(v, (int, float, str)):
            return (v, v, v)
        if len(v) != 3:
            raise ConfigError(f"boundary.{key} must be a scalar or a triple")
        return tuple(v)

    lp = tuple(float(v) for v in triple("lambda_plus", 1.0))
    lm = tuple(float(v) for v in triple("lambda_minus", 1.0))
    b = tuple(sim.parse_b(v) for v in triple("b", "5/3"))
    try:
        return sim.BoundarySpec(lp, lm, b)
    except GasketHydroError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | None, overrides: dict) -> ExperimentConfig:
    raw: dict = {}
    if path is not None:
        try:
            with open(path) as fh:
                raw = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    for key, value in overrides.items():
        if value is None:
            continue
        if key in ("b", "lambda_plus", "lambda_minus"):
            raw.setdefault("boundary", {})[key] = value
        elif key == "grid_points":
            raw.setdefault("time_grid", {})["points"] = value
        else:
            raw[key] = value
    return ExperimentConfig.from_dict(raw)


def initial_profile(cfg: ExperimentConfig, g) -> np.ndarray | str:
    """Resolve the initial-condition spec to an engine-ready object."""
    kind = cfg.initial_kind
    if kind == "constant":
        return np.full(g.n_vertices, float(cfg.initial_value))
    if kind == "harmonic":
        from .calculus import harmonic_extension

        return harmonic_extension(cfg.initial_value, graph=g)
    if kind in ("empty", "full"):
        return kind
    if kind == "field-file":
        arr = field_from_csv(cfg.initial_value)
        if arr.size != g.n_vertices:
            raise ConfigError("initial field file has the wrong length")
        return arr
    if kind == "configuration-file":
        line = Path(cfg.initial_value).read_text().split()[0].strip()
        occ = np.array([int(ch) for ch in line], dtype=np.uint8)
        if occ.size != g.n_vertices:
            raise ConfigError("initial configuration has the wrong length")
        return occ
    raise ConfigError(f"unknown initial kind {kind!r}")


def test_functions(cfg: ExperimentConfig, g, spectrum) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    for idx in cfg.eigen_indices:
        if not 1 <= idx <= spectrum.n_modes:
            raise ConfigError(f"eigen index {idx} out of range")
        out[f"phi{idx}"] = spectrum.eigenvectors[:, idx - 1]
    for path in cfg.observable_files:
        arr = field_from_csv(path)
        if arr.size != g.n_vertices:
            raise ConfigError(f"observable file {path} has the wrong length")
        out[Path(path).stem] = arr
    return out


# ---------------------------------------------------------------------------
# manifest & output plumbing


def tool_version() -> str:
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        git = desc.stdout.strip() if desc.returncode == 0 else ""
    except OSError:
        git = ""
    return f"{__version__}+git.{git}" if git else __version__


def config_hash(raw: dict) -> str:
    blob = json.dumps(raw, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class RunDir:
    """Output directory plus the growing list of files for the manifest."""

    def __init__(self, cfg: ExperimentConfig, subcommand: str):
        if cfg.output_dir:
            root = Path(cfg.output_dir)
        else:
            base = Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))
            root = base / f"{subcommand}-{config_hash(cfg.raw)[:8]}"
        root.mkdir(parents=True, exist_ok=True)
        self.path = root
        self.cfg = cfg
        self.subcommand = subcommand
        self.files: list[Path] = []
        self.started = time.time()

    def file(self, name: str) -> Path:
        p = self.path / name
        self.files.append(p)
        return p

    def write_json(self, name: str, payload) -> Path:
        p = self.file(name)
        with open(p, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
        return p

    def write_manifest(self) -> Path:
        manifest = {
            "subcommand": self.subcommand,
            "config": self.cfg.raw,
            "config_hash": config_hash(self.cfg.raw),
            "seed": self.cfg.seed,
            "level": self.cfg.level,
            "boundary": self.cfg.boundary.to_json_dict(),
            "tool_version": tool_version(),
            "started_utc": time.strftime(
                "%Y-%m-%dT%H:%M:%SZ", time.gmtime(self.started)
            ),
            "elapsed_seconds": round(time.time() - self.started, 3),
            "outputs": {
                p.name: _sha256(p) for p in self.files if p.exists()
            },
        }
        p = self.path / "manifest.json"
        with open(p, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        return p


def _csv_writer(path: Path):
    fh = open(path, "w", newline="")
    return fh, csv.writer(fh)


# ---------------------------------------------------------------------------
# subcommands


def cmd_graph(cfg: ExperimentConfig) -> int:
    g = build(cfg.level)
    run = RunDir(cfg, "graph")
    with open(run.file("graph.json"), "w") as fh:
        json.dump(g.to_json_dict(), fh)
        fh.write("\n")
    run.write_json(
        "summary.json",
        {
            "level": g.level,
            "n_vertices": g.n_vertices,
            "n_edges": g.n_edges,
            "degree_profile": {str(d): int(c) for d, c in zip(*np.unique(g.degrees, return_counts=True))},
        },
    )
    run.write_manifest()
    print(f"graph level {g.level}: {g.n_vertices} vertices, {g.n_edges} edges -> {run.path}")
    return 0


def cmd_resistance(cfg: ExperimentConfig) -> int:
    g = build(cfg.level)
    run = RunDir(cfg, "resistance")
    fh, w = _csv_writer(run.file("corner_resistance.csv"))
    w.writerow(["corner_i", "corner_j", "resistance", "scaling_law"])
    solver = ResistanceSolver(g, ground=0)
    law = (2.0 / 3.0) * (5.0 / 3.0) ** g.level
    for i in range(3):
        for j in range(i + 1, 3):
            w.writerow([i, j, repr(solver.resistance(i, j)), repr(law)])
    fh.close()

    fh, w = _csv_writer(run.file("cell_radius.csv"))
    w.writerow(["corner", "depth", "max_resistance_to_corner", "bound_scale"])
    ratios = []
    for a in range(3):
        s = ResistanceSolver(g, ground=a)
        for depth in range(1, g.level + 1):
            ids = sorted(cell_vertices(g, corner_cell(g, a, depth)) - {a})
            rad = max(s.resistance(z, a) for z in ids)
            scale = (5.0 / 3.0) ** (g.level - depth)
            ratios.append(rad / scale)
            w.writerow([a, depth, repr(rad), repr(scale)])
    fh.close()
    run.write_json(
        "summary.json",
        {"fitted_C": max(ratios) if ratios else None, "n_cells": len(ratios)},
    )
    run.write_manifest()
    print(f"resistance tables -> {run.path}")
    return 0


def _resolve_bc(cfg: ExperimentConfig) -> BoundaryCondition:
    choice = cfg.raw.get("bc", "regime")
    if choice == "regime":
        return cfg.boundary.boundary_condition()
    if choice == "dirichlet":
        return BoundaryCondition.dirichlet()
    if choice == "neumann":
        return BoundaryCondition.neumann()
    if choice == "robin":
        return BoundaryCondition.robin(cfg.boundary.lambda_sigma)
    raise ConfigError(f"unknown bc {choice!r}")


def cmd_spectrum(cfg: ExperimentConfig) -> int:
    g = build(cfg.level)
    bc = _resolve_bc(cfg)
    s = spectral.eigendecompose(g, bc)
    run = RunDir(cfg, "spectrum")
    spectral.spectrum_to_csv(run.file("eigenvalues.csv"), s)
    spectral.counting_to_csv(run.file("counting.csv"), s)
    payload = {
        "bc": bc.describe(),
        "n_modes": s.n_modes,
        "lambda_1": float(s.eigenvalues[0]),
        "weyl_target": spectral.weyl_target_exponent(),
    }
    try:
        payload["weyl_slope"] = spectral.weyl_slope(s)
    except GasketHydroError as exc:
        payload["weyl_slope_error"] = str(exc)
    run.write_json("weyl.json", payload)
    if cfg.raw.get("eigenvectors", False):
        run.write_json(
            "eigenvectors.json",
            {"eigenvalues": s.eigenvalues.tolist(), "vectors": s.eigenvectors.T.tolist()},
        )
    run.write_manifest()
    print(f"spectrum ({bc.describe()}): {s.n_modes} modes -> {run.path}")
    return 0


def cmd_pde(cfg: ExperimentConfig) -> int:
    g = build(cfg.level)
    p = pde.problem_from_boundary_spec(
        g, cfg.boundary, _profile_for_pde(cfg, g), cfg.horizon
    )
    s = spectral.eigendecompose(g, p.bc)
    run = RunDir(cfg, "pde")
    times = np.linspace(0.0, cfg.horizon, cfg.grid_points)
    traj = pde.solve_series(g, p, s, times)

    field_to_csv(run.file("steady_state.csv"), pde.steady_state(g, p))
    fh, w = _csv_writer(run.file("trajectory.csv"))
    w.writerow(["t"] + [f"v{i}" for i in range(g.n_vertices)])
    for t, row in zip(times, traj):
        w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
    fh.close()

    fh, w = _csv_writer(run.file("energy_trace.csv"))
    w.writerow(["t", "energy"])
    for t, e in zip(times, pde.energy_trace(g, traj)):
        w.writerow([repr(float(t)), repr(float(e))])
    fh.close()

    quad = int(cfg.raw.get("quadrature_points", 1001))
    residuals = {}
    n_test = min(3, s.n_modes)
    for k in range(n_test):
        phi = s.eigenvectors[:, k]
        if any(
            kind == "dirichlet" and abs(phi[a]) > 1e-12
            for a, kind in zip(g.corners, p.bc.kinds)
        ):
            continue
        sub = {}
        for pts in (quad // 4 + 1, quad // 2 + 1, quad):
            tt = np.linspace(0.0, cfg.horizon, pts)
            tr = pde.solve_series(g, p, s, tt)
            sub[pts] = pde.weak_residual(g, p, tt, tr, pde.TimeTestFunction(phi))
        residuals[f"phi{k + 1}"] = sub
    run.write_json(
        "weak_residual.json",
        {
            "residuals": residuals,
            "max_principle_gap": pde.max_principle_gap(p, traj),
        },
    )
    run.write_manifest()
    print(f"pde solve ({p.bc.describe()}) -> {run.path}")
    return 0


def _profile_for_pde(cfg: ExperimentConfig, g) -> np.ndarray:
    prof = initial_profile(cfg, g)
    if isinstance(prof, str):
        return np.zeros(g.n_vertices) if prof == "empty" else np.ones(g.n_vertices)
    return np.asarray(prof, dtype=np.float64)


def _series_csv(run: RunDir, name: str, series_list, observable_names):
    fh, w = _csv_writer(run.file(name))
    w.writerow(["replica", "t", "observable", "value"])
    for s in series_list:
        for ob in observable_names:
            vals = s.values[ob]
            for t, v in zip(s.times, vals):
                w.writerow([s.stream.stream_id, repr(float(t)), ob, repr(float(v))])
    fh.close()


def cmd_simulate(cfg: ExperimentConfig) -> int:
    g = build(cfg.level)
    bs = cfg.boundary
    s = spectral.eigendecompose(g, bs.boundary_condition())
    tf = test_functions(cfg, g, s)
    obs = [sim.pi_observable(g, F, name=f"pi:{name}") for name, F in tf.items()]
    grid = np.linspace(0.0, cfg.horizon, cfg.grid_points)
    run = RunDir(cfg, "simulate")
    series = sim.run_replicas(
        g,
        bs,
        initial_profile(cfg, g),
        cfg.seed,
        cfg.replicas,
        cfg.horizon,
        obs,
        grid,
        jobs=cfg.jobs,
    )
    _series_csv(run, "series.csv", series, [ob.name for ob in obs])
    with open(run.file("final_configurations.txt"), "w") as fh:
        for s_ in series:
            fh.write("".join(str(int(v)) for v in s_.final_config.occupation) + "\n")
    fh2, w = _csv_writer(run.file("occupation_time.csv"))
    w.writerow(["replica", "vertex_id", "mean_occupation"])
    for s_ in series:
        for x, v in enumerate(s_.occupation_time / cfg.horizon):
            w.writerow([s_.stream.stream_id, x, repr(float(v))])
    fh2.close()
    run.write_manifest()
    print(f"simulate: {cfg.replicas} replicas, {sum(s_.n_events for s_ in series)} events -> {run.path}")
    return 0


def cmd_hydro_compare(cfg: ExperimentConfig) -> int:
    g = build(cfg.level)
    bs = cfg.boundary
    s = spectral.eigendecompose(g, bs.boundary_condition())
    tf = test_functions(cfg, g, s)
    prof = _profile_for_pde(cfg, g)
    p = pde.problem_from_boundary_spec(g, bs, prof, cfg.horizon)
    times = np.linspace(0.0, cfg.horizon, cfg.grid_points)
    theory = {
        name: pde.solve_series(g, p, s, times) @ F / g.n_vertices
        for name, F in tf.items()
    }
    obs = [sim.pi_observable(g, F, name=name) for name, F in tf.items()]
    series = sim.run_replicas(
        g, bs, prof, cfg.seed, cfg.replicas, cfg.horizon, obs, times, jobs=cfg.jobs
    )
    run = RunDir(cfg, "hydro-compare")
    fh, w = _csv_writer(run.file("curves.csv"))
    w.writerow(["t", "observable", "empirical_mean", "theory"])
    sup_of_mean = {}
    mean_of_sup = {}
    for name in tf:
        emp = np.mean([s_.values[name] for s_ in series], axis=0)
        sup_of_mean[name] = float(np.abs(emp - theory[name]).max())
        mean_of_sup[name] = float(
            np.mean([np.abs(s_.values[name] - theory[name]).max() for s_ in series])
        )
        for t, e, th in zip(times, emp, theory[name]):
            w.writerow([repr(float(t)), name, repr(float(e)), repr(float(th))])
    fh.close()
    fh, w = _csv_writer(run.file("hydro_compare.csv"))
    w.writerow(["observable", "sup_dev_of_replica_mean", "mean_sup_dev_per_replica", "replicas"])
    for name in tf:
        w.writerow([name, repr(sup_of_mean[name]), repr(mean_of_sup[name]), cfg.replicas])
    fh.close()
    run.write_manifest()
    print(f"hydro-compare ({', '.join(bs.regimes)}) -> {run.path}")
    return 0


def cmd_fluct(cfg: ExperimentConfig) -> int:
    g = build(cfg.level)
    bs = cfg.boundary
    if not bs.is_equilibrium:
        raise ConfigError("fluct requires equal reservoir rates at all corners")
    rho = bs.rho_bar[0]
    s = spectral.eigendecompose(g, bs.boundary_condition())
    tf = test_functions(cfg, g, s)
    fcfg = cfg.raw.get("fluct", {})
    t_end = float(fcfg.get("t_end", 200.0))
    dt = float(fcfg.get("dt", 0.01))
    n_lags = int(fcfg.get("lags", 21))
    lag_step = float(fcfg.get("lag_step", dt))
    batches = int(fcfg.get("batches", 50))
    series = fluct.equilibrium_path(g, bs, rho, t_end, dt, cfg.seed, tf)
    run = RunDir(cfg, "fluct")
    rates = {}
    fh, w = _csv_writer(run.file("covariance.csv"))
    w.writerow(["observable", "lag", "theory", "estimate", "stderr"])
    lags = np.arange(n_lags) * lag_step
    for name, F in tf.items():
        y = series.values[f"Y:{name}"]
        ests = [fluct.ou_covariance_empirical(y, y, dt, lag, batches) for lag in lags]
        for lag, est in zip(lags, ests):
            w.writerow(
                [
                    name,
                    repr(float(lag)),
                    repr(fluct.ou_covariance_theory(s, F, F, lag, rho)),
                    repr(est.estimate),
                    repr(est.stderr),
                ]
            )
        lam = float(s.coefficients(F) @ (s.eigenvalues * s.coefficients(F))) / float(
            s.coefficients(F) @ s.coefficients(F)
        )
        entry = {"theory_rate": (2.0 / 3.0) * lam}
        try:
            entry["fitted_rate"] = fluct.fit_decay_rate(lags, [e.estimate for e in ests])
        except GasketHydroError as exc:
            entry["fit_error"] = str(exc)
        lag0 = ests[0]
        entry["lag0_estimate"] = lag0.estimate
        entry["lag0_stderr"] = lag0.stderr
        entry["lag0_theory"] = fluct.ou_covariance_theory(s, F, F, 0.0, rho)
        rates[name] = entry
    fh.close()

    qv_cfg = {
        "t": float(fcfg.get("qv_t", 0.5)),
        "replicas": int(fcfg.get("qv_replicas", 200)),
    }
    first = next(iter(tf.values()))
    diag = fluct.martingale_qv_diagnostic(
        g, bs, first, qv_cfg["t"], rho, cfg.seed + 1, qv_cfg["replicas"], jobs=cfg.jobs
    )
    run.write_json(
        "summary.json",
        {
            "rho": rho,
            "chi": fluct.chi(rho),
            "decay_rates": rates,
            "martingale_qv": {
                "t": diag.t,
                "estimate": diag.estimate,
                "stderr": diag.stderr,
                "theory": diag.theory,
                "sigmas": diag.sigmas,
            },
        },
    )
    run.write_manifest()
    print(f"fluct diagnostics -> {run.path}")
    return 0


def cmd_oracle(cfg: ExperimentConfig) -> int:
    g = build(cfg.level)
    if g.n_vertices > sim.MASTER_EQUATION_CAP:
        raise CapacityError(
            f"oracle subcommand needs |V_N| <= {sim.MASTER_EQUATION_CAP}"
        )
    bs = cfg.boundary
    t = cfg.horizon
    prof = _profile_for_pde(cfg, g)
    run = RunDir(cfg, "oracle")

    p0 = sim.product_bernoulli(g, prof)
    pt = sim.master_equation_oracle(g, bs, p0, t)

    counts = np.zeros(1 << g.n_vertices)
    series = sim.run_replicas(
        g, bs, prof, cfg.seed, cfg.replicas, t, jobs=cfg.jobs
    )
    for s_ in series:
        mask = 0
        for x, v in enumerate(s_.final_config.occupation):
            mask |= int(v) << x
        counts[mask] += 1

    emp = counts / counts.sum()
    tv = 0.5 * float(np.abs(emp - pt).sum())
    chi2_stat, pvalue, dof = _chi2_pooled(counts, pt * cfg.replicas)

    payload = {
        "t": t,
        "replicas": cfg.replicas,
        "tv_empirical_vs_oracle": tv,
        "chi2": {"statistic": chi2_stat, "dof": dof, "p_value": pvalue},
    }
    if bs.is_equilibrium:
        pi = sim.stationary_distribution(g, bs)
        nu = sim.product_bernoulli(g, bs.rho_bar[0])
        payload["tv_stationary_vs_product"] = 0.5 * float(np.abs(pi - nu).sum())
    run.write_json("oracle.json", payload)
    fh, w = _csv_writer(run.file("state_probs.csv"))
    w.writerow(["state", "oracle", "empirical"])
    for state in range(emp.size):
        w.writerow([state, repr(float(pt[state])), repr(float(emp[state]))])
    fh.close()
    run.write_manifest()
    print(
        f"oracle: TV {tv:.4f}, chi2 p={pvalue:.4g} ({cfg.replicas} replicas) -> {run.path}"
    )
    return 0


def _chi2_pooled(observed: np.ndarray, expected: np.ndarray, min_expected: float = 5.0):
    """Chi-square statistic with small-expectation states pooled."""
    from scipy.stats import chi2 as chi2_dist

    order = np.argsort(-expected)
    obs_sorted = observed[order]
    exp_sorted = expected[order]
    keep = exp_sorted >= min_expected
    obs_bins = list(obs_sorted[keep])
    exp_bins = list(exp_sorted[keep])
    if (~keep).any():
        obs_bins.append(obs_sorted[~keep].sum())
        exp_bins.append(exp_sorted[~keep].sum())
    obs_arr = np.array(obs_bins)
    exp_arr = np.array(exp_bins)
    good = exp_arr > 0
    stat = float(((obs_arr[good] - exp_arr[good]) ** 2 / exp_arr[good]).sum())
    dof = int(good.sum() - 1)
    return stat, float(chi2_dist.sf(stat, dof)), dof


def cmd_validate(cfg: ExperimentConfig) -> int:
    problems = []
    bs = cfg.boundary
    print(f"level: {cfg.level}")
    if cfg.level > 12:
        problems.append("level exceeds construction cap 12")
    from .gasket import vertex_count

    n = vertex_count(cfg.level)
    print(f"|V_N| = {n}, |E_N| = {3 ** (cfg.level + 1)}")
    if n > spectral.DENSE_CAP:
        problems.append(
            f"|V_N| = {n} above dense spectral cap {spectral.DENSE_CAP}; spectrum/pde/fluct unavailable"
        )
    for i, (b, reg) in enumerate(zip(bs.b, bs.regimes)):
        print(
            f"corner a{i}: b = {b} -> {reg} regime"
            f" (lambda+ {bs.lambda_plus[i]:g}, lambda- {bs.lambda_minus[i]:g},"
            f" rho_bar {bs.rho_bar[i]:.6g})"
        )
    print(f"replicas: {cfg.replicas}, horizon: {cfg.horizon}, seed: {cfg.seed}")
    if problems:
        print("problems:")
        for p in problems:
            print(f"  - {p}")
    else:
        print("problems: none")
    return 0


# ---------------------------------------------------------------------------
# entry point


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gasket-hydro",
        description="Exclusion process, heat equations, and fluctuation "
        "diagnostics on Sierpinski gasket graphs",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    commands = {
        "graph": cmd_graph,
        "resistance": cmd_resistance,
        "spectrum": cmd_spectrum,
        "pde": cmd_pde,
        "simulate": cmd_simulate,
        "hydro-compare": cmd_hydro_compare,
        "fluct": cmd_fluct,
        "oracle": cmd_oracle,
        "validate": cmd_validate,
    }
    for name, fn in commands.items():
        p = sub.add_parser(name)
        p.set_defaults(func=fn)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--level", type=int, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--replicas", type=int, default=None)
        p.add_argument("--horizon", type=float, default=None)
        p.add_argument("--jobs", type=int, default=None)
        p.add_argument("--output", dest="output_dir", default=None)
        p.add_argument("--b", default=None, help='boundary exponent, e.g. 1, 2 or "5/3"')
        p.add_argument("--lambda-plus", dest="lambda_plus", type=float, default=None)
        p.add_argument("--lambda-minus", dest="lambda_minus", type=float, default=None)
        p.add_argument("--bc", default=None, choices=["regime", "dirichlet", "neumann", "robin"])
        p.add_argument("--grid-points", dest="grid_points", type=int, default=None)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    overrides = {
        "level": args.level,
        "seed": args.seed,
        "replicas": args.replicas,
        "horizon": args.horizon,
        "jobs": args.jobs,
        "output_dir": args.output_dir,
        "b": args.b,
        "lambda_plus": args.lambda_plus,
        "lambda_minus": args.lambda_minus,
        "bc": args.bc,
        "grid_points": args.grid_points,
    }
    try:
        cfg = load_config(args.config, overrides)
        return args.func(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return 3
    except GasketHydroError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
