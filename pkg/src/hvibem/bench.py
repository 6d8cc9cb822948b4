"""Configuration-driven benchmark runs, refinement studies and plot-data export."""

from __future__ import annotations

import configparser
import csv
import logging
import os
import tempfile
import time
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .bem import SteklovSystem, assemble_neumann_load, build_steklov, energy_norm
from .hvi import (DiscreteHVI, ResidualSystem, SolutionFields, build_problem, solution_fields,
                  write_solution_csv)
from .kernels import LameParameters, lame_from_engineering
from .mesh import SIDES, BoundaryMesh, ConfigurationError, Part, PartSpec, build_rectangle_boundary, refine_uniform
from .smoothing import AdhesionLaw, AdhesionParameters, build_benchmark_adhesion
from .solver import SolveReport, TrustRegionConfig, solve

log = logging.getLogger(__name__)

PLOT_HEADER = ["case", "t2", "x_mm", "u2_mm", "un_mm", "sigma_n_Nmm2"]


def default_config_path() -> Path:
    return Path(str(resources.files("hvibem") / "data" / "benchmark.ini"))


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())


@dataclass(frozen=True)
class RunConfig:
    """All inputs of a run; the defaults are the benchmark."""

    width: float = 100.0
    height: float = 10.0
    h: float | None = 2.5
    node_budget: int | None = None
    sides: tuple[tuple[str, str], ...] = (("bottom", "contact"), ("right", "neumann"),
                                          ("top", "neumann"), ("left", "dirichlet"))
    load_x: tuple[float, float] = (50.0, 100.0)
    E: float | None = 210000.0
    nu: float | None = 0.3
    lam: float | None = None
    mu: float | None = None
    loads: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0)
    eps: float = 0.1
    law_enabled: bool = True
    constraints_enabled: bool = True
    A: tuple[float, ...] = (0.5, 0.4375, 0.3125, 0.1875)
    t: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4)
    levels: int = 3
    study_load: float = 1.0
    solver: TrustRegionConfig = TrustRegionConfig()
    output: str = "results"

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ConfigurationError("width and height must be positive")
        if (self.h is None) == (self.node_budget is None):
            raise ConfigurationError("give exactly one of geometry.h and geometry.node_budget")
        if not self.eps > 0:
            raise ConfigurationError("law.eps must be positive")
        if self.levels < 1:
            raise ConfigurationError("study.levels must be at least 1")
        engineering = self.E is not None and self.nu is not None
        lame = self.lam is not None and self.mu is not None
        if engineering == lame:
            raise ConfigurationError("give either material E and nu or material lam and mu")
        if not 0 <= self.load_x[0] < self.load_x[1] <= self.width:
            raise ConfigurationError("loaded span must lie inside the top edge")
        if set(dict(self.sides)) != set(SIDES):
            raise ConfigurationError(f"geometry must assign a part to each of {SIDES}")
        if dict(self.sides)["top"] != "neumann":
            raise ConfigurationError("the loaded top edge must be a Neumann part")

    # derived objects
    def material(self) -> LameParameters:
        if self.lam is not None:
            return LameParameters.from_lame(self.lam, self.mu)
        return lame_from_engineering(self.E, self.nu)

    def part_spec(self) -> PartSpec:
        sides = {s: [(0.0, float("inf"), Part.parse(p))] for s, p in self.sides}
        # top runs from x = width to x = 0; make the loaded span end points mesh nodes
        cuts = sorted({self.width - x for x in self.load_x} - {0.0, self.width})
        edges = [0.0, *cuts, self.width]
        sides["top"] = [(a, b, Part.NEUMANN) for a, b in zip(edges[:-1], edges[1:])]
        return PartSpec(sides)

    def mesh(self) -> BoundaryMesh:
        return build_rectangle_boundary(self.width, self.height, h=self.h,
                                        node_budget=self.node_budget, parts=self.part_spec())

    def law(self) -> AdhesionLaw | None:
        if not self.law_enabled:
            return None
        return build_benchmark_adhesion(AdhesionParameters(tuple(self.A), tuple(self.t)), self.eps)

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **kw)


_SCHEMA = {
    "geometry": {"width", "height", "h", "node_budget", "bottom", "right", "top", "left"},
    "loads": {"t2", "x0", "x1"},
    "material": {"e", "nu", "lam", "mu"},
    "law": {"enabled", "constraints", "eps", "a", "t"},
    "solver": {"max_iterations", "merit_tol", "gradient_tol", "initial_radius"},
    "study": {"levels", "load"},
    "output": {"directory"},
}


def load_config(path: str | Path | None = None) -> RunConfig:
    """Read an INI file; missing keys keep their defaults, unknown keys are rejected."""
    cp = configparser.ConfigParser()
    path = Path(path) if path is not None else default_config_path()
    if not path.exists():
        raise ConfigurationError(f"config file {path} not found")
    cp.read(path, encoding="utf-8")
    for sec in cp.sections():
        if sec not in _SCHEMA:
            raise ConfigurationError(f"unknown config section [{sec}]")
        extra = set(cp[sec]) - _SCHEMA[sec]
        if extra:
            raise ConfigurationError(f"unknown keys in [{sec}]: {sorted(extra)}")

    base = RunConfig()
    kw: dict = {}

    def get(sec, key):
        return cp.get(sec, key, fallback=None) if cp.has_section(sec) else None

    def opt_float(sec, key):
        v = get(sec, key)
        return None if v is None or v.strip() == "" else float(v)

    for key in ("width", "height"):
        if (v := opt_float("geometry", key)) is not None:
            kw[key] = v
    h, budget = get("geometry", "h"), get("geometry", "node_budget")
    if h is not None or budget is not None:
        kw["h"] = float(h) if h and h.strip() else None
        kw["node_budget"] = int(budget) if budget and budget.strip() else None
    sides = dict(base.sides)
    for s in SIDES:
        if (v := get("geometry", s)) is not None:
            sides[s] = Part.parse(v.strip()).name.lower()
    kw["sides"] = tuple((s, sides[s]) for s in SIDES)
    x0, x1 = opt_float("loads", "x0"), opt_float("loads", "x1")
    kw["load_x"] = (base.load_x[0] if x0 is None else x0, base.load_x[1] if x1 is None else x1)

    if cp.has_section("material"):
        m = {k: opt_float("material", k) for k in ("e", "nu", "lam", "mu")}
        kw.update(E=m["e"], nu=m["nu"], lam=m["lam"], mu=m["mu"])
        if all(v is None for v in m.values()):
            kw.update(E=base.E, nu=base.nu)

    if cp.has_section("law"):
        sec = cp["law"]
        if "enabled" in sec:
            kw["law_enabled"] = sec.getboolean("enabled")
        if "constraints" in sec:
            kw["constraints_enabled"] = sec.getboolean("constraints")
        if "eps" in sec:
            kw["eps"] = sec.getfloat("eps")
        if "a" in sec:
            kw["A"] = _floats(sec["a"])
        if "t" in sec:
            kw["t"] = _floats(sec["t"])

    if (v := get("loads", "t2")) is not None:
        kw["loads"] = _floats(v)

    if cp.has_section("solver"):
        sec = cp["solver"]
        sk = {}
        if "max_iterations" in sec:
            sk["max_iterations"] = sec.getint("max_iterations")
        for k in ("merit_tol", "gradient_tol", "initial_radius"):
            if k in sec:
                sk[k] = sec.getfloat(k)
        kw["solver"] = TrustRegionConfig(**sk)

    if cp.has_section("study"):
        sec = cp["study"]
        if "levels" in sec:
            kw["levels"] = sec.getint("levels")
        if "load" in sec:
            kw["study_load"] = sec.getfloat("load")
    if (v := get("output", "directory")) is not None:
        kw["output"] = v.strip()
    try:
        return replace(base, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from exc


# ---------------------------------------------------------------------------
# runs


@dataclass
class CaseResult:
    case: int
    t2: float
    fields: SolutionFields
    report: SolveReport
    z: np.ndarray
    seconds: float

    @property
    def converged(self) -> bool:
        return self.report.converged


@dataclass
class BenchmarkResult:
    config: RunConfig
    mesh: BoundaryMesh
    steklov: SteklovSystem
    cases: list[CaseResult] = field(default_factory=list)
    files: list[Path] = field(default_factory=list)

    @property
    def all_converged(self) -> bool:
        return all(c.converged for c in self.cases)

    @property
    def unknowns(self) -> int:
        return self.steklov.n

    @property
    def multipliers(self) -> int:
        return len(self.cases[0].fields.multipliers) if self.cases else 0


def top_load(config: RunConfig, t2: float):
    """Traction field ``(0, t2)`` on top-edge elements inside the loaded span."""
    x0, x1 = config.load_x
    tol = 1e-9 * config.width

    def traction(mid):
        on = (np.abs(mid[:, 1] - config.height) <= tol) & (mid[:, 0] >= x0 - tol) & (mid[:, 0] <= x1 + tol)
        out = np.zeros((len(mid), 2))
        out[on, 1] = t2
        return out

    return traction


def build_case(config: RunConfig, steklov: SteklovSystem, t2: float) -> DiscreteHVI:
    g = assemble_neumann_load(steklov.mesh, top_load(config, t2))
    return build_problem(steklov, config.law(), g, constrained=config.constraints_enabled)


def solve_case(problem: DiscreteHVI, config: RunConfig) -> tuple[np.ndarray, SolveReport]:
    rs = ResidualSystem(problem)
    return solve(rs, rs.initial_point(), config.solver)


def run_cases(config: RunConfig, mesh: BoundaryMesh | None = None,
              loads: tuple[float, ...] | None = None) -> BenchmarkResult:
    mesh = mesh or config.mesh()
    steklov = build_steklov(mesh, config.material())
    result = BenchmarkResult(config, mesh, steklov)
    for k, t2 in enumerate(config.loads if loads is None else loads):
        t0 = time.perf_counter()
        prob = build_case(config, steklov, t2)
        z, rep = solve_case(prob, config)
        fields = solution_fields(prob, z, {"iterations": rep.iterations, "reason": rep.reason,
                                           "scaled_merit": rep.scaled_merit})
        case = CaseResult(k + 1, float(t2), fields, rep, z, time.perf_counter() - t0)
        if not case.converged:
            log.warning("case %d (t2=%g) not converged: %s after %d iterations",
                        case.case, t2, rep.reason, rep.iterations)
        result.cases.append(case)
    return result


def _atomic_write(path: Path, write) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)
    return path


def export_plot_data(result: BenchmarkResult, out: str | Path) -> list[Path]:
    """Per-case curve files plus a law-scatter file overlaid with the regularized law."""
    out = Path(out)
    files = []
    for c in result.cases:
        def write(tmp, c=c):
            with open(tmp, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(PLOT_HEADER)
                cd = c.fields.contact_displacement
                for k in np.argsort(c.fields.x[:, 0], kind="stable"):
                    w.writerow([c.case, f"{c.t2:.6g}", f"{c.fields.x[k, 0]:.6f}", f"{cd[k, 1]:.12e}",
                                f"{c.fields.u_n[k]:.12e}", f"{c.fields.sigma_n[k]:.12e}"])
        files.append(_atomic_write(out / f"curves_case{c.case}.csv", write))

    law = result.config.law()
    if law is not None and result.cases:
        def write_scatter(tmp):
            with open(tmp, "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["case", "un_mm", "minus_sigma_n_Nmm2", "S_x_Nmm2", "lambda"])
                for c in result.cases:
                    lam = c.fields.multipliers if len(c.fields.multipliers) else np.zeros(len(c.fields.u_n))
                    for k in np.argsort(c.fields.x[:, 0], kind="stable"):
                        un = c.fields.u_n[k]
                        w.writerow([c.case, f"{un:.12e}", f"{-c.fields.sigma_n[k]:.12e}",
                                    f"{float(law.S_x(un)):.12e}", f"{lam[k]:.12e}"])
        files.append(_atomic_write(out / "law_scatter.csv", write_scatter))
    return files


def write_summary(result: BenchmarkResult, out: str | Path) -> Path:
    def write(tmp):
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["case", "t2", "converged", "reason", "iterations", "scaled_merit",
                        "complementarity", "max_abs_u2_mm", "min_sigma_n", "max_sigma_n"])
            for c in result.cases:
                f = c.fields
                w.writerow([c.case, f"{c.t2:.6g}", int(c.converged), c.report.reason, c.report.iterations,
                            f"{c.report.scaled_merit:.3e}", f"{f.complementarity():.3e}",
                            f"{np.abs(f.contact_displacement[:, 1]).max():.9e}",
                            f"{f.sigma_n.min():.9e}", f"{f.sigma_n.max():.9e}"])
    return _atomic_write(Path(out) / "summary.csv", write)


def run_benchmark(config: RunConfig, out: str | Path | None = None) -> BenchmarkResult:
    """Solve every load case and write solution, curve, scatter and summary CSVs."""
    result = run_cases(config)
    out = Path(config.output if out is None else out)
    for c in result.cases:
        path = out / f"solution_case{c.case}.csv"
        result.files.append(_atomic_write(path, lambda tmp, c=c: write_solution_csv(tmp, c.fields)))
    result.files += export_plot_data(result, out)
    result.files.append(write_summary(result, out))
    return result


# ---------------------------------------------------------------------------
# refinement study


def prolong(coarse: BoundaryMesh, u_nodal: np.ndarray, levels: int) -> np.ndarray:
    """Nodal values on ``levels`` uniform bisections of ``coarse`` (exact for P1)."""
    mesh, vals = coarse, np.asarray(u_nodal, dtype=float)
    for _ in range(levels):
        mid = 0.5 * (vals[mesh.elements[:, 0]] + vals[mesh.elements[:, 1]])
        vals = np.vstack([vals, mid])
        mesh = refine_uniform(mesh)
    return vals


@dataclass
class StudyResult:
    h: np.ndarray
    errors: np.ndarray
    rates: np.ndarray
    fitted_rate: float
    converged: bool
    label: str
    reference_h: float

    @property
    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.errors) < 0))


def run_convergence_study(config: RunConfig, out: str | Path | None = None, label: str = "benchmark",
                          load: float | None = None) -> StudyResult:
    """Energy-norm self-convergence on ``levels`` nested meshes against one finer reference."""
    L = config.levels
    if L < 3:
        raise ConfigurationError("a convergence study needs at least 3 levels")
    t2 = config.study_load if load is None else load
    meshes = [config.mesh()]
    for _ in range(L):
        meshes.append(refine_uniform(meshes[-1]))
    sols, ok = [], True
    ref_system = None
    for lvl, mesh in enumerate(meshes):
        res = run_cases(config, mesh, loads=(t2,))
        case = res.cases[0]
        ok &= case.converged
        sols.append(case.fields.displacement)
        if lvl == L:
            ref_system = res.steklov
        if not case.converged:
            log.warning("level %d did not converge (%s)", lvl, case.report.reason)
            break
    hs = np.array([m.h for m in meshes[:L]])
    errors = np.full(L, np.nan)
    if ref_system is not None:
        ref = sols[L]
        free = ref_system.free_dofs
        for lvl in range(L):
            fine = prolong(meshes[lvl], sols[lvl], L - lvl)
            diff = (fine - ref).ravel()[free]
            errors[lvl] = energy_norm(ref_system, diff)
    with np.errstate(divide="ignore", invalid="ignore"):
        rates = np.log2(errors[:-1] / errors[1:])
        good = np.isfinite(errors) & (errors > 0)
        fitted = float(np.polyfit(np.log(hs[good]), np.log(errors[good]), 1)[0]) if good.sum() >= 2 else float("nan")
    study = StudyResult(hs, errors, rates, fitted, bool(ok and ref_system is not None), label,
                        float(meshes[-1].h))
    if out is not None:
        write_study_csv(study, Path(out) / f"convergence_{label}.csv")
    return study


def write_study_csv(study: StudyResult, path: Path) -> Path:
    def write(tmp):
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["level", "h_mm", "energy_error", "rate_to_next"])
            for k, (h, e) in enumerate(zip(study.h, study.errors)):
                r = study.rates[k] if k < len(study.rates) else float("nan")
                w.writerow([k, f"{h:.6f}", f"{e:.9e}", "" if not np.isfinite(r) else f"{r:.6f}"])
            w.writerow(["fitted", "", "", f"{study.fitted_rate:.6f}"])
    return _atomic_write(path, write)
