"""Config-driven command line front end.

Config files are INI style with sections [model], [scenario], [sweep],
[output] and, for the experiment command, [experiment]:

    [model]
    lam = 1
    eta = 0.25

    [scenario]
    interaction = PD
    component = x

    [sweep]
    lam = 0.5, 1, 2

Exit codes: 0 success, 1 invalid input, 2 runtime failure.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from enum import Enum
import argparse
import configparser
import itertools
import json
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .experiment_model import fit_lambda_squared, samples_to_csv, synthesize_experiment
from .hybrid_solver import Interaction, Scenario, Trajectory, solve
from .noiseless_lindblad import ZERO_TEMPERATURE, ModelParams, measurement_duration
from .qubit_algebra import Basis, make_density
from .splitting_solver import MAX_STEPS, Strategy, splitting_trajectory

SWEEP_LIMIT = 10_000
SWEEP_AXES = ("lam", "eta", "omega0", "temperature")
CSV_HEADER = ("t", "rho11", "re_rho12", "im_rho12", "abs_rho12", "basis", "solver")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class ParseError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ValidationError(ValueError):
    def __init__(self, field_name, message=""):
        self.field = field_name
        super().__init__(f"{field_name}: {message}" if message else field_name)


class UnsupportedScenario(ValidationError):
    pass


class RunError(RuntimeError):
    pass


class SolverChoice(Enum):
    HYBRID = "hybrid"
    SPLITTING = "splitting"
    BOTH = "both"


@dataclass(frozen=True)
class ExperimentConfig:
    theta: float = math.pi / 2
    tau_min: float = 0.02
    tau_max: float = 1.0
    n_tau: int = 50
    shots: int = 10_000
    seed: int = 0


@dataclass(frozen=True)
class RunConfig:
    interaction: Interaction = None
    component: Basis = None
    lam: float = 0.0
    eta: float = 0.0
    omega0: float = 0.0
    omega_c: float = 1.0
    temperature: float = 0.0
    rho11: float = None
    rho12: complex = None
    t_final: float = 10.0
    n_steps: int = 2000
    solver: SolverChoice = SolverChoice.HYBRID
    splitting_steps: int = 16
    f: float = None
    sweep: tuple = ()
    output_path: str = "."
    prefix: str = "run"
    workers: int = 1
    experiment: ExperimentConfig = None

    def initial_state(self):
        """The configured rho0, or the documented default for the scenario."""
        if self.rho11 is not None:
            return make_density(self.rho11, self.rho12 or 0.0)
        if self.interaction is Interaction.AMPLITUDE_DAMPING or self.interaction is None:
            return make_density(1.0, 0.0)
        return make_density(0.5, 0.5)

    def points(self):
        """Parameter points of the sweep, last axis varying fastest."""
        axes = dict(self.sweep)
        names = [a for a in SWEEP_AXES if a in axes]
        out = []
        for combo in itertools.product(*(axes[a] for a in names)):
            out.append(replace(self, sweep=(), **dict(zip(names, combo))))
        return out

    def model_params(self) -> ModelParams:
        beta = ZERO_TEMPERATURE if self.temperature == 0 else 1.0 / self.temperature
        return ModelParams(self.lam, self.eta, self.omega0, self.omega_c, beta)

    def serialize(self) -> str:
        lines = ["[model]"]
        for k in ("lam", "eta", "omega0", "omega_c", "temperature"):
            lines.append(f"{k} = {getattr(self, k)!r}")
        lines.append("")
        lines.append("[scenario]")
        if self.interaction is not None:
            lines.append(f"interaction = {self.interaction.value}")
        if self.component is not None:
            lines.append(f"component = {self.component.value}")
        if self.rho11 is not None:
            lines.append(f"rho11 = {self.rho11!r}")
        if self.rho12 is not None:
            lines.append(f"rho12_re = {self.rho12.real!r}")
            lines.append(f"rho12_im = {self.rho12.imag!r}")
        lines.append(f"t_final = {self.t_final!r}")
        lines.append(f"n_steps = {self.n_steps}")
        lines.append(f"solver = {self.solver.value}")
        lines.append(f"splitting_steps = {self.splitting_steps}")
        if self.f is not None:
            lines.append(f"f = {self.f!r}")
        if self.sweep:
            lines += ["", "[sweep]"]
            for axis, values in self.sweep:
                lines.append(f"{axis} = " + ", ".join(repr(v) for v in values))
        lines += ["", "[output]", f"path = {self.output_path}", f"prefix = {self.prefix}",
                  f"workers = {self.workers}"]
        if self.experiment is not None:
            lines += ["", "[experiment]"]
            for fl in fields(ExperimentConfig):
                lines.append(f"{fl.name} = {getattr(self.experiment, fl.name)!r}")
        return "\n".join(lines) + "\n"


_KEYS = {
    "model": {"lam", "eta", "omega0", "omega_c", "temperature"},
    "scenario": {"interaction", "component", "rho11", "rho12_re", "rho12_im", "t_final",
                 "n_steps", "solver", "splitting_steps", "f"},
    "sweep": set(SWEEP_AXES),
    "output": {"path", "prefix", "workers"},
    "experiment": {fl.name for fl in fields(ExperimentConfig)},
}


def _line_of(text, section, key=None):
    current = None
    for i, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
            if key is None and current == section:
                return i
        elif key is not None and current == section and "=" in s:
            if s.split("=", 1)[0].strip().lower() == key:
                return i
    return None


def _float(name, raw):
    try:
        v = float(raw)
    except ValueError:
        raise ValidationError(name, f"not a number: {raw!r}") from None
    if not math.isfinite(v):
        raise ValidationError(name, "must be finite")
    return v


def _int(name, raw):
    try:
        return int(raw)
    except ValueError:
        raise ValidationError(name, f"not an integer: {raw!r}") from None


def _enum(name, cls, raw):
    try:
        return cls(raw.strip())
    except ValueError:
        choices = ", ".join(m.value for m in cls)
        raise ValidationError(name, f"{raw!r} is not one of {choices}") from None


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        if line is None and getattr(exc, "errors", None):
            line = exc.errors[0][0]
        raise ParseError(exc.message.splitlines()[0], line) from None

    for section in cp.sections():
        if section not in _KEYS:
            raise ParseError(f"unknown section [{section}]", _line_of(text, section))
        for key in cp[section]:
            if key not in _KEYS[section]:
                raise ParseError(f"unknown key {key!r} in [{section}]", _line_of(text, section, key))

    kw = {}
    model = cp["model"] if cp.has_section("model") else {}
    for k in _KEYS["model"]:
        if k in model:
            kw[k] = _float(k, model[k])

    sc = cp["scenario"] if cp.has_section("scenario") else {}
    if "interaction" in sc:
        kw["interaction"] = _enum("interaction", Interaction, sc["interaction"])
    if "component" in sc:
        kw["component"] = _enum("component", Basis, sc["component"])
    for k in ("rho11", "t_final", "f"):
        if k in sc:
            kw[k] = _float(k, sc[k])
    if "rho12_re" in sc or "rho12_im" in sc:
        kw["rho12"] = complex(_float("rho12_re", sc.get("rho12_re", "0")),
                              _float("rho12_im", sc.get("rho12_im", "0")))
    for k in ("n_steps", "splitting_steps"):
        if k in sc:
            kw[k] = _int(k, sc[k])
    if "solver" in sc:
        kw["solver"] = _enum("solver", SolverChoice, sc["solver"])

    if cp.has_section("sweep"):
        sweep = []
        for axis in SWEEP_AXES:
            if axis in cp["sweep"]:
                raw = [v for v in cp["sweep"][axis].split(",") if v.strip()]
                if not raw:
                    raise ValidationError(axis, "empty sweep list")
                sweep.append((axis, tuple(_float(axis, v) for v in raw)))
        kw["sweep"] = tuple(sweep)

    if cp.has_section("output"):
        out = cp["output"]
        if "path" in out:
            kw["output_path"] = out["path"]
        if "prefix" in out:
            kw["prefix"] = out["prefix"]
        if "workers" in out:
            kw["workers"] = _int("workers", out["workers"])

    if cp.has_section("experiment"):
        ex = cp["experiment"]
        ekw = {}
        for fl in fields(ExperimentConfig):
            if fl.name in ex:
                conv = _int if fl.type is int else _float
                ekw[fl.name] = conv(fl.name, ex[fl.name])
        kw["experiment"] = ExperimentConfig(**ekw)

    config = RunConfig(**kw)
    validate(config)
    return config


def _check_model_point(c: RunConfig):
    for name in ("lam", "eta", "omega0", "temperature"):
        v = getattr(c, name)
        if not (math.isfinite(v) and v >= 0):
            raise ValidationError(name, "must be a finite non-negative number")
    if not (math.isfinite(c.omega_c) and c.omega_c > 0):
        raise ValidationError("omega_c", "must be positive")


def validate(c: RunConfig) -> RunConfig:
    n_points = 1
    for axis, values in c.sweep:
        if axis not in SWEEP_AXES:
            raise ValidationError(axis, "not a sweepable parameter")
        n_points *= len(values)
    if n_points > SWEEP_LIMIT:
        raise ValidationError("sweep", f"{n_points} runs exceed the limit of {SWEEP_LIMIT}")
    for point in c.points():
        _check_model_point(point)
    if not c.t_final > 0:
        raise ValidationError("t_final", "must be positive")
    if c.n_steps < 2:
        raise ValidationError("n_steps", "must be at least 2")
    if not 1 <= c.splitting_steps <= MAX_STEPS:
        raise ValidationError("splitting_steps", f"must lie in 1..{MAX_STEPS}")
    if c.f is not None and not 0 < c.f < 1:
        raise ValidationError("f", "must lie in (0, 1)")
    if c.workers < 1:
        raise ValidationError("workers", "must be at least 1")
    if c.rho11 is not None or c.rho12 is not None:
        try:
            make_density(c.rho11 if c.rho11 is not None else 1.0, c.rho12 or 0.0)
        except ValueError as exc:
            raise ValidationError("rho11" if c.rho12 is None else "rho12", str(exc)) from None
    if c.solver is not SolverChoice.HYBRID and not _splitting_covers(c):
        raise UnsupportedScenario("solver", "the splitting solver covers only PD with x measurement")
    if c.solver is not SolverChoice.HYBRID and c.n_steps % c.splitting_steps:
        raise ValidationError("n_steps", "must be a multiple of splitting_steps to share a grid")
    e = c.experiment
    if e is not None:
        if not 0 < e.tau_min < e.tau_max:
            raise ValidationError("tau_min", "need 0 < tau_min < tau_max")
        if e.n_tau < 2:
            raise ValidationError("n_tau", "need at least two exposure times")
        if e.shots < 1:
            raise ValidationError("shots", "must be positive")
    return c


def _splitting_covers(c: RunConfig) -> bool:
    return c.interaction is Interaction.PHASE_DAMPING and c.component is Basis.X


def _require_scenario(c: RunConfig):
    if c.interaction is None:
        raise ValidationError("interaction", "required for this command")
    if c.component is None:
        raise ValidationError("component", "required for this command")


# -- running ---------------------------------------------------------------


def _fmt(v) -> str:
    return "%.17g" % v


def trajectory_csv(tr: Trajectory) -> str:
    rows = [",".join(CSV_HEADER)]
    basis = tr.basis.value
    for t, r11, r12 in zip(tr.times, tr.rho11, tr.rho12):
        rows.append(",".join([_fmt(t), _fmt(r11), _fmt(r12.real), _fmt(r12.imag), _fmt(abs(r12)),
                              basis, tr.solver_id]))
    return "\n".join(rows) + "\n"


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def _metadata(point: RunConfig, index: int, tr: Trajectory, solver: str) -> str:
    rho0 = point.initial_state()
    d = tr.diagnostics
    meta = {
        "index": index,
        "solver": solver,
        "solver_id": tr.solver_id,
        "version": __version__,
        "interaction": point.interaction.value,
        "component": point.component.value,
        "params": {k: getattr(point, k) for k in ("lam", "eta", "omega0", "omega_c", "temperature")},
        "rho0": {"rho11": rho0.rho11, "rho12_re": rho0.rho12.real, "rho12_im": rho0.rho12.imag},
        "grid": {"t_final": point.t_final, "n_steps": point.n_steps,
                 "splitting_steps": point.splitting_steps},
        "samples": len(tr),
        "diagnostics": {
            "max_trace_error": _jsonable(d.max_trace_error),
            "max_hermiticity_error": _jsonable(d.max_hermiticity_error),
            "min_eigenvalue": _jsonable(d.min_eigenvalue),
            "warnings": list(d.warnings),
        },
    }
    if point.f is not None and point.lam > 0:
        meta["t_M"] = measurement_duration(point.lam, point.f)
    return json.dumps(meta, sort_keys=True, indent=2) + "\n"


def _solve_point(point: RunConfig, solver: SolverChoice) -> Trajectory:
    p = point.model_params()
    rho0 = point.initial_state()
    with warnings.catch_warnings():
        # Warnings are recorded in the trajectory diagnostics and the sidecar.
        warnings.simplefilter("ignore", RuntimeWarning)
        if solver is SolverChoice.HYBRID:
            return solve(Scenario(point.interaction, point.component, p, rho0,
                                  point.t_final, point.n_steps))
        n = point.splitting_steps
        return splitting_trajectory(p, rho0, point.t_final / n, n, Strategy.GRAY_CODE)


def _solvers(c: RunConfig):
    if c.solver is SolverChoice.BOTH:
        return [SolverChoice.HYBRID, SolverChoice.SPLITTING]
    return [c.solver]


def _run_one(args):
    index, point, solver = args
    try:
        tr = _solve_point(point, solver)
    except Exception as exc:
        raise RunError(f"run {index} (lam={point.lam:g}, eta={point.eta:g}, omega0={point.omega0:g}, "
                       f"T={point.temperature:g}, solver={solver.value}): {exc}") from exc
    return index, solver, tr


def _map(func, jobs, workers):
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(func, jobs))
    return [func(j) for j in jobs]


def run(config: RunConfig, out=sys.stdout) -> list:
    """Solve every sweep point and write one CSV plus sidecar per (run, solver)."""
    _require_scenario(config)
    outdir = Path(config.output_path)
    outdir.mkdir(parents=True, exist_ok=True)
    points = config.points()
    jobs = [(i, pt, s) for i, pt in enumerate(points) for s in _solvers(config)]
    written = []
    for index, solver, tr in _map(_run_one, jobs, config.workers):
        stem = outdir / f"{config.prefix}_{index:04d}_{solver.value}"
        csv_path = stem.with_suffix(".csv")
        csv_path.write_text(trajectory_csv(tr))
        stem.with_suffix(".json").write_text(_metadata(points[index], index, tr, solver.value))
        written.append(csv_path)
        if tr.diagnostics.warnings:
            print(f"run {index} {solver.value}: " + "; ".join(tr.diagnostics.warnings), file=sys.stderr)
    if config.f is not None:
        for lam in sorted({pt.lam for pt in points}):
            print(tm_report(lam, config.f), file=out)
    return written


def tm_report(lam: float, f: float) -> str:
    return f"t_M = {_fmt(measurement_duration(lam, f))} (lam={lam:g}, f={f:g})"


@dataclass(frozen=True)
class ComparisonRow:
    eta: float
    lam: float
    omega0: float
    temperature: float
    max_abs_rho12: float
    rms_abs_rho12: float
    max_abs_rho12_z: float
    rms_abs_rho12_z: float
    max_rho11: float
    rms_rho11: float

    def line(self) -> str:
        head = f"eta={self.eta:g} lam={self.lam:g} omega0={self.omega0:g} T={self.temperature:g}"
        tail = " ".join(f"{fl.name}={getattr(self, fl.name):.6e}" for fl in fields(self)[4:])
        return head + " " + tail


def compare_trajectories(hybrid: Trajectory, split: Trajectory, point: RunConfig) -> ComparisonRow:
    """Pointwise differences on the splitting grid (every stride-th hybrid sample)."""
    stride = point.n_steps // point.splitting_steps
    h = slice(0, None, stride)
    if not np.allclose(hybrid.times[h], split.times, rtol=0, atol=1e-12):
        raise RunError("hybrid and splitting grids do not coincide")

    def z12(tr, sl=slice(None)):
        b = tr.bloch[sl]
        return 0.5 * (b[:, 0] - 1j * b[:, 1])

    d12 = np.abs(np.abs(hybrid.rho12[h]) - np.abs(split.rho12))
    d12z = np.abs(np.abs(z12(hybrid, h)) - np.abs(z12(split)))
    d11 = np.abs(hybrid.rho11[h] - split.rho11)

    def rms(x):
        return float(np.sqrt(np.mean(x * x)))

    return ComparisonRow(point.eta, point.lam, point.omega0, point.temperature,
                         float(d12.max()), rms(d12), float(d12z.max()), rms(d12z),
                         float(d11.max()), rms(d11))


def compare(config: RunConfig, out=sys.stdout) -> list:
    """Hybrid versus splitting on PD with x measurement, one row per sweep point."""
    _require_scenario(config)
    if not _splitting_covers(config):
        raise UnsupportedScenario("solver", "comparison needs PD with x measurement")
    if config.n_steps % config.splitting_steps:
        raise ValidationError("n_steps", "must be a multiple of splitting_steps")
    points = config.points()
    jobs = [(i, pt, s) for i, pt in enumerate(points)
            for s in (SolverChoice.HYBRID, SolverChoice.SPLITTING)]
    results = {}
    for index, solver, tr in _map(_run_one, jobs, config.workers):
        results[(index, solver)] = tr
    rows = [compare_trajectories(results[(i, SolverChoice.HYBRID)],
                                 results[(i, SolverChoice.SPLITTING)], pt)
            for i, pt in enumerate(points)]
    rows.sort(key=lambda r: (r.eta, r.lam, r.omega0, r.temperature))
    text = "\n".join(r.line() for r in rows) + "\n"
    outdir = Path(config.output_path)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / f"{config.prefix}_compare.txt").write_text(text)
    out.write(text)
    return rows


def experiment(config: RunConfig, out=sys.stdout) -> list:
    """Synthetic weak-measurement data and the lam^2 fit, per swept lam."""
    ex = config.experiment or ExperimentConfig()
    outdir = Path(config.output_path)
    outdir.mkdir(parents=True, exist_ok=True)
    taus = np.linspace(ex.tau_min, ex.tau_max, ex.n_tau)
    rho0 = config.initial_state()
    results = []
    for index, pt in enumerate(config.points()):
        samples = synthesize_experiment(pt.lam, ex.theta, rho0, taus, ex.shots, ex.seed)
        lam2_hat, stderr = fit_lambda_squared(samples)
        stem = outdir / f"{config.prefix}_{index:04d}_experiment"
        stem.with_suffix(".csv").write_text(samples_to_csv(samples))
        meta = {"index": index, "version": __version__, "lam": pt.lam, "lam2_true": pt.lam ** 2,
                "lam2_hat": lam2_hat, "stderr": stderr, "experiment": ex.__dict__,
                "rho0": {"rho11": rho0.rho11, "rho12_re": rho0.rho12.real,
                         "rho12_im": rho0.rho12.imag}}
        stem.with_suffix(".json").write_text(json.dumps(meta, sort_keys=True, indent=2) + "\n")
        print(f"lam={pt.lam:g} lam2_hat={_fmt(lam2_hat)} stderr={_fmt(stderr)}", file=out)
        results.append((lam2_hat, stderr))
    return results


# -- entry point -----------------------------------------------------------


def _parser():
    ap = argparse.ArgumentParser(prog="noisymeas", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("run", "compare", "experiment"):
        sp = sub.add_parser(name)
        sp.add_argument("config", type=Path)
    tm = sub.add_parser("tm", help="measurement duration for a coherence fraction f")
    tm.add_argument("--lambda", dest="lam", type=float, required=True)
    tm.add_argument("--f", type=float, required=True)
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "tm":
            try:
                print(tm_report(args.lam, args.f))
            except ValueError as exc:
                raise ValidationError("f" if not 0 < args.f < 1 else "lambda", str(exc)) from None
            return EXIT_OK
        try:
            text = args.config.read_text()
        except OSError as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return EXIT_RUNTIME
        config = parse_config(text)
        {"run": run, "compare": compare, "experiment": experiment}[args.command](config)
        return EXIT_OK
    except (ParseError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
