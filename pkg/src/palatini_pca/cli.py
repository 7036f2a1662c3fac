"""Config-driven batch front-end.

    palatini-pca <command> [config.yaml] [--set key=value ...] [--out PATH] [--format json|csv]

Commands: check, pca, evolve, gauge, multipliers, convergence.  Exit status is 0 on
success, 1 when a residual exceeds its tolerance (or a run does not stabilize),
2 for configuration errors and 3 for numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

log = logging.getLogger("palatini_pca")

SCHEMA_VERSION = "1.0"
EXIT_OK, EXIT_TOLERANCE, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3
COMMANDS = ("check", "pca", "evolve", "gauge", "multipliers", "convergence")
# sites * 112 coordinates beyond which the config is refused
MAX_SITES = 32**3 + 1
MAX_SITES_4D = 16**4


class ConfigError(ValueError):
    pass


class NumericalError(RuntimeError):
    pass


DEFAULT_TOLERANCES = {"residual": 1e-10, "hamiltonian": 1e-10, "closure": 1e-10, "kernel": 1e-10, "einstein": 1e-2}


@dataclass
class RunConfig:
    command: str
    grid: dict = field(default_factory=lambda: {"dims": [6, 6, 6], "h": 0.5})
    initial_data: dict = field(default_factory=lambda: {"builder": "minkowski", "params": {}})
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    output: dict = field(default_factory=lambda: {"path": None, "format": "json"})
    options: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, command: str, raw: dict | None) -> "RunConfig":
        raw = dict(raw or {})
        if command not in COMMANDS:
            raise ConfigError(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
        if raw.get("command", command) != command:
            raise ConfigError(f"config is for command {raw['command']!r}, not {command!r}")
        raw.pop("command", None)
        known = {"grid", "initial_data", "tolerances", "output", "options"}
        extra = set(raw) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        cfg = cls(command)
        cfg.grid = {**cfg.grid, **dict(raw.get("grid") or {})}
        cfg.initial_data = {**cfg.initial_data, **dict(raw.get("initial_data") or {})}
        cfg.tolerances = {**DEFAULT_TOLERANCES, **dict(raw.get("tolerances") or {})}
        cfg.output = {**cfg.output, **dict(raw.get("output") or {})}
        cfg.options = dict(raw.get("options") or {})
        cfg.validate()
        return cfg

    def validate(self) -> None:
        for k, v in self.tolerances.items():
            if not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"tolerance {k!r} must be a positive number, got {v!r}")
        if self.output.get("format", "json") not in ("json", "csv"):
            raise ConfigError("output.format must be 'json' or 'csv'")
        dims = self.grid.get("dims")
        if not isinstance(dims, (list, tuple)) or len(dims) not in (3, 4):
            raise ConfigError("grid.dims must be a list of 3 or 4 extents")
        n = int(np.prod(dims))
        if n > (MAX_SITES if len(dims) == 3 else MAX_SITES_4D):
            raise ConfigError(f"grid with {n} sites exceeds the memory budget")
        if not float(self.grid.get("h", 0)) > 0:
            raise ConfigError("grid.h must be positive")

    def make_grid(self):
        from .lattice import Grid

        try:
            return Grid(tuple(self.grid["dims"]), float(self.grid["h"]), self.grid.get("origin"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


@dataclass
class Report:
    command: str
    config: dict
    passed: bool = True
    tables: dict = field(default_factory=dict)
    values: dict = field(default_factory=dict)
    messages: list = field(default_factory=list)
    timing: dict = field(default_factory=dict)
    exit_code: int = EXIT_OK

    def as_dict(self) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "config": self.config,
            "passed": self.passed,
            "exit_code": self.exit_code,
            "values": self.values,
            "tables": self.tables,
            "messages": self.messages,
            "timing": self.timing,
        }
        _check_finite(out)
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True, default=_json_default)

    def to_csv(self) -> str:
        """All tables, one CSV block each, headed by ``# <table name>``."""
        buf = io.StringIO()
        for name, rows in self.tables.items():
            if not rows:
                continue
            buf.write(f"# {name}\n")
            keys = list(dict.fromkeys(k for r in rows for k in r))
            w = csv.DictWriter(buf, fieldnames=keys)
            w.writeheader()
            for r in rows:
                w.writerow({k: _plain(v) for k, v in r.items()})
        return buf.getvalue()


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def _plain(v):
    if isinstance(v, (list, tuple, np.ndarray)):
        return json.dumps(np.asarray(v).tolist())
    return v


def _check_finite(obj, path="report"):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _check_finite(v, f"{path}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _check_finite(v, f"{path}[{i}]")
    elif isinstance(obj, (float, np.floating)) and not math.isfinite(float(obj)):
        raise NumericalError(f"non-finite value at {path}")


def _state(cfg: RunConfig, grid):
    from .palatini import builders

    spec = cfg.initial_data
    name = spec.get("builder", "minkowski")
    params = dict(spec.get("params") or {})
    if "seed" in spec:
        params.setdefault("seed", spec["seed"])
    try:
        return builders.build(name, grid, **params)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"initial data {name!r}: {exc}") from exc


def _spacetime(cfg: RunConfig, grid):
    """4D analytic data: options.solution in {minkowski, schwarzschild, de-sitter, flat-wavy}."""
    from . import analytic

    name = cfg.options.get("solution", cfg.initial_data.get("builder", "minkowski"))
    params = dict(cfg.options.get("solution_params") or {})
    if name == "minkowski":
        return np.broadcast_to(np.eye(4), grid.dims + (4, 4)), np.zeros(grid.dims + (4, 4, 4)), True
    table = {
        "schwarzschild": analytic.schwarzschild_isotropic,
        "constant-curvature": analytic.de_sitter_flat,
        "de-sitter": analytic.de_sitter_flat,
        "flat-wavy": analytic.flat_wavy,
    }
    if name not in table:
        raise ConfigError(f"unknown 4D solution {name!r}; choose from minkowski, {', '.join(table)}")
    sol = table[name](**params)
    E, a = sol.sample(grid)
    return E, a, sol.vacuum


def _rows(d: dict, key="label") -> list[dict]:
    return [{key: k, **(v if isinstance(v, dict) else {"value": v})} for k, v in d.items()]


# -- commands ------------------------------------------------------------------------------


def cmd_check(cfg: RunConfig) -> Report:
    from .lattice import interior_mask
    from .palatini import dynamics, system

    rep = Report("check", _echo(cfg))
    grid = cfg.make_grid()
    tol = cfg.tolerances
    if grid.ndim == 4:
        E, a, vacuum = _spacetime(cfg, grid)
        torsion, einstein = dynamics.einstein_residual(E, a, grid)
        mask = interior_mask(grid) if cfg.options.get("interior", True) else np.ones(grid.dims, bool)
        res = {
            "torsion": _stats(np.asarray(torsion)[mask]),
            "einstein": _stats(np.asarray(einstein)[mask]),
        }
        rep.tables["residuals"] = _rows(res)
        if not vacuum:
            rep.messages.append("solution is not a vacuum solution; the Einstein residual is not expected to vanish")
        rep.passed = all(v["max"] <= tol["einstein"] for v in res.values())
        return rep
    x = _state(cfg, grid)
    res = {k: _stats(np.asarray(v)) for k, v in system.constraint_residuals(x).items()}
    rep.tables["residuals"] = _rows(res)
    rep.values["hamiltonian"] = float(system.extended_hamiltonian(x))
    rep.values["relative_hamiltonian"] = system.relative_hamiltonian(x)
    rep.passed = all(v["max"] <= tol["residual"] for v in res.values())
    return rep


def _stats(v: np.ndarray) -> dict:
    v = np.abs(np.asarray(v, dtype=float))
    if v.size == 0:
        return {"max": 0.0, "mean": 0.0, "norm": 0.0}
    return {"max": float(v.max()), "mean": float(v.mean()), "norm": float(np.sqrt(np.sum(v * v)))}


def cmd_pca(cfg: RunConfig) -> Report:
    from . import presymplectic as ps

    rep = Report("pca", _echo(cfg))
    which = cfg.options.get("system", "palatini")
    max_steps = int(cfg.options.get("max_steps", 4))
    expected = cfg.options.get("expect_steps")
    if which == "palatini":
        from .palatini import builders, state, system

        grid = cfg.make_grid()
        if grid.ndim != 3:
            raise ConfigError("the Palatini PCA runs on a 3D slice grid")
        seeds = cfg.options.get("probe_seeds", [1, 2])
        states = [builders.homogeneous_vacuum(grid, seed=int(s)) for s in seeds]
        probes = [np.asarray(state.pack(x)) for x in states]
        sysm = system.palatini_system(grid)
        expected = 2 if expected is None else expected
        rep.values["relative_hamiltonian"] = max(system.relative_hamiltonian(x) for x in states)
    elif which in ("toy-symplectic", "toy-degenerate"):
        sysm = ps.canonical_system(1) if which == "toy-symplectic" else ps.toy_degenerate()
        rng = np.random.default_rng(int(cfg.options.get("seed", 0)))
        if which == "toy-symplectic":
            probes = [rng.standard_normal(2) for _ in range(3)]
        else:
            # z on the zero set of g'(z) = -sin z
            probes = [np.array([*rng.standard_normal(2), np.pi * k]) for k in range(3)]
        expected = (1 if which == "toy-symplectic" else 2) if expected is None else expected
    else:
        raise ConfigError(f"unknown system {which!r}")
    try:
        res = ps.run_pca(sysm, probes, max_steps=max_steps, tol=cfg.tolerances["residual"])
    except ps.StabilizationError as exc:
        rep.passed = False
        rep.messages.append(str(exc))
        return rep
    rep.values["stabilized_at"] = res.steps
    rep.values["final_constraints"] = res.constraints.labels
    rep.tables["steps"] = [s.as_dict() for s in res.log]
    rep.messages.append(
        f"stabilized at step {res.steps}" + ("" if res.constraints.labels else ", no constraints")
    )
    rep.passed = res.steps == int(expected)
    if "relative_hamiltonian" in rep.values:
        rep.passed = rep.passed and rep.values["relative_hamiltonian"] <= cfg.tolerances["hamiltonian"]
    return rep


def cmd_evolve(cfg: RunConfig) -> Report:
    from .palatini import dynamics

    rep = Report("evolve", _echo(cfg))
    grid = cfg.make_grid()
    x = _state(cfg, grid)
    a0 = cfg.options.get("a0")
    bound = cfg.options.get("drift_bound")
    try:
        traj = dynamics.evolve(
            x,
            a0_gauge=None if a0 is None else np.asarray(a0, dtype=float),
            steps=int(cfg.options.get("steps", 10)),
            ds=float(cfg.options.get("ds", 0.01)),
            drift_bound=None if bound is None else float(bound),
            keep=False,
        )
    except dynamics.DriftError as exc:
        rep.passed = False
        rep.messages.append(str(exc))
        rep.values["failed_step"] = exc.step
        return rep
    rep.tables["drift"] = traj.drift_table()
    initial = {k: v[0] for k, v in traj.drift.items()}
    growth = {k: max(v) - initial[k] for k, v in traj.drift.items()}
    rep.values["drift_growth"] = growth
    rep.passed = all(g <= cfg.tolerances["residual"] for g in growth.values())
    return rep


def cmd_gauge(cfg: RunConfig) -> Report:
    from . import algebra
    from .palatini import builders, dynamics, generators, system

    rep = Report("gauge", _echo(cfg))
    grid = cfg.make_grid()
    x = _state(cfg, grid)
    seed = int(cfg.options.get("seed", cfg.initial_data.get("seed", 0)))
    pairs = int(cfg.options.get("pairs", 5))
    constant = bool(cfg.options.get("constant_parameters", False))
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(pairs):
        if constant:
            psi, phi = (algebra.from_components(rng.standard_normal(6)) for _ in range(2))
        else:
            psi, phi = (
                algebra.antisymmetrize(builders.smooth_field(grid, rng, (4, 4), 1)) for _ in range(2)
            )
        xi = generators.divergence_free(grid, seed=seed + 2 * i + 1)
        zeta = generators.divergence_free(grid, seed=seed + 2 * i + 2)
        rows.append(
            {
                "pair": i,
                "gauge": generators.gauge_commutator_residual(psi, phi, x),
                "diffeo": generators.diffeo_commutator_residual(xi, zeta, x),
                "diffeo_gauge_corrected": generators.diffeo_commutator_residual(xi, zeta, x, gauge_corrected=True),
            }
        )
    rep.tables["closure"] = rows
    worst = max(r["gauge"] for r in rows) if rows else 0.0
    rep.values["gauge_closure_max"] = worst
    rep.passed = worst <= cfg.tolerances["closure"]
    if cfg.options.get("kernel", False):
        J = system.constraint_jacobian(x)
        psi = algebra.antisymmetrize(builders.smooth_field(grid, rng, (4, 4), 1))
        xi = generators.divergence_free(grid, seed=seed)
        mem = {
            "gauge": system.kernel_membership(x, generators.lift_gauge(psi, x).vector, J),
            "diffeo": system.kernel_membership(x, generators.lift_diffeo(xi, x).vector, J),
            "evolution": system.kernel_membership(x, dynamics.evolution_vector(x), J),
        }
        rep.tables["kernel_membership"] = _rows(mem)
        rep.passed = rep.passed and all(v <= cfg.tolerances["kernel"] for v in mem.values())
    return rep


def cmd_multipliers(cfg: RunConfig) -> Report:
    from . import multipliers as mp

    rep = Report("multipliers", _echo(cfg))
    names = cfg.options.get("problems", list(mp.CATALOG))
    tol = cfg.tolerances.get("match", 1e-6)
    rows = []
    ok = True
    for entry in names:
        spec = entry if isinstance(entry, dict) else {"name": entry}
        try:
            p = mp.load_problem(spec)
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
        for ex in mp.brute_force_extrema(p, int(cfg.options.get("samples", 10_000))):
            try:
                sol = mp.solve_critical(p, mp.seed_from_n(p, ex.n + 1e-3))
            except mp.ConvergenceError as exc:
                rows.append({"problem": p.name, "kind": ex.kind, "error": str(exc)})
                ok = False
                continue
            err = float(np.linalg.norm(sol.m - ex.m))
            grad = max(float(np.max(np.abs(g))) for g in mp.extended_gradient(p, sol))
            rows.append(
                {"problem": p.name, "kind": ex.kind, "n": ex.n.tolist(), "m": sol.m.tolist(), "m_error": err, "gradient": grad}
            )
            ok = ok and err <= tol and grad <= cfg.tolerances.get("gradient", 1e-8)
    rep.tables["critical_points"] = rows
    rep.passed = ok
    return rep


def cmd_convergence(cfg: RunConfig) -> Report:
    from .lattice import Grid, interior_mask
    from .palatini import dynamics

    rep = Report("convergence", _echo(cfg))
    study = cfg.options.get("study", "einstein")
    levels = int(cfg.options.get("levels", 3))
    if study != "einstein":
        raise ConfigError(f"unknown convergence study {study!r}")
    base = cfg.make_grid()
    if base.ndim != 4:
        raise ConfigError("the Einstein convergence study needs a 4D base grid")
    rows = []
    g = base
    for lev in range(levels):
        if g.size > MAX_SITES_4D:
            raise ConfigError(f"refinement level {lev} exceeds the memory budget")
        E, a, _ = _spacetime(cfg, g)
        torsion, einstein = dynamics.einstein_residual(E, a, g)
        m = interior_mask(g)
        row = {"h": g.h, "torsion": float(np.max(np.abs(np.asarray(torsion)[m]))), "einstein": float(np.max(np.abs(np.asarray(einstein)[m])))}
        if rows:
            for k in ("torsion", "einstein"):
                row[f"{k}_order"] = float(np.log2(rows[-1][k] / row[k])) if row[k] > 0 else float("nan")
        rows.append(row)
        g = Grid(tuple(2 * n for n in g.dims), g.h / 2, g.origin)
    for r in rows:
        for k in list(r):
            if isinstance(r[k], float) and not math.isfinite(r[k]):
                r[k] = None
    rep.tables["convergence"] = rows
    orders = [r[k] for r in rows[1:] for k in ("torsion_order", "einstein_order") if r.get(k) is not None]
    lo, hi = cfg.options.get("order_range", [1.6, 2.4])
    rep.passed = bool(orders) and all(lo <= o <= hi for o in orders) and rows[-1]["einstein"] <= cfg.tolerances["einstein"]
    return rep


HANDLERS = {
    "check": cmd_check,
    "pca": cmd_pca,
    "evolve": cmd_evolve,
    "gauge": cmd_gauge,
    "multipliers": cmd_multipliers,
    "convergence": cmd_convergence,
}


def _echo(cfg: RunConfig) -> dict:
    return {
        "grid": cfg.grid,
        "initial_data": cfg.initial_data,
        "tolerances": cfg.tolerances,
        "options": cfg.options,
    }


def _apply_override(raw: dict, item: str) -> None:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, value = item.split("=", 1)
    node = raw
    parts = key.split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {key!r}: {p!r} is not a mapping")
    node[parts[-1]] = yaml.safe_load(value)


def run(command: str, raw: dict | None) -> Report:
    cfg = RunConfig.from_dict(command, raw)
    t0 = time.perf_counter()
    rep = HANDLERS[command](cfg)
    rep.timing["seconds"] = time.perf_counter() - t0
    rep.exit_code = EXIT_OK if rep.passed else EXIT_TOLERANCE
    return rep


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="palatini-pca", description=__doc__.split("\n\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("config", nargs="?", help="YAML configuration file")
    ap.add_argument("--config", dest="config_opt", metavar="PATH", help="YAML configuration file (same as the positional)")
    ap.add_argument("--seed", type=int, help="seed for the initial data and random parameters")
    ap.add_argument("--tol", type=float, help="override every tolerance")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config entry (dotted key)")
    ap.add_argument("--out", help="report file, or a directory receiving <command>.<format>")
    ap.add_argument("--format", choices=("json", "csv"))
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        raw = {}
        if args.config and args.config_opt:
            raise ConfigError("give the config file either positionally or with --config, not both")
        config_path = args.config or args.config_opt
        if config_path:
            try:
                raw = yaml.safe_load(Path(config_path).read_text()) or {}
            except (OSError, yaml.YAMLError) as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
            if not isinstance(raw, dict):
                raise ConfigError("config must be a mapping")
        for item in args.set:
            _apply_override(raw, item)
        if args.seed is not None:
            raw.setdefault("initial_data", {}).setdefault("params", {})
            if raw["initial_data"].get("builder", "minkowski") in ("random-smooth", "homogeneous-vacuum"):
                raw["initial_data"]["params"]["seed"] = args.seed
            raw.setdefault("options", {})["seed"] = args.seed
        if args.tol is not None:
            raw["tolerances"] = {k: args.tol for k in {**DEFAULT_TOLERANCES, **(raw.get("tolerances") or {})}}
        if args.format:
            raw.setdefault("output", {})["format"] = args.format
        if args.out:
            out = Path(args.out)
            if out.is_dir() or args.out.endswith(("/", "\\")):
                out.mkdir(parents=True, exist_ok=True)
                fmt = (raw.get("output") or {}).get("format", "json")
                out = out / f"{args.command}.{fmt}"
            raw.setdefault("output", {})["path"] = str(out)
        rep = run(args.command, raw)
        cfg_out = {**RunConfig.from_dict(args.command, raw).output}
        text = rep.to_csv() if cfg_out.get("format") == "csv" else rep.to_json()
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        # singular tetrads and similar domain errors from the numerical layer
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if cfg_out.get("path"):
        Path(cfg_out["path"]).write_text(text)
    else:
        print(text)
    return rep.exit_code


if __name__ == "__main__":
    sys.exit(main())
