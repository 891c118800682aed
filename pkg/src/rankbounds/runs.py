"""Experiment drivers: config validation, orchestration, and serialization.

Every command reads one JSON config, runs deterministically given its seed,
and writes three kinds of files to the output directory:

- result.json: the resolved config echo plus the machine-readable payload.
  Payload bytes depend only on (config, seed), never on worker count or
  wall-clock, so reruns are byte-identical.
- flat CSV series for plotting, one per table of the payload. Unbounded
  values appear as an empty numeric cell plus an "inf"/"-inf" marker in the
  companion flag column; numeric columns never carry raw infinities.
- run_meta.json: wall-clock, worker count, and library versions. This file
  is the only place runtime details live.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from numpy.random import SeedSequence

from . import __version__
from .confidence import ConfidenceSet, ParamGrid, beta_confidence_set, joint_confidence_set, project
from .data import CsvSchema, Sample, load_csv
from .inference import ALT_EPSILON, DEFAULT_EPSILON, TestEngine, TuningParams
from .population import (
    DgpSpec,
    Y_TILDE_BASELINE,
    compute_BI,
    compute_TBI,
    dgp_spec,
    normalized_log_transform,
    population_table,
    simulate_dgp,
)

COMMANDS = ("identify", "test", "confset", "joint", "montecarlo", "empirical")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


_CONFIG_KEYS = {
    "command", "out_dir", "data_path", "csv_schema", "dgp", "n",
    "replications", "base_seed", "tuning", "grid", "epsilons",
    "beta_points", "beta", "y_grid", "y_tilde", "t_range", "threads",
    "draws_per_point", "tolerance", "y_values", "t_values",
}


@dataclass
class RunConfig:
    """One experiment description, mirrored verbatim into the output echo."""

    command: str
    out_dir: str
    data_path: str | None = None
    csv_schema: dict | None = None
    dgp: dict | None = None
    n: int | None = None
    replications: int = 0
    base_seed: int = 0
    tuning: dict = field(default_factory=dict)
    grid: dict | None = None
    epsilons: list[float] | None = None
    beta_points: list[list[float]] | None = None
    beta: list[float] | None = None
    y_grid: list[float] | None = None
    y_tilde: float | None = None
    t_range: list[float] | None = None
    threads: int = 1
    draws_per_point: int | None = None
    tolerance: float | None = None
    y_values: list[float] | None = None
    t_values: list[float] | None = None

    @classmethod
    def from_dict(cls, raw: dict, command: str | None = None, out_dir: str | None = None) -> "RunConfig":
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
        unknown = set(raw) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = dict(raw)
        if command is not None:
            merged["command"] = command
        if out_dir is not None:
            merged["out_dir"] = out_dir
        if "command" not in merged:
            raise ConfigError("config needs a command (or pass one on the command line)")
        if merged["command"] not in COMMANDS:
            raise ConfigError(f"command must be one of {COMMANDS}, got {merged['command']!r}")
        if "out_dir" not in merged:
            raise ConfigError("config needs out_dir (or pass --out)")
        cfg = cls(**merged)
        cfg.validate()
        return cfg

    def validate(self):
        has_data = self.data_path is not None
        has_dgp = self.dgp is not None
        if self.command in ("test", "confset", "joint", "empirical", "montecarlo"):
            if has_data and has_dgp:
                raise ConfigError("give either data_path or dgp, not both")
        if self.command == "identify" and not has_dgp:
            raise ConfigError("identify needs a dgp block")
        if self.command == "montecarlo":
            if not has_dgp:
                raise ConfigError("montecarlo needs a dgp block")
            if self.replications < 1:
                raise ConfigError("montecarlo needs replications >= 1")
            if not self.beta_points:
                raise ConfigError("montecarlo needs beta_points")
            if not self.n:
                raise ConfigError("montecarlo needs a sample size n")
        if self.command == "empirical" and not has_data:
            raise ConfigError("empirical needs data_path")
        if has_data and not os.path.exists(self.data_path):
            raise ConfigError(f"data_path does not exist: {self.data_path}")
        if has_data and self.command != "identify" and self.csv_schema is None:
            raise ConfigError("data_path needs a csv_schema block")
        if self.command == "test" and self.beta is None:
            raise ConfigError("test needs a beta vector")
        if self.epsilons is not None:
            for e in self.epsilons:
                if not (isinstance(e, (int, float)) and e > 0):
                    raise ConfigError(f"epsilons must be positive numbers, got {e!r}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")

    # -- builders ----------------------------------------------------------

    def make_tuning(self) -> TuningParams:
        t = dict(self.tuning)
        t.setdefault("seed", self.base_seed)
        try:
            return TuningParams(**t)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad tuning block: {exc}") from exc

    def make_grid(self) -> ParamGrid:
        if self.grid is None:
            raise ConfigError(f"{self.command} needs a grid block")
        g = dict(self.grid)
        try:
            return ParamGrid(
                coord_ranges=tuple(tuple(r) for r in g.pop("coord_ranges")),
                sign1_values=tuple(g.pop("sign1_values", (-1, 1))),
                t_ranges=tuple(tuple(r) for r in g.pop("t_ranges", ())),
            )
        except KeyError as exc:
            raise ConfigError(f"grid block is missing {exc}") from exc
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad grid block: {exc}") from exc

    def make_dgp(self) -> DgpSpec:
        d = dict(self.dgp)
        seed = d.pop("seed", self.base_seed)
        try:
            if "model" in d and d["model"] in ("model1", "model2", "model3") and "x1_support" not in d:
                return dgp_spec(
                    d["model"], d.get("support"), seed=seed,
                    draws=d.get("draws", 20000),
                )
            if "model" in d and d["model"] in ("dgp1", "dgp2"):
                return dgp_spec(d["model"], seed=seed, draws=d.get("draws", 20000))
            d.pop("support", None)
            if "x1_support" in d and d["x1_support"] is not None:
                d["x1_support"] = tuple(d["x1_support"])
            if "x2_support" in d and d["x2_support"] is not None:
                d["x2_support"] = tuple(d["x2_support"])
            return DgpSpec(seed=seed, **d)
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"bad dgp block: {exc}") from exc

    def make_schema(self) -> CsvSchema:
        s = self.csv_schema
        try:
            return CsvSchema(
                duration=s["duration"],
                event=s["event"],
                continuous=tuple(s.get("continuous", ())),
                discrete=tuple(s.get("discrete", ())),
            )
        except (TypeError, KeyError) as exc:
            raise ConfigError(f"bad csv_schema block: {exc}") from exc

    def load_sample(self) -> Sample:
        return load_csv(self.data_path, self.make_schema())

    def get_sample(self) -> Sample:
        """The input sample: loaded from disk or simulated from the dgp block."""
        if self.data_path is not None:
            return self.load_sample()
        spec = self.make_dgp()
        if self.n is None:
            raise ConfigError("simulated input needs a sample size n")
        return simulate_dgp(spec, self.n, seed=self.base_seed)

    def echo(self) -> dict:
        """Config as written into result.json. Runtime-only knobs (threads,
        out_dir) stay out so payload bytes do not depend on them."""
        out = {
            "command": self.command,
            "base_seed": self.base_seed,
            "tuning": dict(self.tuning),
        }
        for key in ("data_path", "csv_schema", "dgp", "n", "replications",
                    "grid", "epsilons", "beta_points", "beta", "y_grid",
                    "y_tilde", "t_range", "draws_per_point", "tolerance",
                    "y_values", "t_values"):
            val = getattr(self, key)
            if val is not None and val != 0:
                out[key] = val
        return out


@dataclass
class ResultBundle:
    """Everything a run produced, ready to serialize."""

    config: dict
    command: str
    payload: dict
    tables: dict[str, tuple[list[str], list[list]]] = field(default_factory=dict)

    def result_json(self) -> str:
        doc = {"command": self.command, "config": self.config, "payload": self.payload}
        return json.dumps(doc, sort_keys=True, indent=2, allow_nan=False) + "\n"

    def table_csv(self, name: str) -> str:
        header, rows = self.tables[name]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(v) for v in row])
        return buf.getvalue()

    def write(self, out_dir: str, wall_clock: float, threads: int):
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "result.json"), "w") as fh:
            fh.write(self.result_json())
        for name in sorted(self.tables):
            with open(os.path.join(out_dir, f"{name}.csv"), "w") as fh:
                fh.write(self.table_csv(name))
        meta = {
            "wall_clock_seconds": wall_clock,
            "threads": threads,
            "versions": {"rankbounds": __version__, "numpy": np.__version__},
        }
        with open(os.path.join(out_dir, "run_meta.json"), "w") as fh:
            json.dump(meta, fh, sort_keys=True, indent=2)
            fh.write("\n")


def _csv_cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        # numpy scalars subclass float but repr themselves differently, so
        # always drop to the plain double first
        v = float(v)
        if math.isnan(v):
            return ""
        if math.isinf(v):
            raise ValueError("infinite value reached a numeric CSV column")
        return repr(v)
    if isinstance(v, (np.integer,)):
        return str(int(v))
    if isinstance(v, bool):
        return "true" if v else "false"
    return "" if v is None else str(v)


def _finite_or_none(v: float) -> float | None:
    return None if v is None or not math.isfinite(v) else float(v)


def _inf_flag(v: float) -> str:
    if v == math.inf:
        return "inf"
    if v == -math.inf:
        return "-inf"
    return ""


def _eps_tag(eps: float) -> str:
    return format(eps, "g").replace("-", "m").replace(".", "p")


def _projection_payload(cs: ConfidenceSet, n_coords: int) -> dict:
    return {
        "n_accepted": cs.n_accepted,
        "empty": cs.empty,
        "projections": [project(cs, c).as_dict() for c in range(n_coords)],
    }


def _confset_table(cs: ConfidenceSet, coord_names: list[str]) -> tuple[list[str], list[list]]:
    header = coord_names + ["statistic", "critical_value", "accepted"]
    rows = []
    for i in range(cs.points.shape[0]):
        rows.append(
            [*(float(v) for v in cs.points[i]),
             float(cs.statistics[i]), float(cs.critical_values[i]), bool(cs.accepted[i])]
        )
    return header, rows


# -- identify ----------------------------------------------------------------


def run_identify(config: RunConfig, dry_run: bool = False):
    spec = config.make_dgp()
    grid = config.make_grid() if config.grid else ParamGrid(
        coord_ranges=((0.0, 6.0, 0.01),), sign1_values=(1,)
    )
    beta2 = grid.coord_values(0)
    y_values = (np.asarray(config.y_values, dtype=float)
                if config.y_values else np.geomspace(0.1, 10.0, 41))
    t_values = (np.asarray(config.t_values, dtype=float)
                if config.t_values else np.arange(-10.0, 6.0 + 1e-9, 0.02))
    y_tilde = config.y_tilde if config.y_tilde is not None else Y_TILDE_BASELINE
    if dry_run:
        n_points = (len(spec.x1_support or ()) or 1) * len(spec.x2_support)
        return {
            "command": "identify",
            "beta2_grid": int(beta2.size),
            "support_points": n_points,
            "draws_per_point": config.draws_per_point or spec.draws,
        }
    table = population_table(spec, config.draws_per_point)
    bound = compute_BI(table, beta2, tolerance=config.tolerance,
                       sign1_values=grid.sign1_values)
    bound = compute_TBI(table, bound, y_values, t_values, y_tilde=y_tilde)
    interval = bound.beta2_interval
    payload = {
        "model": spec.model,
        "beta2_interval": list(interval) if interval else None,
        "uninformative": bound.uninformative,
        "tolerance": bound.tolerance,
        "y_tilde": y_tilde,
        "n_members": int(sum(int(m.sum()) for m in bound.membership.values())),
        "envelope": [
            {
                "y": float(y),
                "lower": _finite_or_none(float(lo)),
                "unbounded_below": bool(lo == -math.inf),
            }
            for y, lo in zip(bound.y_values, bound.envelope)
        ],
    }
    tables = {}
    member_rows = []
    for sign1 in bound.sign1_values:
        for b2, m in zip(bound.beta2_values, bound.membership[sign1]):
            member_rows.append([int(sign1), float(b2), bool(m)])
    tables["bi_membership"] = (["sign1", "beta2", "member"], member_rows)
    env_rows = []
    for y, lo in zip(bound.y_values, bound.envelope):
        finite = math.isfinite(lo)
        env_rows.append([
            float(y),
            float(lo) if finite else math.nan,
            "" if finite else "-inf",
            float(normalized_log_transform(y, y_tilde)),
        ])
    tables["tbi_envelope"] = (["y", "lower", "lower_flag", "reference_t"], env_rows)
    tmem_rows = []
    for iy, y in enumerate(bound.y_values):
        for it, t in enumerate(bound.t_values):
            tmem_rows.append([float(y), float(t), bool(bound.t_membership[iy, it])])
    tables["tbi_membership"] = (["y", "t", "member"], tmem_rows)
    return ResultBundle(config.echo(), "identify", payload, tables)


# -- single point test -------------------------------------------------------


def run_test(config: RunConfig, dry_run: bool = False):
    tuning = config.make_tuning()
    if dry_run:
        return {"command": "test", "beta": config.beta}
    sample = config.get_sample()
    engine = TestEngine(sample, tuning, y_tilde=config.y_tilde)
    eps_list = config.epsilons or [tuning.epsilon]
    y_grid = tuple(config.y_grid or ())
    t_vec = tuple(config.t_values or ())
    outcomes = engine.evaluate(
        np.asarray(config.beta, dtype=float),
        y_grid=y_grid, t_vector=t_vec, epsilons=eps_list,
    )
    payload = {
        "beta": [float(b) for b in config.beta],
        "outcomes": [
            {
                "epsilon": out.epsilon,
                "statistic": out.statistic,
                "critical_value": out.critical_value,
                "reject": out.reject,
                "n_active": out.diagnostics.get("n_active"),
                "n_selected": out.diagnostics.get("n_selected"),
            }
            for out in outcomes
        ],
        "n_instruments_kept": engine.n_kept,
    }
    return ResultBundle(config.echo(), "test", payload, {})


# -- confidence sets ---------------------------------------------------------


def _coord_names(grid: ParamGrid) -> list[str]:
    names = ["sign1"] + [f"coef{i + 1}" for i in range(grid.n_free)]
    names += [f"t{j + 1}" for j in range(grid.n_t)]
    return names


def run_confset(config: RunConfig, dry_run: bool = False):
    tuning = config.make_tuning()
    grid = config.make_grid()
    if dry_run:
        sample = config.get_sample()
        engine = TestEngine(sample, tuning)
        return {
            "command": "confset",
            "grid_size": grid.size,
            "instruments": engine.family.size,
            "instruments_kept": engine.n_kept,
        }
    sample = config.get_sample()
    engine = TestEngine(sample, tuning)
    eps_list = config.epsilons or [tuning.epsilon]
    sets = beta_confidence_set(sample, grid, tuning, engine=engine, epsilons=eps_list)
    n_coords = 1 + grid.n_free
    payload = {"grid_size": grid.size, "by_epsilon": {}}
    tables = {}
    for eps in eps_list:
        cs = sets[eps]
        payload["by_epsilon"][_eps_tag(eps)] = {
            "epsilon": eps, **_projection_payload(cs, n_coords),
        }
        tables[f"confset_points_eps_{_eps_tag(eps)}"] = _confset_table(cs, _coord_names(grid))
    return ResultBundle(config.echo(), "confset", payload, tables)


def run_joint(config: RunConfig, dry_run: bool = False):
    tuning = config.make_tuning()
    grid = config.make_grid()
    if config.t_range is None or len(config.t_range) != 3:
        raise ConfigError("joint needs t_range = [lo, hi, step]")
    if not config.y_grid:
        raise ConfigError("joint needs a nonempty y_grid")
    y_tilde = config.y_tilde
    if y_tilde is None:
        raise ConfigError("joint needs y_tilde")
    scan_grid = ParamGrid(
        coord_ranges=grid.coord_ranges,
        sign1_values=grid.sign1_values,
        t_ranges=(tuple(config.t_range),),
    )
    if dry_run:
        return {
            "command": "joint",
            "grid_size_per_y": scan_grid.size,
            "y_count": len(config.y_grid),
        }
    sample = config.get_sample()
    engine = TestEngine(sample, tuning, y_tilde=y_tilde)
    eps_list = config.epsilons or [tuning.epsilon]
    t_coord = 1 + scan_grid.n_free
    payload = {"y_tilde": y_tilde, "grid_size_per_y": scan_grid.size, "by_epsilon": {}}
    marg_rows = {eps: [] for eps in eps_list}
    for y in config.y_grid:
        sets = joint_confidence_set(
            sample, scan_grid, (float(y),), y_tilde, tuning,
            engine=engine, epsilons=eps_list,
        )
        for eps in eps_list:
            cs = sets[eps]
            proj = project(cs, t_coord)
            marg_rows[eps].append([
                float(y),
                float(proj.lower) if (not proj.empty and math.isfinite(proj.lower)) else math.nan,
                "" if (not proj.empty and math.isfinite(proj.lower)) else ("empty" if proj.empty else _inf_flag(proj.lower)),
                float(proj.upper) if (not proj.empty and math.isfinite(proj.upper)) else math.nan,
                "" if (not proj.empty and math.isfinite(proj.upper)) else ("empty" if proj.empty else _inf_flag(proj.upper)),
                cs.n_accepted,
            ])
    tables = {}
    for eps in eps_list:
        tag = _eps_tag(eps)
        payload["by_epsilon"][tag] = {
            "epsilon": eps,
            "marginals": [
                {
                    "y": row[0],
                    "t_lower": _finite_or_none(row[1]),
                    "t_lower_flag": row[2],
                    "t_upper": _finite_or_none(row[3]),
                    "t_upper_flag": row[4],
                    "n_accepted": row[5],
                }
                for row in marg_rows[eps]
            ],
        }
        tables[f"joint_marginals_eps_{tag}"] = (
            ["y", "t_lower", "t_lower_flag", "t_upper", "t_upper_flag", "n_accepted"],
            marg_rows[eps],
        )
    return ResultBundle(config.echo(), "joint", payload, tables)


# -- Monte Carlo -------------------------------------------------------------


def _mc_replication(args) -> tuple[int, list[list[bool]]]:
    """One replication: simulate, then test every requested point.

    Module-level so process pools can pickle it. Returns (rep index, matrix
    of reject flags indexed [point][epsilon]).
    """
    (rep_index, data_seed, test_seed, dgp_dict, n, tuning_dict, beta_points, eps_list) = args
    cfg = RunConfig(command="montecarlo", out_dir=".", dgp=dgp_dict,
                    base_seed=data_seed, n=n, replications=1,
                    beta_points=beta_points, tuning=tuning_dict)
    spec = cfg.make_dgp()
    sample = simulate_dgp(spec, n, seed=data_seed)
    tuning_kwargs = dict(tuning_dict)
    tuning_kwargs["seed"] = test_seed
    tuning = TuningParams(**tuning_kwargs)
    engine = TestEngine(sample, tuning)
    rejects = []
    for point in beta_points:
        outcomes = engine.evaluate(np.asarray(point, dtype=float), epsilons=eps_list)
        rejects.append([bool(out.reject) for out in outcomes])
    return rep_index, rejects


def run_montecarlo(config: RunConfig, dry_run: bool = False, threads: int | None = None):
    tuning = config.make_tuning()
    eps_list = [float(e) for e in (config.epsilons or [tuning.epsilon])]
    reps = config.replications
    points = [[float(v) for v in p] for p in config.beta_points]
    if dry_run:
        return {
            "command": "montecarlo",
            "replications": reps,
            "beta_points": len(points),
            "epsilons": eps_list,
            "tests_total": reps * len(points) * len(eps_list),
        }
    workers = threads if threads is not None else config.threads
    seeds = [
        SeedSequence([config.base_seed, r]).generate_state(2, dtype=np.uint64)
        for r in range(reps)
    ]
    tuning_dict = dict(config.tuning)
    tuning_dict.pop("seed", None)
    tasks = [
        (r, int(seeds[r][0]), int(seeds[r][1]), config.dgp, config.n,
         tuning_dict, points, eps_list)
        for r in range(reps)
    ]
    results: list = [None] * reps
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for rep_index, rejects in pool.map(_mc_replication, tasks):
                results[rep_index] = rejects
    else:
        for task in tasks:
            rep_index, rejects = _mc_replication(task)
            results[rep_index] = rejects
    # aggregate: reject counts per (point, epsilon)
    counts = np.zeros((len(points), len(eps_list)), dtype=np.int64)
    for rejects in results:
        counts += np.array(rejects, dtype=np.int64)
    payload_rows = []
    for ip, point in enumerate(points):
        for ie, eps in enumerate(eps_list):
            freq = counts[ip, ie] / reps
            payload_rows.append({
                "beta": point,
                "epsilon": eps,
                "replications": reps,
                "rejections": int(counts[ip, ie]),
                "frequency": freq,
                "mc_se": math.sqrt(freq * (1.0 - freq) / reps),
            })
    payload = {"rejection_frequencies": payload_rows}
    rep_rows = []
    for r in range(reps):
        for ip, point in enumerate(points):
            for ie, eps in enumerate(eps_list):
                rep_rows.append([
                    r, int(seeds[r][0]), int(seeds[r][1]),
                    " ".join(repr(v) for v in point), float(eps),
                    bool(results[r][ip][ie]),
                ])
    tables = {
        "mc_rejections": (
            ["rep", "data_seed", "test_seed", "beta", "epsilon", "reject"],
            rep_rows,
        ),
        "mc_summary": (
            ["beta", "epsilon", "replications", "rejections", "frequency", "mc_se"],
            [[" ".join(repr(v) for v in row["beta"]), row["epsilon"],
              row["replications"], row["rejections"], row["frequency"], row["mc_se"]]
             for row in payload_rows],
        ),
    }
    return ResultBundle(config.echo(), "montecarlo", payload, tables)


# -- empirical ---------------------------------------------------------------


def run_empirical(config: RunConfig, dry_run: bool = False):
    tuning = config.make_tuning()
    grid = config.make_grid() if config.grid else ParamGrid(
        coord_ranges=((0.0, 100.0, 0.1),), sign1_values=(1,)
    )
    eps_list = [float(e) for e in (config.epsilons or [ALT_EPSILON, DEFAULT_EPSILON])]
    if dry_run:
        sample = config.load_sample()
        engine = TestEngine(sample, tuning)
        return {
            "command": "empirical",
            "grid_size": grid.size,
            "n": sample.n,
            "instruments": engine.family.size,
            "instruments_kept": engine.n_kept,
        }
    sample = config.load_sample()
    y_tilde = config.y_tilde
    engine = TestEngine(sample, tuning, y_tilde=y_tilde)
    sets = beta_confidence_set(sample, grid, tuning, engine=engine, epsilons=eps_list)
    n_coords = 1 + grid.n_free
    payload = {
        "n": sample.n,
        "censoring": sample.censoring_summary(),
        "grid_size": grid.size,
        "by_epsilon": {},
    }
    tables = {}
    for eps in eps_list:
        cs = sets[eps]
        tag = _eps_tag(eps)
        payload["by_epsilon"][tag] = {
            "epsilon": eps, **_projection_payload(cs, n_coords),
        }
        tables[f"confset_points_eps_{tag}"] = _confset_table(cs, _coord_names(grid))
    if config.y_grid:
        joint_cfg = RunConfig(
            command="joint", out_dir=config.out_dir, data_path=config.data_path,
            csv_schema=config.csv_schema, tuning=config.tuning,
            base_seed=config.base_seed, grid=config.grid,
            epsilons=eps_list, y_grid=config.y_grid, y_tilde=y_tilde,
            t_range=config.t_range,
        )
        joint_bundle = run_joint(joint_cfg)
        payload["joint"] = joint_bundle.payload
        tables.update(joint_bundle.tables)
    return ResultBundle(config.echo(), "empirical", payload, tables)


_RUNNERS = {
    "identify": run_identify,
    "test": run_test,
    "confset": run_confset,
    "joint": run_joint,
    "montecarlo": run_montecarlo,
    "empirical": run_empirical,
}


def execute(config: RunConfig, dry_run: bool = False):
    """Dispatch one config; returns the bundle (or the dry-run summary)."""
    runner = _RUNNERS[config.command]
    start = time.perf_counter()
    if config.command == "montecarlo":
        result = runner(config, dry_run=dry_run, threads=config.threads)
    else:
        result = runner(config, dry_run=dry_run)
    if dry_run:
        return result
    wall = time.perf_counter() - start
    result.write(config.out_dir, wall_clock=wall, threads=config.threads)
    return result
