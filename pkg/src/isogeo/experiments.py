"""Configured experiment runs: CSV outputs, plot data and a checksummed manifest."""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .bodies import KINDS, Body, is_small_diameter, make_body
from .errors import ConfigurationError
from .gaussref import clt_fraction
from .marginals import (
    averaged_tail,
    ball_averaged_tail_exact,
    ball_directional_tail_exact,
    classify_directions,
    classify_tails,
    gaussian_rate,
    geometric_grid,
    TailCurve,
)
from .orlicz import verify_representation
from .polytope import width_scaling_curve
from .sampling import SAMPLERS, StreamSpec, hit_and_run, sample_sphere, sample_uniform, write_batch

EXPERIMENTS = ("mean-width", "supergaussian", "subgaussian", "clt", "orlicz-verify", "classify", "sample")
MANIFEST = "manifest.json"

DEFAULTS = {
    "mean-width": {
        "body": {"kind": "cube", "n": 20},
        "budgets": {"trials": 32, "M": 2048},
        "grids": {"N_grid": [20, 80, 320, 1280, 5120]},
        "thresholds": {"band": 2.0, "slack": 3.0},
    },
    "supergaussian": {
        "body": {"kind": "ball", "n": 64},
        "budgets": {"samples": 200_000},
        "grids": {"t_range": [1.0, 4.0]},
        "thresholds": {"q_band": 4.0, "slack": 3.0},
    },
    "subgaussian": {
        "body": {"kind": "cube", "n": 64},
        "budgets": {"samples": 200_000},
        "grids": {"t_range": [1.0, 4.0]},
        "thresholds": {"cap": 2.0},
    },
    "clt": {
        "body": {"kind": "cube", "n": 100},
        "budgets": {"samples": 1_000_000, "directions": 20},
        "thresholds": {"epsilon": 0.2, "t_max": 1.2, "bins": 24, "min_fraction": 0.9},
    },
    "orlicz-verify": {
        "body": {"kind": "cube", "n": 20},
        "budgets": {"samples": 1_000_000, "directions": 1000},
        "grids": {"s_levels": [0.5, 1.0, 2.0]},
        "thresholds": {"slack": 3.0},
    },
    "classify": {
        "body": {"kind": "cube", "n": 32},
        "budgets": {"samples": 10_000, "directions": 256},
        "thresholds": {"r": 3.0, "slack": 3.0, "min_fraction": 0.95},
    },
    "sample": {
        "body": {"kind": "cube", "n": 10},
        "budgets": {"samples": 10_000},
        "thresholds": {"sampler": "direct"},
    },
}


@dataclass
class ExperimentConfig:
    experiment: str
    body: dict
    seed: int = 0
    budgets: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    output_dir: str = "isogeo-run"

    def to_dict(self) -> dict:
        return {
            "experiment": self.experiment,
            "seed": self.seed,
            "body": dict(self.body),
            "budgets": dict(self.budgets),
            "grids": {k: list(v) if isinstance(v, (list, tuple)) else v for k, v in self.grids.items()},
            "thresholds": dict(self.thresholds),
            "output_dir": str(self.output_dir),
        }

    def make_body(self) -> Body:
        return make_body(self.body.get("kind"), self.body.get("n"), self.body.get("p"))


def _merge(base: dict, update: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        elif value is not None:
            out[key] = value
    return out


def load_config(experiment: str, path=None, overrides: dict | None = None) -> ExperimentConfig:
    """Defaults for ``experiment``, then the YAML file, then ``overrides``."""
    if experiment not in EXPERIMENTS:
        raise ConfigurationError(f"unknown experiment {experiment!r}")
    data = copy.deepcopy(DEFAULTS[experiment])
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text()) or {}
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"malformed config {path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigurationError(f"config {path} must be a mapping")
        if loaded.get("experiment", experiment) != experiment:
            raise ConfigurationError(f"config is for {loaded['experiment']!r}, not {experiment!r}")
        loaded.pop("experiment", None)
        data = _merge(data, loaded)
    data = _merge(data, overrides or {})
    cfg = ExperimentConfig(experiment=experiment, **{k: v for k, v in data.items()
                                                      if k in ("body", "seed", "budgets", "grids",
                                                               "thresholds", "output_dir")})
    validate(cfg)
    return cfg


def _positive_int(cfg, name):
    value = cfg.budgets.get(name)
    if not isinstance(value, int) or isinstance(value, bool) or value < 1:
        raise ConfigurationError(f"budget {name} must be a positive integer, got {value!r}")
    return value


def t_grid_for(cfg: ExperimentConfig, body: Body) -> np.ndarray:
    """Explicit ``t_grid`` wins over ``t_range``; default is ``[1, n^(1/4)]``."""
    grids = cfg.grids
    if "t_grid" in grids:
        t = np.asarray(grids["t_grid"], dtype=float)
    elif "t_range" in grids:
        lo, hi = grids["t_range"]
        t = geometric_grid(float(lo), float(hi))
    else:
        t = geometric_grid(1.0, body.dim ** 0.25)
    if t.size == 0 or np.any(t <= 0) or np.any(np.diff(t) <= 0):
        raise ConfigurationError("t_grid must be positive and strictly increasing")
    return t


def validate(cfg: ExperimentConfig) -> None:
    """Check budgets and grids against the preconditions of the target operation."""
    if not isinstance(cfg.seed, int) or not 0 <= cfg.seed < 2**64:
        raise ConfigurationError("seed must be an unsigned 64-bit integer")
    if cfg.body.get("kind") not in KINDS:
        raise ConfigurationError(f"body kind must be one of {KINDS}")
    body = cfg.make_body()
    exp = cfg.experiment
    n = body.dim
    if exp == "mean-width":
        _positive_int(cfg, "trials")
        _positive_int(cfg, "M")
        grid = cfg.grids.get("N_grid") or []
        if not grid or any(int(N) != N or N < 3 for N in grid):
            raise ConfigurationError("N_grid must be integers >= 3")
        if not body.symmetric:
            raise ConfigurationError("mean-width requires an origin-symmetric body")
    elif exp in ("supergaussian", "subgaussian"):
        _positive_int(cfg, "samples")
        t = t_grid_for(cfg, body)
        if t[0] < 1.0:
            raise ConfigurationError("t_grid must start at t >= 1")
        if exp == "supergaussian" and t[-1] > math.sqrt(n) * (1 + 1e-12):
            raise ConfigurationError(f"supergaussian t_grid exceeds sqrt(n) = {math.sqrt(n):.6g}")
        if exp == "subgaussian":
            cap = float(cfg.thresholds.get("cap", 2.0))
            limit = math.sqrt(n) if is_small_diameter(body, cap) else n ** 0.25
            if t[-1] > limit * (1 + 1e-12):
                raise ConfigurationError(
                    f"subgaussian t_grid exceeds {limit:.6g} (n^(1/4), or sqrt(n) under small diameter)"
                )
    elif exp == "clt":
        _positive_int(cfg, "directions")
        if _positive_int(cfg, "samples") < 100_000:
            raise ConfigurationError("clt needs at least 1e5 samples")
        if float(cfg.thresholds.get("t_max", 0)) <= 0 or int(cfg.thresholds.get("bins", 0)) < 8:
            raise ConfigurationError("clt needs t_max > 0 and bins >= 8")
    elif exp == "orlicz-verify":
        _positive_int(cfg, "samples")
        _positive_int(cfg, "directions")
        levels = cfg.grids.get("s_levels") or []
        if not levels or any(float(s) <= 0 for s in levels):
            raise ConfigurationError("s_levels (in units of L_K) must be positive")
    elif exp == "classify":
        _positive_int(cfg, "samples")
        _positive_int(cfg, "directions")
        r = float(cfg.thresholds.get("r", 0))
        if r <= 0:
            raise ConfigurationError("r must be positive")
        t = t_grid_for(cfg, body)
        if t[0] < 1.0 or t[-1] > r * math.sqrt(n) * (1 + 1e-12):
            raise ConfigurationError(f"classify t_grid must lie in [1, r sqrt(n)] = [1, {r * math.sqrt(n):.6g}]")
    elif exp == "sample":
        _positive_int(cfg, "samples")
        if cfg.thresholds.get("sampler", "direct") not in SAMPLERS:
            raise ConfigurationError(f"sampler must be one of {SAMPLERS}")


@dataclass
class Assertion:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class RunResult:
    files: dict  # name -> bytes
    assertions: list
    summary: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(a.passed for a in self.assertions)


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def csv_bytes(header, rows) -> bytes:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(x) for x in row])
    return buf.getvalue().encode()


def plot_bytes(comment: str, rows) -> bytes:
    lines = [f"# {comment}"] + [" ".join(_fmt(x) for x in row) for row in rows]
    return ("\n".join(lines) + "\n").encode()


def _tail_files(curve: TailCurve, prefix: str = "tail") -> dict:
    return {
        f"{prefix}_curve.csv": csv_bytes(["t", "value", "se", "kind"], curve.rows()),
        f"{prefix}.dat": plot_bytes("t value se", ((t, v, se) for t, v, se, _ in curve.rows())),
    }


def _run_mean_width(cfg, body, stream) -> RunResult:
    slack = float(cfg.thresholds.get("slack", 3.0))
    band_cap = float(cfg.thresholds["band"])
    curve = width_scaling_curve(body, cfg.grids["N_grid"], cfg.budgets["trials"], cfg.budgets["M"], stream)
    files = {
        "width_curve.csv": csv_bytes(["N", "width", "width_se", "ratio"], curve.rows()),
        "width_ratio.dat": plot_bytes("N ratio ratio_se", (
            (N, ratio, se / (math.sqrt(math.log(N)) * body.lk)) for N, _, se, ratio in curve.rows())),
    }
    monotone = all(
        b.value >= a.value - slack * a.combined_se(b) for a, b in zip(curve.estimates, curve.estimates[1:])
    )
    assertions = [
        Assertion("ratio_band", curve.band <= band_cap,
                  f"max/min ratio = {curve.band:.6g} (limit {band_cap:g})"),
        Assertion("width_monotone", monotone, f"nondecreasing in N within {slack:g} SE"),
    ]
    summary = {"max_ratio": float(curve.ratios.max()), "min_ratio": float(curve.ratios.min()),
               "band": curve.band}
    return RunResult(files, assertions, summary)


def _rate_rows(fit):
    rows = [(t, q, "fit") for t, q in zip(fit.t_range, fit.q_values)]
    rows += [(t, "", "dropped_zero") for t in fit.dropped]
    return rows


def _run_tail(cfg, body, stream, supergaussian: bool) -> RunResult:
    t = t_grid_for(cfg, body)
    samples = sample_uniform(body, cfg.budgets["samples"], stream)
    curve = averaged_tail(body, t, samples)
    files = _tail_files(curve)
    assertions = []
    summary = {}
    if supergaussian:
        slack = float(cfg.thresholds.get("slack", 3.0))
        q_band = float(cfg.thresholds["q_band"])
        reference = curve
        if body.kind == "ball":
            exact = ball_averaged_tail_exact(body, t)
            reference = TailCurve(t, exact, np.zeros_like(exact), "sphere_averaged_exact")
            dev = np.abs(curve.values - exact)
            ok = bool(np.all(dev <= slack * curve.std_errors))
            assertions.append(Assertion("oracle_agreement", ok,
                                        f"max |F_hat - F_exact| / SE = {np.max(dev / curve.std_errors):.3g}"))
            files["tail_exact.dat"] = plot_bytes("t exact_value", zip(t, exact))
        fit = gaussian_rate(reference, drop_zeros=True)
        ratio = fit.q_max / fit.q_min if fit.q_min > 0 else math.inf
        assertions.append(Assertion("q_max_finite", math.isfinite(fit.q_max), f"q_max = {fit.q_max:.6g}"))
        assertions.append(Assertion("q_band", ratio <= q_band, f"q_max/q_min = {ratio:.6g} (limit {q_band:g})"))
        summary = {"q_min": fit.q_min, "q_max": fit.q_max}
    else:
        fit = gaussian_rate(curve, drop_zeros=True)
        assertions.append(Assertion("q_min_positive", fit.q_min > 0,
                                    f"q_min = {fit.q_min:.6g}; {fit.dropped.size} zero estimate(s) flagged"))
        summary = {"q_min": fit.q_min, "q_max": fit.q_max, "flagged_zeros": int(fit.dropped.size)}
    files["rate.csv"] = csv_bytes(["t", "q", "status"], _rate_rows(fit))
    return RunResult(files, assertions, summary)


def _run_clt(cfg, body, stream) -> RunResult:
    th = cfg.thresholds
    report = clt_fraction(body, cfg.budgets["directions"], float(th["epsilon"]), float(th["t_max"]),
                          cfg.budgets["samples"], stream, int(th["bins"]))
    files = {"clt_report.csv": csv_bytes(["direction_index", "sup_ratio", "pass"], report.rows())}
    need = float(th.get("min_fraction", 0.0))
    assertions = [Assertion("clt_fraction", report.passing_fraction >= need,
                            f"passing fraction = {report.passing_fraction:.4g} (need >= {need:g})")]
    return RunResult(files, assertions, {"passing_fraction": report.passing_fraction})


def _run_orlicz(cfg, body, stream) -> RunResult:
    slack = float(cfg.thresholds.get("slack", 3.0))
    x = sample_uniform(body, cfg.budgets["samples"], stream.child(0))
    thetas = sample_sphere(body.dim, cfg.budgets["directions"], stream.child(1))
    rows = []
    for factor in cfg.grids["s_levels"]:
        s = float(factor) * body.lk
        lhs, rhs = verify_representation(body, s, x, thetas)
        ok = abs(lhs.value - rhs.value) <= slack * lhs.combined_se(rhs)
        rows.append((s, lhs.value, lhs.std_error, rhs.value, rhs.std_error, ok))
    files = {"orlicz_report.csv": csv_bytes(["s", "lhs", "lhs_se", "rhs", "rhs_se", "pass"], rows)}
    assertions = [Assertion(f"representation_s={r[0]:.6g}", bool(r[5]),
                            f"|lhs-rhs| = {abs(r[1] - r[3]):.3g}, combined SE = {math.hypot(r[2], r[4]):.3g}")
                  for r in rows]
    return RunResult(files, assertions)


def _run_classify(cfg, body, stream) -> RunResult:
    th = cfg.thresholds
    t = t_grid_for(cfg, body)
    r = float(th["r"])
    dirs = sample_sphere(body.dim, cfg.budgets["directions"], stream.child(0))
    result = classify_directions(body, dirs, r, t, cfg.budgets["samples"], stream.child(1),
                                 float(th.get("slack", 3.0)))
    files = {"classification.csv": csv_bytes(
        ["direction_index", "subgaussian", "supergaussian", "worst_t"], result.rows())}
    need = float(th.get("min_fraction", 0.0))
    assertions = [Assertion("subgaussian_fraction", result.subgaussian_fraction >= need,
                            f"subgaussian fraction = {result.subgaussian_fraction:.4g} (need >= {need:g})")]
    if body.kind == "ball":
        # oracle verdict from the exact ball marginal
        exact = ball_directional_tail_exact(body, t)
        sub, sup, _, _ = classify_tails(exact[None, :], np.zeros((1, t.size)), t, r, body.dim, 0.0)
        same = (np.all(result.subgaussian == sub[0]) and np.all(result.supergaussian == sup[0]))
        assertions.append(Assertion("rotation_invariance", bool(same),
                                    f"oracle verdict subgaussian={bool(sub[0])}, supergaussian={bool(sup[0])}"))
    summary = {"subgaussian_fraction": result.subgaussian_fraction,
               "supergaussian_fraction": result.supergaussian_fraction}
    return RunResult(files, assertions, summary)


def _run_sample(cfg, body, stream) -> RunResult:
    count = cfg.budgets["samples"]
    if cfg.thresholds.get("sampler", "direct") == "hit_and_run":
        batch = hit_and_run(body, np.zeros(body.dim), count, stream,
                            cfg.thresholds.get("burn_in"), cfg.thresholds.get("thin"))
    else:
        batch = sample_uniform(body, count, stream)
    buf = io.BytesIO()
    write_batch(buf, batch)
    pts = batch.points
    means = pts.mean(axis=0)
    variances = pts.var(axis=0, ddof=1) if count > 1 else np.full(body.dim, math.nan)
    files = {
        "samples.bin": buf.getvalue(),
        "moments.csv": csv_bytes(["coordinate", "mean", "variance", "lk_squared"],
                                 ((i, m, v, body.lk ** 2) for i, (m, v) in enumerate(zip(means, variances)))),
    }
    inside = body.contains(pts)
    assertions = [Assertion("membership", bool(inside.all()), f"{int(inside.sum())}/{count} points inside")]
    return RunResult(files, assertions)


_RUNNERS = {
    "mean-width": _run_mean_width,
    "supergaussian": lambda c, b, s: _run_tail(c, b, s, True),
    "subgaussian": lambda c, b, s: _run_tail(c, b, s, False),
    "clt": _run_clt,
    "orlicz-verify": _run_orlicz,
    "classify": _run_classify,
    "sample": _run_sample,
}


def execute(cfg: ExperimentConfig) -> RunResult:
    validate(cfg)
    body = cfg.make_body()
    return _RUNNERS[cfg.experiment](cfg, body, StreamSpec(cfg.seed))


def run(cfg: ExperimentConfig) -> tuple[int, Path]:
    """Execute, write outputs and manifest; return (exit status, run dir)."""
    started = time.time()
    result = execute(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    checksums = {}
    for name, data in result.files.items():
        (out / name).write_bytes(data)
        checksums[name] = hashlib.sha256(data).hexdigest()
    manifest = {
        "toolkit": "isogeo",
        "version": __version__,
        "config": cfg.to_dict(),
        "body": cfg.make_body().descriptor(),
        "log_base": "natural",
        "started_at": datetime.fromtimestamp(started, timezone.utc).isoformat(),
        "wall_clock_seconds": round(time.time() - started, 3),
        "outputs": checksums,
        "summary": result.summary,
        "assertions": [{"name": a.name, "passed": a.passed, "detail": a.detail} for a in result.assertions],
        "status": "pass" if result.passed else "fail",
    }
    (out / MANIFEST).write_text(json.dumps(manifest, indent=2, default=float) + "\n")
    return (0 if result.passed else 1), out


def emit_report(run_dir) -> str:
    path = Path(run_dir) / MANIFEST
    if not path.is_file():
        raise ConfigurationError(f"no {MANIFEST} in {run_dir}")
    manifest = json.loads(path.read_text())
    cfg = manifest["config"]
    body = cfg["body"]
    lines = [
        f"experiment: {cfg['experiment']}  body: {body['kind']} n={body['n']}"
        + (f" p={body['p']}" if body.get("p") is not None else "")
        + f"  seed: {cfg['seed']}",
        f"status: {manifest['status'].upper()}  ({manifest['wall_clock_seconds']} s, isogeo {manifest['version']})",
    ]
    if manifest.get("summary"):
        lines.append("estimates:")
        for key, value in manifest["summary"].items():
            lines.append(f"  {key:<24} {value:.6g}" if isinstance(value, float) else f"  {key:<24} {value}")
    lines.append("assertions:")
    for a in manifest["assertions"]:
        lines.append(f"  [{'PASS' if a['passed'] else 'FAIL'}] {a['name']}: {a['detail']}")
    failed = [a["name"] for a in manifest["assertions"] if not a["passed"]]
    if failed:
        lines.append("failed criteria: " + ", ".join(failed))
    lines.append("outputs:")
    for name, digest in manifest["outputs"].items():
        lines.append(f"  {name}  sha256:{digest[:16]}")
    return "\n".join(lines)

