"""Window-growth consistency experiments.

A replicate draws a pattern from the true model on a window slightly larger
than ``[-n, n]^d`` (so the observed part is not shaped by the free boundary),
keeps the part inside ``[-n, n]^d`` and fits it. Seeds come from the master
seed and the (rung, replicate) index, so the outputs do not depend on the
order or the number of workers.
"""

from __future__ import annotations

import csv
import io
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import MODEL_KEYS, ConfigError, floats, model_from_keys, model_to_keys, number, parse_box
from .estimator import OptimizerConfig, hardcore_mle, mc_mle, pseudolikelihood_fit
from .geometry import Window
from .models import GibbsModel, Kind
from .partition import leg_seed
from .sampler import SamplerConfig, run_chain

ESTIMATORS = ("mle", "hardcore", "pseudolikelihood")


@dataclass(frozen=True)
class ExperimentSpec:
    model: GibbsModel
    ladder: tuple[float, ...] = (4.0, 8.0, 16.0)
    replicates: int = 20
    seed: int = 0
    dim: int = 2
    margin: float = 1.0
    sim_sweeps: int = 1000
    estimator: str = "mle"
    box: dict = field(default_factory=dict)
    delta_interval: tuple[float, float] | None = None
    fit_draws: int = 200
    fit_burnin: int = 50
    fit_thin: int = 3
    workers: int = 1

    def __post_init__(self):
        lad = tuple(float(v) for v in self.ladder)
        object.__setattr__(self, "ladder", lad)
        if not lad or any(v <= 0 for v in lad) or any(b <= a for a, b in zip(lad, lad[1:])):
            raise ConfigError("ladder must be positive and strictly increasing")
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {', '.join(ESTIMATORS)}")
        if self.margin < 0 or self.sim_sweeps < 1 or self.workers < 1:
            raise ConfigError("margin >= 0, sim_sweeps >= 1 and workers >= 1 required")

    @classmethod
    def from_keys(cls, kv: dict[str, str]) -> ExperimentSpec:
        model = model_from_keys({k: v for k, v in kv.items() if k in MODEL_KEYS})
        kw = {}
        ints = ("replicates", "seed", "dim", "sim_sweeps", "fit_draws", "fit_burnin",
                "fit_thin", "workers")
        box = {}
        for key, value in kv.items():
            if key in MODEL_KEYS:
                continue
            if key == "ladder":
                kw["ladder"] = tuple(floats(value))
            elif key in ints:
                kw[key] = int(number(value, key))
            elif key == "margin":
                kw[key] = number(value, key)
            elif key == "estimator":
                kw[key] = value.strip().lower()
            elif key == "delta_interval":
                lo, hi = value.split(":", 1)
                kw[key] = (number(lo, key), number(hi, key))
            elif key == "box":
                box.update(parse_box(value))
            elif key.startswith("box."):
                box.update(parse_box(f"{key[4:]}={value}"))
            else:
                raise ConfigError(f"unknown experiment key {key!r}")
        return cls(model, box=box, **kw)

    def to_keys(self) -> dict[str, str]:
        out = model_to_keys(self.model)
        out.update({
            "ladder": ",".join(f"{v:g}" for v in self.ladder),
            "replicates": str(self.replicates), "seed": str(self.seed), "dim": str(self.dim),
            "margin": repr(self.margin), "sim_sweeps": str(self.sim_sweeps),
            "estimator": self.estimator, "fit_draws": str(self.fit_draws),
            "fit_burnin": str(self.fit_burnin), "fit_thin": str(self.fit_thin),
        })
        if self.delta_interval:
            out["delta_interval"] = "{!r}:{!r}".format(*self.delta_interval)
        for k, (lo, hi) in sorted(self.box.items()):
            out[f"box.{k}"] = f"{lo!r}:{hi!r}"
        return out

    @property
    def parameters(self) -> tuple[str, ...]:
        if self.estimator == "hardcore":
            return ("delta",)
        return ("delta",) + self.model.param_names

    def truth(self) -> dict[str, float]:
        out = {"delta": self.model.params.delta}
        out.update(self.model.values())
        return {k: out[k] for k in self.parameters}


def simulate_observation(spec: ExperimentSpec, n: float, seed: int):
    """One pattern of the true model, observed on ``[-n, n]^d``."""
    big = Window.centered(n + spec.margin, spec.dim)
    cfg = SamplerConfig(sweeps=spec.sim_sweeps + 1, burn_in=spec.sim_sweeps, thin=1, seed=seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        s = run_chain(spec.model, big, cfg)
    w = Window.centered(n, spec.dim)
    return s.draws[-1].restrict(w), w


def fit_observation(spec: ExperimentSpec, data, w, seed: int) -> dict[str, float]:
    if spec.estimator == "hardcore":
        interval = spec.delta_interval or (0.0, 0.25 * float(np.min(w.sides)))
        return {"delta": hardcore_mle(data, interval).delta}
    kind = spec.model.kind
    template = spec.model if kind in (Kind.PIECEWISE, Kind.LENNARD_JONES) else kind
    ocfg = OptimizerConfig(box=dict(spec.box), delta_interval=spec.delta_interval,
                           draws=spec.fit_draws)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        if spec.estimator == "pseudolikelihood":
            fit = pseudolikelihood_fit(data, w, template, None, ocfg)
        else:
            scfg = SamplerConfig(burn_in=spec.fit_burnin, thin=spec.fit_thin, seed=seed)
            fit = mc_mle(data, w, template, ocfg, scfg)
    return fit.values()


def run_replicate(spec: ExperimentSpec, rung: int, rep: int) -> dict:
    n = spec.ladder[rung]
    seed = leg_seed(spec.seed, rung, rep)
    row = {"n": n, "replicate": rep, "seed": seed, "status": "ok", "n_points": 0}
    t0 = time.perf_counter()
    truth = spec.truth()
    try:
        data, w = simulate_observation(spec, n, leg_seed(seed, 0))
        row["n_points"] = len(data)
        est = fit_observation(spec, data, w, leg_seed(seed, 1))
        for k in spec.parameters:
            row[f"est_{k}"] = float(est[k])
        for k in spec.parameters:
            row[f"err_{k}"] = abs(float(est[k]) - truth[k])
    except Exception as err:  # recorded per replicate, aggregated later
        row["status"] = f"{type(err).__name__}: {err}".replace("\n", " ")
        for k in spec.parameters:
            row[f"est_{k}"] = math.nan
            row[f"err_{k}"] = math.nan
    row["_seconds"] = time.perf_counter() - t0
    return row


@dataclass
class ConsistencyReport:
    spec: ExperimentSpec
    rows: list[dict]
    seconds: float = 0.0

    def __post_init__(self):
        if len(self.rows) != len(self.spec.ladder) * self.spec.replicates:
            raise ValueError("report must have one row per (rung, replicate)")

    @property
    def columns(self) -> list[str]:
        p = self.spec.parameters
        return (["n", "replicate", "seed", "status", "n_points"]
                + [f"est_{k}" for k in p] + [f"err_{k}" for k in p])

    def rung_rows(self, n: float) -> list[dict]:
        return [r for r in self.rows if r["n"] == n]

    def summary(self) -> list[dict]:
        out = []
        for n in self.spec.ladder:
            rows = self.rung_rows(n)
            ok = [r for r in rows if r["status"] == "ok"]
            rec = {"n": n, "replicates": len(rows), "successes": len(ok)}
            for k in self.spec.parameters:
                e = np.array([r[f"err_{k}"] for r in ok], dtype=float)
                if len(e):
                    q25, med, q75 = np.percentile(e, [25, 50, 75])
                    rec.update({f"median_{k}": med, f"q25_{k}": q25, f"q75_{k}": q75,
                                f"mean_{k}": float(e.mean())})
                else:
                    rec.update({f"{s}_{k}": math.nan for s in ("median", "q25", "q75", "mean")})
            out.append(rec)
        return out

    def medians(self, param: str) -> list[float]:
        return [r[f"median_{param}"] for r in self.summary()]

    @property
    def failed_rungs(self) -> list[float]:
        return [s["n"] for s in self.summary() if s["successes"] < 0.5 * s["replicates"]]

    def rows_csv(self) -> str:
        return _csv(self.columns, self.rows)

    def summary_csv(self) -> str:
        rows = self.summary()
        return _csv(list(rows[0]), rows)

    def write(self, directory) -> dict[str, Path]:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        paths = {
            "replicates": out / "replicates.csv",
            "summary": out / "summary.csv",
            "plot": out / "errors.svg",
            "spec": out / "spec.txt",
            "runtime": out / "runtime.json",
        }
        paths["replicates"].write_text(self.rows_csv())
        paths["summary"].write_text(self.summary_csv())
        paths["plot"].write_text(svg_plot(self.summary(), self.spec.parameters))
        paths["spec"].write_text("".join(f"{k} = {v}\n" for k, v in self.spec.to_keys().items()))
        runtime = {"total_seconds": self.seconds,
                   "replicate_seconds": [r.get("_seconds", 0.0) for r in self.rows]}
        paths["runtime"].write_text(json.dumps(runtime, indent=1) + "\n")
        return paths


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _csv(columns: Sequence[str], rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(columns)
    for r in rows:
        wr.writerow([_fmt(r.get(c, "")) for c in columns])
    return buf.getvalue()


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k, v in r.items():
            try:
                r[k] = float(v)
            except ValueError:
                pass
    return rows


def run_consistency(spec: ExperimentSpec, progress=None) -> ConsistencyReport:
    t0 = time.perf_counter()
    tasks = [(i, rep) for i in range(len(spec.ladder)) for rep in range(spec.replicates)]
    if spec.workers > 1:
        with ProcessPoolExecutor(spec.workers) as pool:
            futures = [pool.submit(run_replicate, spec, i, rep) for i, rep in tasks]
            rows = [f.result() for f in futures]
    else:
        rows = []
        for i, rep in tasks:
            rows.append(run_replicate(spec, i, rep))
            if progress:
                progress(rows[-1])
    return ConsistencyReport(spec, rows, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# plot

_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def svg_plot(summary: Sequence[dict], params: Sequence[str] | None = None,
             width: int = 560, height: int = 380) -> str:
    """Median absolute error against window half-side, log-log axes."""
    if params is None:
        params = [k[7:] for k in summary[0] if k.startswith("median_")]
    ns = [float(s["n"]) for s in summary]
    series = []
    for p in params:
        pts = [(n, float(s[f"median_{p}"])) for n, s in zip(ns, summary)]
        pts = [(n, v) for n, v in pts if math.isfinite(v) and v > 0]
        if pts:
            series.append((p, pts))
    left, right, top, bottom = 64, 120, 24, 48
    pw, ph = width - left - right, height - top - bottom
    lx = [math.log10(n) for n in ns]
    x0, x1 = min(lx), max(lx)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    vals = [math.log10(v) for _, pts in series for _, v in pts] or [0.0]
    y0, y1 = math.floor(min(vals)), math.ceil(max(vals))
    if y1 == y0:
        y1 = y0 + 1

    def sx(n):
        return left + (math.log10(n) - x0) / (x1 - x0) * pw

    def sy(v):
        return top + (y1 - math.log10(v)) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>']
    for n in ns:
        x = sx(n)
        out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 5}" '
                   f'stroke="#444"/>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 18}" text-anchor="middle">{n:g}</text>')
    for e in range(y0, y1 + 1):
        y = sy(10.0**e)
        out.append(f'<line x1="{left - 5}" y1="{y:.2f}" x2="{left + pw}" y2="{y:.2f}" '
                   f'stroke="#ddd"/>')
        out.append(f'<text x="{left - 8}" y="{y + 4:.2f}" text-anchor="end">1e{e}</text>')
    out.append(f'<text x="{left + pw / 2:.2f}" y="{height - 10}" text-anchor="middle">'
               f'window half-side n</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {top + ph / 2:.2f})">median |error|</text>')
    for k, (p, pts) in enumerate(series):
        c = _COLOURS[k % len(_COLOURS)]
        path = " ".join(f"{sx(n):.2f},{sy(v):.2f}" for n, v in pts)
        out.append(f'<polyline points="{path}" fill="none" stroke="{c}" stroke-width="2"/>')
        for n, v in pts:
            out.append(f'<circle cx="{sx(n):.2f}" cy="{sy(v):.2f}" r="3" fill="{c}"/>')
        ly = top + 14 + 18 * k
        out.append(f'<line x1="{left + pw + 12}" y1="{ly - 4}" x2="{left + pw + 32}" '
                   f'y2="{ly - 4}" stroke="{c}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw + 38}" y="{ly}">{p}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_from_csv(summary_csv, svg_path) -> Path:
    """Regenerate the error plot from a summary CSV."""
    rows = read_csv(summary_csv)
    params = [k[7:] for k in rows[0] if k.startswith("median_")]
    svg_path = Path(svg_path)
    svg_path.write_text(svg_plot(rows, params))
    return svg_path
