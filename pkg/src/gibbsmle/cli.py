"""Command-line front end: ``gibbsmle simulate | fit | consistency | validate``.

Exit codes: 0 success, 1 usage or configuration error, 2 infeasible data,
3 failed validation (or a consistency rung with too few successful fits).
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from dataclasses import asdict
from pathlib import Path

from .config import ConfigError, model_from_keys, parse_box, read_keyvalue
from .estimator import InfeasibleData, OptimizerConfig, mc_mle, pseudolikelihood_fit
from .experiment import ExperimentSpec, run_consistency
from .geometry import Window, read_pattern, write_pattern
from .models import GibbsModel, Kind, ModelError, UnsupportedDimension
from .partition import DegenerateOverlap
from .sampler import SamplerConfig, model_record, run_chain
from .validation import DEFAULT_MODELS, validate

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_FAILED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _kind(text: str) -> Kind:
    try:
        return Kind(text.strip().lower().replace("-", "_"))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"unknown kind {text!r} (one of {', '.join(k.value for k in Kind)})") from None


def _interval(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}") from None
    return lo, hi


def _pairs(text: str) -> dict[str, float]:
    out = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        name, _, value = item.partition("=")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected name=value, got {item!r}") from None
    return out


def _sampler(args, **kw) -> SamplerConfig:
    opts = {"seed": args.seed}
    if args.sweeps is not None:
        opts["sweeps"] = args.sweeps
    if args.burnin is not None:
        opts["burn_in"] = args.burnin
    if getattr(args, "thin", None) is not None:
        opts["thin"] = args.thin
    opts.update(kw)
    if "sweeps" in opts and "burn_in" not in opts:
        opts["burn_in"] = min(SamplerConfig.burn_in, opts["sweeps"])
    return SamplerConfig(**opts)


def _load_model(path) -> GibbsModel:
    return model_from_keys(read_keyvalue(path))


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    model = _load_model(args.model)
    w = Window.centered(args.window, args.dim)
    model.check_window(w)
    cfg = _sampler(args, thin=args.thin or 1)
    big = w.dilate(args.margin) if args.margin > 0 else w
    s = run_chain(model, big, cfg)
    if not s.draws:
        raise UsageError("no draws kept: sweeps must exceed burn-in by at least one thinning step")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    pattern = s.draws[-1].restrict(w)
    write_pattern(out / "pattern.csv", pattern)
    manifest = {"model": model_record(model), "window": list(w.bounds()),
                "simulation_window": list(big.bounds()), "sampler": asdict(cfg),
                "acceptance": s.acceptance, "n_points": len(pattern)}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    print(f"wrote {len(pattern)} points to {out / 'pattern.csv'}")
    return EXIT_OK


def cmd_fit(args) -> int:
    window = Window.centered(args.window, args.dim) if args.window else None
    data = read_pattern(args.data, window)
    w = data.window
    kind = _load_model(args.template) if args.template else args.kind
    if kind is None:
        raise UsageError("give --kind or --template")
    scfg = _sampler(args, burn_in=args.burnin if args.burnin is not None else 100)
    draws = args.draws
    if args.sweeps is not None:
        # reference sample length follows --sweeps when given
        draws = max(2, (args.sweeps - scfg.burn_in) // scfg.thin)
    ocfg = OptimizerConfig(
        box=parse_box(args.box) if args.box else {},
        fixed=args.fix or {},
        delta_interval=args.delta_interval,
        draws=draws,
        absolute_contrast=args.absolute,
        allow_infeasible=True,
    )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if args.method == "pseudolikelihood":
            fit = pseudolikelihood_fit(data, w, kind, args.resolution, ocfg)
        else:
            fit = mc_mle(data, w, kind, ocfg, scfg)
    for wmsg in caught:
        print(f"warning: {wmsg.message}", file=sys.stderr)
    if not fit.feasible:
        print("warning: the data violate every admissible hardcore distance; "
              f"delta clamped to {fit.delta_hat:g}", file=sys.stderr)
    out = Path(args.out)
    if out.suffix == "":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "fit.txt"
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
    fit.write(out)
    sys.stdout.write(fit.record())
    return EXIT_OK


def cmd_consistency(args) -> int:
    kv = read_keyvalue(args.spec)
    if args.seed is not None:
        kv["seed"] = str(args.seed)
    if args.workers is not None:
        kv["workers"] = str(args.workers)
    spec = ExperimentSpec.from_keys(kv)

    def progress(row):
        if not args.quiet:
            print(f"n={row['n']:g} replicate={row['replicate']} {row['status']}", file=sys.stderr)

    report = run_consistency(spec, progress)
    paths = report.write(args.out)
    for s in report.summary():
        meds = " ".join(f"{k}={s[f'median_{k}']:.4g}" for k in spec.parameters)
        print(f"n={s['n']:g} ok={s['successes']}/{s['replicates']} median |err|: {meds}")
    print(f"wrote {paths['summary']} and {paths['plot']}")
    if report.failed_rungs:
        print("rungs with fewer than half successful fits: "
              + ", ".join(f"{n:g}" for n in report.failed_rungs), file=sys.stderr)
        return EXIT_FAILED
    return EXIT_OK


def cmd_validate(args) -> int:
    model = _load_model(args.model) if args.model else DEFAULT_MODELS[args.kind]
    checks = validate(model, args.seed, negate_activity=args.negate_activity,
                      report=lambda c: print(c.line(), flush=True))
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_FAILED


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gibbsmle", description="Gibbs point process simulation and fitting.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def sampler_flags(sp, seed_default=0):
        sp.add_argument("--seed", type=int, default=seed_default)
        sp.add_argument("--sweeps", type=int)
        sp.add_argument("--burnin", type=int)
        sp.add_argument("--thin", type=int)

    sp = sub.add_parser("simulate", help="draw a pattern from a model file")
    sp.add_argument("--model", required=True, help="key = value model file")
    sp.add_argument("--window", type=float, required=True, help="half-side n of [-n, n]^d")
    sp.add_argument("--dim", type=int, default=2)
    sp.add_argument("--margin", type=float, default=0.0,
                    help="simulate on the window grown by this much, keep the inner part")
    sp.add_argument("--out", required=True, help="output directory")
    sampler_flags(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="fit a model to a pattern file")
    sp.add_argument("--data", required=True)
    sp.add_argument("--kind", type=_kind)
    sp.add_argument("--template", help="model file fixing breakpoints or exponents")
    sp.add_argument("--window", type=float, help="override the file's window by [-n, n]^d")
    sp.add_argument("--dim", type=int, default=2)
    sp.add_argument("--box", help="param=lo:hi,... search box")
    sp.add_argument("--fix", type=_pairs, help="param=value,... pinned parameters")
    sp.add_argument("--delta-interval", type=_interval, help="admissible hardcore lo:hi")
    sp.add_argument("--method", choices=("mle", "pseudolikelihood"), default="mle")
    sp.add_argument("--resolution", type=int, help="pseudolikelihood grid per side")
    sp.add_argument("--draws", type=int, default=200, help="reference draws per round")
    sp.add_argument("--absolute", action="store_true",
                    help="also estimate ln Z at the fit for an absolute contrast")
    sp.add_argument("--out", required=True, help="record file or directory")
    sampler_flags(sp)
    sp.set_defaults(func=cmd_fit)

    sp = sub.add_parser("consistency", help="window-growth experiment from a spec file")
    sp.add_argument("spec", help="key = value experiment spec")
    sp.add_argument("--out", required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--quiet", action="store_true")
    sp.set_defaults(func=cmd_consistency)

    sp = sub.add_parser("validate", help="sampler, partition-function and geometry checks")
    sp.add_argument("--kind", type=_kind, default=Kind.STRAUSS)
    sp.add_argument("--model", help="model file (overrides --kind defaults)")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--negate-activity", action="store_true",
                    help="negative control: sample with the sign of z flipped")
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleData as err:
        print(f"infeasible data: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (ConfigError, ModelError, UnsupportedDimension, UsageError, ValueError,
            OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateOverlap as err:
        print(f"estimation failed: {err}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
