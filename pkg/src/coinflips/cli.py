"""Command-line interface.

Exit codes: 0 success, 2 usage or validation error, 3 runtime or data error.
Every command that writes files also writes a run manifest next to them;
``coinflips replay MANIFEST`` re-runs it.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import shlex
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import (
    HiddenDependenceCircuit,
    empirical_kl,
    expected_energy_per_sample,
    sample_n,
)
from .devices import DeviceConfigError, load_device
from .evo import EvoConfig, FitnessWeights, evaluate_population, evolve, history_csv, result_document
from .harness import (
    OMEGA_NAMES,
    DEFAULT_SAMPLE_SIZES,
    SweepConfig,
    default_weight_grids,
    run_repeated_optimizations,
    run_sample_sweep,
    run_weight_sweep,
    runs_csv,
    weight_sweep_csv,
)
from .plot import HISTOGRAM_COLUMNS, PlotDataError, render_csv
from .prob import (
    DIE_TARGET,
    GENE_NAMES,
    PUBLISHED_PARAMS,
    CircuitParams,
    Distribution4,
    exact_outcome_distribution,
    kl_divergence,
    product_residual,
    solve_two_coins,
)
from .rng import EXP_SAMPLE, derive_seed, make_rng

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_RUNTIME = 3

OUTCOME_LABELS = ("HH", "HT", "TH", "TT")
# Targets typed as rounded decimals (0.1666667) are renormalized up to this slack.
TARGET_INPUT_TOL = 1e-6


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


# -- argument parsing ------------------------------------------------------------

def _number(text: str) -> float:
    return float(Fraction(text.strip()))


def parse_target(text: str) -> Distribution4:
    try:
        vals = [_number(x) for x in text.split(",")]
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"bad --target {text!r}: {exc}") from None
    if len(vals) != 4:
        raise UsageError(f"--target needs 4 comma-separated values, got {len(vals)}")
    if any(v < 0 or v > 1 for v in vals):
        raise UsageError(f"--target entries must lie in [0, 1]: {vals}")
    total = math.fsum(vals)
    if abs(total - 1.0) > TARGET_INPUT_TOL:
        raise UsageError(f"--target sums to {total}, not 1")
    return Distribution4(tuple(v / total for v in vals))


def parse_params(text: str) -> CircuitParams:
    """``w,p1,q1,p2,q2`` positionally or as ``name=value`` pairs."""
    items = [x.strip() for x in text.split(",") if x.strip()]
    try:
        if all("=" in x for x in items):
            named = dict(x.split("=", 1) for x in items)
            named = {k.strip(): _number(v) for k, v in named.items()}
            if set(named) != set(GENE_NAMES):
                raise UsageError(f"--params needs exactly {', '.join(GENE_NAMES)}")
            return CircuitParams(**named)
        if len(items) != 5:
            raise UsageError(f"--params needs 5 values (w,p1,q1,p2,q2), got {len(items)}")
        return CircuitParams.from_genes(_number(x) for x in items)
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"bad --params {text!r}: {exc}") from None


def _resolve_params(args) -> CircuitParams:
    if args.params and args.preset:
        raise UsageError("give either --params or --preset, not both")
    if args.params:
        return parse_params(args.params)
    return PUBLISHED_PARAMS[args.preset or args.device_name_default]


def _resolve_device(args):
    try:
        return load_device(args.device)
    except DeviceConfigError as exc:
        raise UsageError(str(exc)) from None


def _weights(args) -> FitnessWeights:
    try:
        return FitnessWeights(args.w1, args.w2, args.w3)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _evo_config(args, seed=None) -> EvoConfig:
    try:
        return EvoConfig(
            population_size=args.population, generations=args.generations,
            tournament_size=args.tournament_size, crossover_probability=args.crossover_prob,
            per_gene_mutation_rate=args.mutation_rate, mutation_sigma=args.sigma,
            elitism_count=args.elitism, seed=args.seed if seed is None else seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _common(p, out_required=True, out_help="output directory"):
    p.add_argument("--device", default="td", help="td, mtj_she, mtj_vcma, or a config path")
    p.add_argument("--target", default=None, help="a,b,c,d (fractions allowed); default 1/2,1/6,1/6,1/6")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=out_required, help=out_help)
    p.add_argument("--threads", type=int, default=1, help="worker cap; never changes results")


def _params_args(p):
    p.add_argument("--params", help="w,p1,q1,p2,q2 or w=..,p1=..,q1=..,p2=..,q2=..")
    p.add_argument("--preset", choices=sorted(PUBLISHED_PARAMS),
                   help="published optimized parameters for a device (default: the --device one)")


def _weight_args(p):
    p.add_argument("--w1", type=float, default=7500.0, help="KL weight")
    p.add_argument("--w2", type=float, default=0.005, help="fairness weight")
    p.add_argument("--w3", type=float, default=0.5, help="energy weight (per fJ)")


def _evo_args(p, generations=1000):
    p.add_argument("--population", type=int, default=100)
    p.add_argument("--generations", type=int, default=generations)
    p.add_argument("--tournament-size", type=int, default=2)
    p.add_argument("--crossover-prob", type=float, default=0.9)
    p.add_argument("--mutation-rate", type=float, default=0.2)
    p.add_argument("--sigma", type=float, default=0.001)
    p.add_argument("--elitism", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="coinflips", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"coinflips {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("evaluate", help="exact distribution, KL, fairness, energy and fitness")
    _common(p, out_required=False, out_help="also write the JSON report here")
    _params_args(p)
    _weight_args(p)
    p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("solve", help="solve the independent two-coin system for a target")
    _common(p, out_required=False, out_help="also write the JSON report here")
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--format", choices=("text", "json"), default="text")

    p = sub.add_parser("optimize", help="evolve circuit parameters")
    _common(p)
    _weight_args(p)
    _evo_args(p)

    p = sub.add_parser("sample", help="Monte Carlo histogram of a circuit")
    _common(p)
    _params_args(p)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--no-hidden-energy", action="store_true",
                   help="do not charge the selector coin's flips")

    p = sub.add_parser("sweep", help="KL and energy vs number of samples")
    _common(p)
    _params_args(p)
    p.add_argument("--sizes", default=",".join(map(str, DEFAULT_SAMPLE_SIZES)))
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--no-hidden-energy", action="store_true")

    p = sub.add_parser("weight-sweep", help="vary one objective weight at a time")
    _common(p)
    _weight_args(p)
    _evo_args(p)
    p.add_argument("--vary", default=",".join(OMEGA_NAMES), help="subset of omega1,omega2,omega3")
    p.add_argument("--points", type=int, default=7, help="log-spaced points per weight (x1/100..x100)")
    p.add_argument("--grid", action="append", default=[], metavar="omegaK=v1,v2,...",
                   help="explicit grid for one weight; overrides --points")
    p.add_argument("--reps", type=int, default=3)

    p = sub.add_parser("runs", help="repeated independent optimizations")
    _common(p)
    _weight_args(p)
    _evo_args(p)
    p.add_argument("--n-runs", type=int, default=20)

    p = sub.add_parser("plot", help="render a harness CSV as SVG")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True, help="SVG file to write")

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", help="output location (default: where the manifest lives)")
    return parser


# -- output helpers --------------------------------------------------------------

def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6g}"
    if isinstance(x, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    if isinstance(x, dict):
        return "{" + ", ".join(f"{k}: {_fmt(v)}" for k, v in x.items()) + "}"
    return str(x)


def _print_report(doc: dict, fmt: str) -> None:
    if fmt == "json":
        print(json.dumps(doc, indent=2))
    else:
        for key, value in doc.items():
            print(f"{key}: {_fmt(value)}")


def _dumps(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _manifest(command: str, argv: list, config: dict, seed, outputs: list) -> str:
    return _dumps({
        "tool": "coinflips",
        "version": __version__,
        "subcommand": command,
        "argv": argv,
        "seed": seed,
        "config": config,
        "outputs": outputs,
    })


def _strip_out(argv: list) -> list:
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
            continue
        if a == "--out":
            skip = True
            continue
        if a.startswith("--out="):
            continue
        out.append(a)
    return out


def _write_dir(out: str, files: dict, manifest: str) -> None:
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (d / name).write_text(text)
    (d / "manifest.json").write_text(manifest)


def _write_file(out: str, text: str, manifest: str) -> None:
    path = Path(out)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    Path(str(path) + ".manifest.json").write_text(manifest)


def _target(args) -> Distribution4:
    return DIE_TARGET if args.target is None else parse_target(args.target)


def _require_positive_target(target: Distribution4) -> None:
    if not target.is_strictly_positive():
        raise UsageError("target must have strictly positive entries for KL")


# -- commands ------------------------------------------------------------------

def cmd_evaluate(args, argv):
    params = _resolve_params(args)
    target = _target(args)
    _require_positive_target(target)
    device = _resolve_device(args)
    weights = _weights(args)
    terms = evaluate_population(params.as_array(), device, weights, target)
    doc = {
        "params": params.as_dict(),
        "device": device.name,
        "target": target.to_list(),
        "weights": {"omega1": weights.w1, "omega2": weights.w2, "omega3": weights.w3},
        "v": exact_outcome_distribution(params).to_list(),
        "kl_nats": float(terms.kl[0]),
        "fairness": float(terms.fairness[0]),
        "energy_fj": float(terms.energy[0]),
        "fitness": float(terms.total[0]),
    }
    _print_report(doc, args.format)
    if args.out:
        _write_file(args.out, _dumps(doc), _manifest(
            "evaluate", _strip_out(argv), {**doc, "device": device.to_dict()}, None,
            [Path(args.out).name]))


def cmd_solve(args, argv):
    target = _target(args)
    if not args.tol > 0:
        raise UsageError("--tol must be positive")
    pair = solve_two_coins(target, args.tol)
    residual = product_residual(target)
    doc = {"target": target.to_list(), "tol": args.tol}
    if pair is None:
        doc.update({"solvable": False,
                    "message": "no independent two-coin solution",
                    "condition": "|t0*t3 - t1*t2| <= tol",
                    "residual": residual})
    else:
        doc.update({"solvable": True, "p": pair.p, "q": pair.q, "residual": residual})
    _print_report(doc, args.format)
    if args.out:
        _write_file(args.out, _dumps(doc), _manifest(
            "solve", _strip_out(argv), doc, None, [Path(args.out).name]))


def cmd_optimize(args, argv):
    target = _target(args)
    _require_positive_target(target)
    device = _resolve_device(args)
    weights = _weights(args)
    config = _evo_config(args)
    result = evolve(config, device, weights, target)
    doc = result_document(result, device, weights, config, target)
    print(f"best exact KL {result.exact_kl:.6g} nats, energy {result.exact_energy:.6g} fJ, "
          f"fitness {result.best_fitness:.6g}")
    files = {"best.json": _dumps(doc), "history.csv": history_csv(result)}
    _write_dir(args.out, files, _manifest(
        "optimize", _strip_out(argv),
        {"device": device.to_dict(), "weights": doc["weights"], "evo": config.to_dict(),
         "target": target.to_list()}, args.seed, sorted(files)))


def histogram_csv(counts, exact, target) -> str:
    total = sum(counts)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(HISTOGRAM_COLUMNS)
    for i in range(4):
        writer.writerow([i, OUTCOME_LABELS[i], counts[i], repr(counts[i] / total),
                         repr(exact[i]), repr(target[i])])
    return buf.getvalue()


def cmd_sample(args, argv):
    params = _resolve_params(args)
    target = _target(args)
    _require_positive_target(target)
    device = _resolve_device(args)
    if args.n < 1:
        raise UsageError("--n must be at least 1")
    circuit = HiddenDependenceCircuit(params, device, not args.no_hidden_energy)
    seed = derive_seed(args.seed, EXP_SAMPLE, 0)
    emp = sample_n(circuit, args.n, make_rng(seed))
    exact = exact_outcome_distribution(params)
    freqs = emp.frequencies
    bands = [3.0 * math.sqrt(v * (1.0 - v) / args.n) for v in exact.probs]
    doc = {
        "params": params.as_dict(),
        "device": device.name,
        "n": args.n,
        "seed": args.seed,
        "substream_seed": seed,
        "count_hidden_energy": circuit.count_hidden_energy,
        "counts": list(emp.counts),
        "frequencies": list(freqs),
        "exact_v": exact.to_list(),
        "band_3sigma": bands,
        "within_3sigma": all(abs(f - v) <= b for f, v, b in zip(freqs, exact.probs, bands)),
        "target": target.to_list(),
        "empirical_kl_nats": empirical_kl(emp, target),
        "exact_kl_nats": kl_divergence(exact.probs, target.probs),
        "total_energy_fj": emp.total_energy,
        "expected_energy_fj": expected_energy_per_sample(circuit) * args.n,
    }
    for i in range(4):
        print(f"{i} ({OUTCOME_LABELS[i]}): {emp.counts[i]:6d}  freq {freqs[i]:.6g}  "
              f"exact {exact[i]:.6g}  target {target[i]:.6g}")
    print(f"empirical KL {doc['empirical_kl_nats']:.6g} nats, energy {emp.total_energy:.6g} fJ")
    files = {"sample.json": _dumps(doc),
             "histogram.csv": histogram_csv(emp.counts, exact.probs, target.probs)}
    _write_dir(args.out, files, _manifest(
        "sample", _strip_out(argv),
        {"device": device.to_dict(), "params": params.as_dict(), "n": args.n,
         "target": target.to_list(), "count_hidden_energy": circuit.count_hidden_energy},
        args.seed, sorted(files)))


def _parse_int_list(text: str, flag: str) -> tuple:
    try:
        return tuple(int(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"{flag} must be comma-separated integers: {text!r}") from None


def cmd_sweep(args, argv):
    params = _resolve_params(args)
    target = _target(args)
    _require_positive_target(target)
    device = _resolve_device(args)
    sizes = _parse_int_list(args.sizes, "--sizes")
    try:
        config = SweepConfig(device, params, target, sizes, args.trials, args.seed,
                             not args.no_hidden_energy)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    result = run_sample_sweep(config, threads=args.threads)
    for n, kl in result.mean_kl().items():
        print(f"n={n:5d}  mean KL {kl:.6g} nats  mean energy {result.mean_energy()[n]:.6g} fJ")
    files = {"sweep.csv": result.to_csv()}
    _write_dir(args.out, files, _manifest(
        "sweep", _strip_out(argv),
        {"device": device.to_dict(), "params": params.as_dict(), "target": target.to_list(),
         "sample_sizes": list(sizes), "trials_per_size": args.trials,
         "count_hidden_energy": config.count_hidden_energy}, args.seed, sorted(files)))


def cmd_weight_sweep(args, argv):
    target = _target(args)
    _require_positive_target(target)
    device = _resolve_device(args)
    base = _weights(args)
    config = _evo_config(args)
    vary = [v.strip() for v in args.vary.split(",") if v.strip()]
    if not vary or set(vary) - set(OMEGA_NAMES):
        raise UsageError(f"--vary must name some of {', '.join(OMEGA_NAMES)}")
    if args.points < 1:
        raise UsageError("--points must be at least 1")
    defaults = default_weight_grids(base, args.points)
    grids = {name: defaults[name] for name in vary}
    for spec in args.grid:
        name, _, values = spec.partition("=")
        if name not in OMEGA_NAMES or not values:
            raise UsageError(f"bad --grid {spec!r}")
        try:
            grids[name] = [_number(v) for v in values.split(",")]
        except (ValueError, ZeroDivisionError):
            raise UsageError(f"bad --grid {spec!r}") from None
        if any(v < 0 for v in grids[name]):
            raise UsageError(f"--grid values must be non-negative: {spec!r}")
    if args.reps < 1:
        raise UsageError("--reps must be at least 1")
    rows = run_weight_sweep(grids, device, config, target, base, args.reps, threads=args.threads)
    files = {"weight_sweep.csv": weight_sweep_csv(rows)}
    print(f"{len(rows)} optimizations")
    _write_dir(args.out, files, _manifest(
        "weight-sweep", _strip_out(argv),
        {"device": device.to_dict(), "base_weights": list(base.as_tuple()), "grids": grids,
         "reps": args.reps, "evo": config.to_dict(), "target": target.to_list()},
        args.seed, sorted(files)))


def cmd_runs(args, argv):
    target = _target(args)
    _require_positive_target(target)
    device = _resolve_device(args)
    weights = _weights(args)
    config = _evo_config(args)
    if args.n_runs < 1:
        raise UsageError("--n-runs must be at least 1")
    rows = run_repeated_optimizations(args.n_runs, device, config, weights, target,
                                      threads=args.threads)
    kls = [r.result.exact_kl for r in rows]
    print(f"{len(rows)} runs; median exact KL {float(np.median(kls)):.6g} nats")
    files = {"runs.csv": runs_csv(rows)}
    _write_dir(args.out, files, _manifest(
        "runs", _strip_out(argv),
        {"device": device.to_dict(), "weights": list(weights.as_tuple()), "n_runs": args.n_runs,
         "evo": config.to_dict(), "target": target.to_list()}, args.seed, sorted(files)))


def cmd_plot(args, argv):
    if not Path(args.input).is_file():
        raise DataError(f"no such file: {args.input}")
    try:
        svg = render_csv(args.input)
    except PlotDataError as exc:
        raise DataError(str(exc)) from None
    _write_file(args.out, svg, _manifest(
        "plot", _strip_out(argv), {"input": args.input}, None, [Path(args.out).name]))


def cmd_replay(args, argv):
    path = Path(args.manifest)
    try:
        manifest = json.loads(path.read_text())
        recorded = list(manifest["argv"])
        command = manifest["subcommand"]
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from None
    if args.out:
        out = args.out
    elif command in ("plot", "evaluate", "solve"):
        out = str(path)[: -len(".manifest.json")]
    else:
        out = str(path.parent)
    new_argv = recorded + ["--out", out]
    print("replaying: coinflips " + " ".join(shlex.quote(a) for a in new_argv))
    return main(new_argv)


COMMANDS = {
    "evaluate": cmd_evaluate,
    "solve": cmd_solve,
    "optimize": cmd_optimize,
    "sample": cmd_sample,
    "sweep": cmd_sweep,
    "weight-sweep": cmd_weight_sweep,
    "runs": cmd_runs,
    "plot": cmd_plot,
    "replay": cmd_replay,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    # --preset falls back to the device's own published parameters.
    args.device_name_default = getattr(args, "device", "td") \
        if getattr(args, "device", None) in PUBLISHED_PARAMS else "td"
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        rc = COMMANDS[args.command](args, argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK if rc is None else rc


if __name__ == "__main__":
    sys.exit(main())
