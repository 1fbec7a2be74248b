"""Command-line front end: simulate / run / summarize / validate.

Every failure prints exactly one ``error: ...`` line to stderr and
exits non-zero.  All flags can also be given in a config file of
``key = value`` lines (one per flag, underscores or dashes both fine);
explicit flags win over the file.  Runs are byte-reproducible for a
fixed seed and configuration, independent of --workers.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import data as dm
from . import simulator as sim
from .params import Hyperparams
from .sampler import RunConfig, run
from .summaries import summarize_trace, write_summary


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # route argparse failures through the single error-line contract
    def error(self, message):
        raise CliError(message)


def _split_pair(text, name):
    parts = text.split(",")
    if len(parts) != 2:
        raise CliError(f"{name} expects two comma-separated numbers, got {text!r}")
    try:
        return float(parts[0]), float(parts[1])
    except ValueError:
        raise CliError(f"{name}: could not parse {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="hdpadmix",
        description="Nonparametric admixture inference with a linkage HMM",
    )
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_sim = sub.add_parser("simulate", help="draw a synthetic dataset with ground truth")
    p_sim.add_argument("--preset", type=int, choices=(1, 2, 3),
                       help="benchmark scenario: 1, 2 or 3 ancestral populations")
    p_sim.add_argument("--n", type=int, help="individuals (custom scenario)")
    p_sim.add_argument("--loci", type=int, help="loci (custom scenario)")
    p_sim.add_argument("--k", type=int, help="ancestral populations (custom scenario)")
    p_sim.add_argument("--weights", help="comma-separated admixture weights")
    p_sim.add_argument("--r", type=float, help="split rate (custom scenario)")
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", required=True, help="output directory")

    p_run = sub.add_parser("run", help="run the MCMC sampler")
    p_run.add_argument("--genotypes", help="genotype CSV")
    p_run.add_argument("--distances", help="distance file")
    p_run.add_argument("--config", help="key = value config file")
    p_run.add_argument("--out", help="output directory")
    p_run.add_argument("--sweeps", type=int)
    p_run.add_argument("--burn-in", type=int, dest="burn_in")
    p_run.add_argument("--thin", type=int)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--workers", type=int)
    p_run.add_argument("--k-init", dest="k_init",
                       help="initial population count, or 'auto' (default)")
    p_run.add_argument("--checkpoint-every", type=int, dest="checkpoint_every")
    p_run.add_argument("--resume", action="store_true")
    p_run.add_argument("--alpha-prior", dest="alpha_prior",
                       help="shape,rate of the Gamma prior on alpha")
    p_run.add_argument("--alpha0-prior", dest="alpha0_prior",
                       help="shape,rate of the Gamma prior on alpha0")
    p_run.add_argument("--logr-range", dest="logr_range",
                       help="lo,hi bounds of the uniform prior on log r")
    p_run.add_argument("--mu-prior", dest="mu_prior",
                       help="a,b of the Beta prior on each base-measure mean")
    p_run.add_argument("--c", type=float, dest="c",
                       help="fixed base-measure concentration")

    p_sum = sub.add_parser("summarize", help="post-process a trace directory")
    p_sum.add_argument("--trace", required=True, help="run output directory")
    p_sum.add_argument("--out", help="summary output directory (default: trace dir)")
    p_sum.add_argument("--granularity", choices=("item", "individual"), default="item")

    p_val = sub.add_parser("validate", help="check dataset files")
    p_val.add_argument("--genotypes", required=True)
    p_val.add_argument("--distances")
    return parser


_RUN_DEFAULTS = {
    "sweeps": 1000,
    "burn_in": 200,
    "thin": 1,
    "seed": 0,
    "workers": 1,
    "k_init": "auto",
    "checkpoint_every": 1000,
}


def _parse_k_init(raw):
    if raw is None or str(raw).lower() == "auto":
        return None
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"--k-init expects an integer or 'auto', got {raw!r}") from None


def _load_config_file(path) -> dict:
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise CliError(f"{path}: line {lineno}: expected 'key = value'")
                key, val = (part.strip() for part in line.split("=", 1))
                values[key.replace("-", "_")] = val
    except OSError as exc:
        raise CliError(f"cannot read config file: {exc}") from None
    return values


def _merged(args, file_values, key, cast=None):
    flag = getattr(args, key, None)
    if flag is not None:
        return flag
    if key in file_values:
        raw = file_values[key]
        try:
            return cast(raw) if cast else raw
        except (TypeError, ValueError):
            raise CliError(f"config value for {key} is invalid: {raw!r}") from None
    return _RUN_DEFAULTS.get(key)


def _cmd_simulate(args) -> int:
    if args.preset is not None:
        config = sim.scenario_presets(seed=args.seed)[args.preset - 1]
    else:
        missing = [f for f in ("n", "loci", "k", "weights", "r")
                   if getattr(args, f) is None]
        if missing:
            raise CliError(
                "custom simulation needs --n --loci --k --weights --r "
                f"(missing: {', '.join(missing)}) or use --preset"
            )
        weights = np.array([float(w) for w in args.weights.split(",")])
        if weights.shape[0] != args.k:
            raise CliError("--weights length must equal --k")
        theta_rng = np.random.default_rng(args.seed)
        freq1 = theta_rng.beta(0.5, 0.5, size=(args.k, args.loci))
        config = sim.ScenarioConfig(
            n_individuals=args.n,
            n_loci=args.loci,
            alleles_per_locus=np.full(args.loci, 2, dtype=np.int64),
            distances=np.full(args.loci - 1, 1.0),
            k_true=args.k,
            admixture_weights=weights / weights.sum(),
            theta_true=np.stack([1.0 - freq1, freq1], axis=2),
            r_true=args.r,
            seed=args.seed,
        )
    try:
        config.check()
    except ValueError as exc:
        raise CliError(str(exc)) from None
    dataset, truth = sim.simulate(config)
    os.makedirs(args.out, exist_ok=True)
    dm.save_genotypes(dataset, os.path.join(args.out, "genotypes.csv"))
    dm.save_distances(dataset.distances, os.path.join(args.out, "distances.txt"))
    sim.save_ground_truth(truth, os.path.join(args.out, "truth.csv"))
    print(f"wrote genotypes.csv, distances.txt, truth.csv to {args.out}")
    return 0


def _load_dataset(genotypes_path, distances_path):
    if genotypes_path is None:
        raise CliError("--genotypes is required")
    try:
        dataset = dm.load_genotypes(genotypes_path)
    except (OSError, dm.DataFormatError) as exc:
        raise CliError(str(exc)) from None
    if distances_path is not None:
        try:
            distances = dm.load_distances(distances_path, expected=dataset.n_loci)
        except (OSError, dm.DataFormatError) as exc:
            raise CliError(str(exc)) from None
        dataset = dm.with_distances(dataset, distances)
    return dataset


def _cmd_run(args) -> int:
    file_values = _load_config_file(args.config) if args.config else {}
    genotypes = args.genotypes or file_values.get("genotypes")
    distances = args.distances or file_values.get("distances")
    out_dir = args.out or file_values.get("out")
    if out_dir is None:
        raise CliError("--out is required")
    if distances is None:
        raise CliError("--distances is required for run")
    dataset = _load_dataset(genotypes, distances)
    findings = dm.validate(dataset)
    errors = [f for f in findings if f.severity == "error"]
    if errors:
        raise CliError(f"dataset invalid: {errors[0].message}")

    priors = Hyperparams()
    for name, attr in (("alpha_prior", "alpha_prior"), ("alpha0_prior", "alpha0_prior"),
                       ("mu_prior", "mu_prior")):
        raw = getattr(args, name, None) or file_values.get(name)
        if raw is not None:
            setattr(priors, attr, _split_pair(raw, "--" + name.replace("_", "-")))
    raw = getattr(args, "logr_range", None) or file_values.get("logr_range")
    if raw is not None:
        priors.log_r_bounds = _split_pair(raw, "--logr-range")
    c_val = _merged(args, file_values, "c", float)
    if c_val is not None:
        priors.c = float(c_val)

    config = RunConfig(
        sweeps=int(_merged(args, file_values, "sweeps", int)),
        burn_in=int(_merged(args, file_values, "burn_in", int)),
        thin=int(_merged(args, file_values, "thin", int)),
        seed=int(_merged(args, file_values, "seed", int)),
        workers=int(_merged(args, file_values, "workers", int)),
        k_init=_parse_k_init(_merged(args, file_values, "k_init", str)),
        checkpoint_every=int(_merged(args, file_values, "checkpoint_every", int)),
        out_dir=out_dir,
        priors=priors,
    )
    try:
        config.check()
    except ValueError as exc:
        raise CliError(str(exc)) from None
    run(dataset, config, resume=args.resume)
    n_records = len(config.retained_sweeps())
    print(f"run complete: {n_records} retained sweeps in {out_dir}")
    return 0


def _cmd_summarize(args) -> int:
    out_dir = args.out or args.trace
    try:
        summary = summarize_trace(args.trace, granularity=args.granularity)
    except (OSError, ValueError) as exc:
        raise CliError(str(exc)) from None
    write_summary(summary, out_dir)
    mode = summary["k"]["k_cover_95"]["mode"]
    print(f"wrote summary.json to {out_dir} (k_cover_95 mode: {mode})")
    return 0


def _cmd_validate(args) -> int:
    dataset = _load_dataset(args.genotypes, None)
    if args.distances is not None:
        try:
            distances = dm.load_distances(args.distances, expected=dataset.n_loci)
            dataset = dm.with_distances(dataset, distances)
        except dm.DataFormatError as exc:
            raise CliError(str(exc)) from None
    findings = dm.validate(dataset)
    for finding in findings:
        print(str(finding))
    errors = [f for f in findings if f.severity == "error"]
    if errors:
        raise CliError(f"validation failed with {len(errors)} error(s)")
    print(f"ok: {dataset.n_individuals} individuals x {dataset.n_loci} loci")
    return 0


def dispatch(argv) -> int:
    parser = build_parser()
    handlers = {
        "simulate": _cmd_simulate,
        "run": _cmd_run,
        "summarize": _cmd_summarize,
        "validate": _cmd_validate,
    }
    try:
        try:
            args = parser.parse_args(argv)
        except SystemExit as exc:
            return int(exc.code or 0)   # --help
        return handlers[args.command](args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # contract: single error line on any failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
