"""Command line interface.

Commands: ``synth``, ``online``, ``bounds`` and ``select-model``.  Exit
codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
Every command accepts ``--config FILE`` with ``key=value`` lines whose keys
are flag names; flags given on the command line win.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import (
    BoundInputs,
    HypothesisWarning,
    frobenius_power_bound,
    frobenius_residuals,
    spectral_bound,
    spectral_errors,
    standard_test_matrix,
)
from .errors import DataError, DimensionError, NumericalError
from .ingest import SliceSpec, load_matrix, load_ratings, slice_sequence, split_train_test, write_matrix
from .online import MatrixSequence, run_sequence
from .preprocess import center_rows
from .rsvd import RsvdParams
from .selection import ModelSelectionGrid, best_point, cross_validate
from .softimpute import Backend, SolverConfig
from .synthetic import SyntheticSpec, generate_synthetic

log = logging.getLogger("onlinemc")

BACKENDS = {
    "exact": Backend.EXACT,
    "rsvd": Backend.RANDOMIZED,
    "rsvd-seeded": Backend.SEEDED,
}

EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _floats(text: str) -> list[float]:
    return [float(t) for t in text.replace(",", " ").split()]


def _ints(text: str) -> list[int]:
    return [int(t) for t in text.replace(",", " ").split()]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file; command-line flags override it")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-v", "--verbose", action="store_true")


def _add_data(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("data")
    src = g.add_mutually_exclusive_group()
    src.add_argument("--synthetic", metavar="DIR", help="directory written by 'synth'")
    src.add_argument("--ratings", metavar="FILE", help="delimited user,item,rating,timestamp file")
    g.add_argument("--delimiter", default=",")
    g.add_argument("--columns", default="user,item,rating,timestamp")
    g.add_argument("--header", action="store_true")
    g.add_argument("--rating-min", type=float, default=1.0)
    g.add_argument("--rating-max", type=float, default=5.0)
    g.add_argument("--start", help="first cut point (ISO date or epoch seconds)")
    g.add_argument("--interval-days", type=float, default=30)
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--min-user-ratings", type=int, default=0)
    g.add_argument("--min-item-ratings", type=int, default=0)
    g.add_argument("--train-fraction", type=float, default=0.8)


def _add_solver(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("solver")
    g.add_argument("--backend", choices=sorted(BACKENDS), default="rsvd-seeded")
    g.add_argument("--k", type=int, default=50, help="rank budget")
    g.add_argument("--p", type=int, default=10, help="oversampling")
    g.add_argument("--q", type=int, default=2, help="power exponent")
    g.add_argument("--epsilon", type=float, default=1e-3)
    g.add_argument("--max-iterations", type=int, default=100)


def _add_grid(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model selection")
    default = ModelSelectionGrid()
    g.add_argument("--rhos", type=_floats, default=list(default.rhos))
    g.add_argument("--ks", type=_ints, default=list(default.ks))
    g.add_argument("--folds", type=int, default=default.folds)
    g.add_argument("--max-sampled", type=int, default=default.max_sampled_entries)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = _Parser(prog="onlinemc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    subs = {}

    p = sub.add_parser("synth", help="write a synthetic matrix sequence")
    _add_common(p)
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--rank", type=int, default=50)
    p.add_argument("--t-total", type=int, default=20)
    p.add_argument("--noise-std", type=float, default=0.1)
    p.add_argument("--obs-prob-start", type=float, default=0.03)
    p.add_argument("--obs-prob-end", type=float, default=0.10)
    p.set_defaults(func=cmd_synth)
    subs["synth"] = p

    p = sub.add_parser("online", help="run online completion over a sequence")
    _add_common(p)
    _add_data(p)
    _add_solver(p)
    _add_grid(p)
    p.add_argument("--restart", choices=["warm", "cold"], default="warm")
    lam = p.add_mutually_exclusive_group()
    lam.add_argument("--rho", type=float, default=None, help="lambda / sigma_1 (default 0.5)")
    lam.add_argument("--lambda", dest="lam", type=float, default=None)
    p.add_argument("--select-model", action="store_true",
                   help="pick rho and k by cross-validation on the first matrix")
    p.add_argument("--no-postprocess", action="store_true")
    p.add_argument("--out", required=True, metavar="CSV")
    p.add_argument("--summary", metavar="JSON", help="default: CSV path with .json suffix")
    p.set_defaults(func=cmd_online)
    subs["online"] = p

    p = sub.add_parser("bounds", help="compare error bounds with Monte Carlo means")
    _add_common(p)
    p.add_argument("--m", type=int, default=200)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--k", type=int, default=9)
    p.add_argument("--p", type=int, default=9)
    p.add_argument("--q", type=_ints, default=[0, 1, 2], help="power exponents, comma separated")
    p.add_argument("--decay", type=float, default=0.8)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--zero-tail", action="store_true", help="zero singular values past k")
    p.add_argument("--json", metavar="FILE")
    p.set_defaults(func=cmd_bounds)
    subs["bounds"] = p

    p = sub.add_parser("select-model", help="cross-validate rho and k on the first matrix")
    _add_common(p)
    _add_data(p)
    _add_solver(p)
    _add_grid(p)
    p.add_argument("--out", metavar="JSON")
    p.set_defaults(func=cmd_select_model)
    subs["select-model"] = p
    return parser, subs


def read_config(path) -> dict[str, str]:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.lstrip("-").replace("-", "_")] = value
    return out


def _apply_config(p: argparse.ArgumentParser, values: dict[str, str]) -> None:
    actions = {a.dest: a for a in p._actions}
    defaults = {}
    for key, raw in values.items():
        if key == "lambda":
            key = "lam"
        action = actions.get(key)
        if action is None or key in ("config", "help", "func"):
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(action, argparse._StoreTrueAction):
            defaults[key] = raw.lower() in ("1", "true", "yes", "on")
        elif action.type is not None:
            defaults[key] = action.type(raw)
        else:
            defaults[key] = raw
        if action.choices is not None and defaults[key] not in action.choices:
            raise UsageError(f"config {key}={raw!r} not in {sorted(action.choices)}")
    p.set_defaults(**defaults)


def _config_echo(args) -> dict:
    skip = {"func", "config", "out", "summary", "json", "verbose"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _config_hash(echo: dict) -> str:
    return hashlib.sha256(json.dumps(echo, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _repro(args, echo) -> dict:
    return {
        "seed": args.seed,
        "threads": args.threads,
        "backend": getattr(args, "backend", None),
        "config_hash": _config_hash(echo),
        "version": __version__,
    }


def _clean(v):
    if isinstance(v, float) and not np.isfinite(v):
        return None
    return v


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        t_total=args.t_total,
        rank=args.rank,
        noise_std=args.noise_std,
        obs_prob_start=args.obs_prob_start,
        obs_prob_end=args.obs_prob_end,
        seed=args.seed,
        scale=args.scale,
    )
    data = generate_synthetic(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, label in enumerate(data.train.labels):
        train_name, test_name = f"train_{i:02d}.csv", f"test_{i:02d}.csv"
        write_matrix(out / train_name, data.train[i])
        write_matrix(out / test_name, data.test[i])
        entries.append({
            "label": label,
            "shape": list(data.train[i].shape),
            "train": train_name,
            "test": test_name,
            "observation_probability": data.probabilities[i],
            "train_nnz": data.train[i].nnz,
            "test_nnz": data.test[i].nnz,
        })
    echo = _config_echo(args)
    manifest = {
        "format": "row,col,value; one-based indices",
        "index_base": 1,
        "matrices": entries,
        "config": echo,
        "reproducibility": _repro(args, echo),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(entries)} matrices to {out}")
    return 0


def _load_sequences(args) -> tuple[MatrixSequence, MatrixSequence]:
    if args.synthetic:
        root = Path(args.synthetic)
        try:
            manifest = json.loads((root / "manifest.json").read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"bad manifest: {exc}") from None
        base = manifest.get("index_base", 1)
        train, test, labels = [], [], []
        for e in manifest["matrices"]:
            train.append(load_matrix(root / e["train"], tuple(e["shape"]), base))
            test.append(load_matrix(root / e["test"], tuple(e["shape"]), base))
            labels.append(e["label"])
        return MatrixSequence(tuple(train), tuple(labels)), MatrixSequence(tuple(test), tuple(labels))
    if args.ratings:
        if args.start is None:
            raise UsageError("--ratings needs --start")
        records = load_ratings(
            args.ratings,
            delimiter=args.delimiter or None,
            columns=[c.strip() for c in args.columns.split(",")],
            header=args.header,
            scale=(args.rating_min, args.rating_max),
        )
        spec = SliceSpec(
            start=args.start,
            count=args.count,
            interval_days=args.interval_days,
            min_user_ratings=args.min_user_ratings,
            min_item_ratings=args.min_item_ratings,
        )
        seq = slice_sequence(records, spec)
        pairs = [split_train_test(x, args.train_fraction, seed=(args.seed, i)) for i, x in enumerate(seq)]
        return (
            MatrixSequence(tuple(p[0] for p in pairs), seq.labels),
            MatrixSequence(tuple(p[1] for p in pairs), seq.labels),
        )
    raise UsageError("give --synthetic DIR or --ratings FILE")


def _solver_config(args, k=None) -> SolverConfig:
    return SolverConfig(
        rsvd_params=RsvdParams(k=k or args.k, p=args.p, q=args.q, seed=args.seed),
        backend=BACKENDS[args.backend],
        epsilon=args.epsilon,
        max_iterations=args.max_iterations,
        threads=args.threads,
    )


def _grid(args) -> ModelSelectionGrid:
    return ModelSelectionGrid(tuple(args.rhos), tuple(args.ks), args.folds, args.max_sampled)


def _select(args, train: MatrixSequence) -> dict:
    x, _ = center_rows(train[0])
    scores = cross_validate(x, _grid(args), _solver_config(args), seed=args.seed, threads=args.threads)
    rho, k = best_point(scores)
    return {
        "rho": rho,
        "k": k,
        "scores": [{"rho": r, "k": kk, "cv_rmse": s} for (r, kk), s in sorted(scores.items())],
    }


def cmd_online(args) -> int:
    train, test = _load_sequences(args)
    selection = None
    rho, lam, k = args.rho, args.lam, args.k
    if args.select_model:
        selection = _select(args, train)
        rho, k, lam = selection["rho"], selection["k"], None
    elif rho is None and lam is None:
        rho = 0.5
    config = _solver_config(args, k=k)
    result = run_sequence(
        train, config, args.restart, test, rho=rho, lam=lam, postprocess=not args.no_postprocess
    )
    out = Path(args.out)
    result.write_csv(out)
    echo = _config_echo(args)
    last = result.records[-1]
    summary = {
        "command": "online",
        "csv": str(out),
        "config": echo,
        "reproducibility": _repro(args, echo),
        "selection": selection,
        "rho": rho,
        "k": k,
        "totals": {
            "seconds": round(result.total_seconds, 3),
            "iterations": result.total_iterations,
            "matrices": len(result.records),
        },
        "final": {
            "label": last.label,
            "train_rmse": _clean(last.train_rmse),
            "test_rmse": _clean(last.test_rmse),
            "rank": last.rank,
            "lambda": last.lam,
        },
    }
    summary_path = Path(args.summary) if args.summary else out.with_suffix(".json")
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"{len(result.records)} matrices, {result.total_iterations} iterations, "
          f"{result.total_seconds:.3f}s; final test RMSE {last.test_rmse:.4f}")
    return 0


def cmd_bounds(args) -> int:
    if args.k < 2:
        raise UsageError(f"spectral bound needs k >= 2 (got k={args.k})")
    if args.p < 2:
        raise UsageError(f"Frobenius bound needs p >= 2 (got p={args.p})")
    if args.k + args.p > min(args.m, args.n):
        raise UsageError("k + p must not exceed min(m, n)")
    rank = args.k if args.zero_tail else None
    a, s = standard_test_matrix(args.m, args.n, args.decay, rank=rank, seed=args.seed)
    slack = 1e-12 * max(s[0], 1.0)
    rows = []
    for q in args.q:
        inp = BoundInputs(args.m, args.n, args.k, args.p, q, sigma_tail=tuple(s[args.k:]))
        spec_err = spectral_errors(a, args.k, args.p, q, args.trials, args.seed, args.threads)
        frob_err = frobenius_residuals(a, args.k, args.p, q, args.trials, args.seed, args.threads)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", HypothesisWarning)
            spec_bound = spectral_bound(inp)
        note = "" if inp.p_equals_k else " (p != k: outside the bound's hypothesis)"
        for name, bound, emp in (
            ("spectral", spec_bound, spec_err.mean()),
            ("frobenius", frobenius_power_bound(inp), frob_err.mean()),
        ):
            ok = bool(emp <= bound + slack)
            rows.append({"bound": name, "q": q, "bound_value": bound, "empirical_mean": float(emp),
                         "trials": args.trials, "pass": ok})
            print(f"{name:9s} q={q}: bound={bound:.6g} empirical={emp:.6g} "
                  f"trials={args.trials} {'pass' if ok else 'FAIL'}{note if name == 'spectral' else ''}")
    if args.json:
        echo = _config_echo(args)
        Path(args.json).write_text(json.dumps(
            {"command": "bounds", "config": echo, "reproducibility": _repro(args, echo),
             "p_equals_k": args.p == args.k, "results": rows},
            indent=2, sort_keys=True) + "\n")
    return 0


def cmd_select_model(args) -> int:
    train, _ = _load_sequences(args)
    selection = _select(args, train)
    print(f"selected rho={selection['rho']} k={selection['k']}")
    if args.out:
        echo = _config_echo(args)
        Path(args.out).write_text(json.dumps(
            {"command": "select-model", "config": echo, "reproducibility": _repro(args, echo),
             **selection}, indent=2, sort_keys=True) + "\n")
    return 0


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, subs = build_parser()
    try:
        pre, _ = _pre_parse(argv)
        if pre.config and pre.command in subs:
            _apply_config(subs[pre.command], read_config(pre.config))
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        return args.func(args)
    except UsageError as exc:
        print(f"onlinemc: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, DimensionError, OSError) as exc:
        print(f"onlinemc: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"onlinemc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"onlinemc: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def _pre_parse(argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    return pre.parse_known_args(argv)


if __name__ == "__main__":
    sys.exit(main())
