"""Command-line entry point: ``ncea {train,eval,sweep,bench,codebook}``.

Exit codes: 0 success, 2 usage/config error, 3 numeric divergence, 4 I/O error
(including a missing model when ``--train`` is not given).
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from .archive import ArchiveError, load_model, save_model
from .baselines import PamScheme, build_im_codebook
from .bench import BenchCase, benchmark_decode, default_cases, write_latency_csv
from .channel import SnrSpec, snr_to_powers
from .experiment import (
    LEARNED,
    ConfigError,
    MissingModelError,
    get_model,
    load_config,
    model_path,
    run_experiment,
)
from .nn import DivergenceError

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED, EXIT_IO = 0, 2, 3, 4


def _experiment_args(p: argparse.ArgumentParser, with_config: bool = True):
    if with_config:
        p.add_argument("--config", help="flat key=value config file; flags override it")
    p.add_argument("--scheme", help="scheme name, or a comma-separated list")
    p.add_argument("--j", dest="J", help="number of users")
    p.add_argument("--n", dest="N", help="sub-carriers")
    p.add_argument("--m", dest="M", help="messages per block (per user)")
    p.add_argument("--k", dest="K", help="active sub-carriers (IM)")
    p.add_argument("--d", dest="D", help="PAM order")
    p.add_argument("--l", dest="L", help="receive antennas, comma-separated")
    p.add_argument("--ebn0", dest="ebn0_db", help="Eb/N0 grid in dB: 'a:b:step' or 'a,b,c'")
    p.add_argument("--blocks", help="Monte Carlo blocks per point (default 1e5)")
    p.add_argument("--seed")
    p.add_argument("--restarts")
    p.add_argument("--lam", help="fairness weight, or 'grid' to search {0,1,5,10,20}")
    p.add_argument("--hidden", help="decoder hidden widths, comma-separated")
    p.add_argument("--epochs")
    p.add_argument("--train-size", dest="train_size")
    p.add_argument("--batch-size", dest="batch_size")
    p.add_argument("--lr")
    p.add_argument("--workers")
    p.add_argument("--model-dir", dest="model_dir")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--train", action="store_const", const="true", help="train models that are missing")
    p.add_argument("--plot", action="store_const", const="true", help="also render PNG figures")


_KEYS = ("scheme", "J", "N", "M", "K", "D", "L", "ebn0_db", "blocks", "seed", "restarts", "lam", "hidden", "epochs",
         "train_size", "batch_size", "lr", "workers", "model_dir", "out_dir", "train", "plot")


def _config(args, config_path=None):
    overrides = {k: getattr(args, k, None) for k in _KEYS}
    return load_config(config_path or getattr(args, "config", None), overrides)


def cmd_train(args) -> int:
    cfg = _config(args)
    cfg.train = True
    learned = [s for s in cfg.scheme if s in LEARNED]
    if not learned:
        raise ConfigError("train needs a learned scheme (nc-ea-dnn, nc-ea-ml, eama-ul, eama-dl)")
    for scheme in dict.fromkeys("nc-ea" if s.startswith("nc-ea") else s for s in learned):
        name = "nc-ea-dnn" if scheme == "nc-ea" else scheme
        for n_ant in cfg.L:
            for db in cfg.ebn0_db:
                get_model(cfg, name, n_ant, db)
                print(model_path(cfg, name, n_ant, db))
    return EXIT_OK


def cmd_eval(args) -> int:
    for path in run_experiment(_config(args)):
        print(path)
    return EXIT_OK


def cmd_sweep(args) -> int:
    for config in args.configs:
        for path in run_experiment(_config(args, config)):
            print(path)
    return EXIT_OK


def _parse_case(text: str) -> BenchCase:
    # scheme:N:M[:L[:extra]] where extra is Q (dnn), K (im) or D (pam)
    parts = text.split(":")
    try:
        scheme, n_sub, n_msg = parts[0], int(parts[1]), int(parts[2])
        n_ant = int(parts[3]) if len(parts) > 3 else 1
        extra = int(parts[4]) if len(parts) > 4 else None
    except (IndexError, ValueError):
        raise ConfigError(f"bad --case {text!r}; expected scheme:N:M[:L[:Q|K|D]]") from None
    if scheme not in ("dnn", "ml", "im", "pam"):
        raise ConfigError(f"unknown bench scheme {scheme!r}")
    if scheme == "im" and extra is None or scheme == "pam" and extra is None:
        raise ConfigError(f"{scheme} cases need K or D as the fifth field")
    return BenchCase(scheme, n_sub, n_msg, n_ant, hidden=extra if scheme == "dnn" else None,
                     k=extra if scheme == "im" else None, order=extra if scheme == "pam" else None)


def cmd_bench(args) -> int:
    cases = [_parse_case(c) for c in args.case] if args.case else default_cases()
    if args.reps < 1000:
        raise ConfigError("--reps must be at least 1000")
    rows = benchmark_decode(cases, args.reps, args.batch, args.seed)
    out = write_latency_csv(rows, args.out)
    print(out)
    if args.plot:
        from .plotting import plot_latency_csv

        print(plot_latency_csv(out, out.with_suffix(".png")))
    return EXIT_OK


def cmd_codebook(args) -> int:
    if args.scheme == "nc-ea":
        if not args.model:
            raise ConfigError("--model is required for nc-ea codebooks")
        model = load_model(args.model)
        if not hasattr(model, "codebook"):
            raise ConfigError("codebook export supports single-user models only")
        rows = model.codebook.codewords
    else:
        if args.n is None:
            raise ConfigError("--n is required")
        if args.scheme == "nc-ofdm-im":
            if args.k is None:
                raise ConfigError("--k is required for nc-ofdm-im")
            build = lambda es: build_im_codebook(args.n, args.k, es)  # noqa: E731
        else:
            if args.d is None:
                raise ConfigError("--d is required for pam-med")
            build = lambda es: PamScheme(args.n, args.d, es)  # noqa: E731
        es = 1.0
        try:
            if args.ebn0 is not None:
                es = snr_to_powers(SnrSpec(args.ebn0, build(1.0).bits, args.n))[0]
            rows = build(es).codewords(es)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        for row in np.atleast_2d(rows):
            w.writerow([format(float(v), ".17g") for v in row])
    finally:
        if args.out:
            out.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ncea", description="Noncoherent energy autoencoder simulations.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and archive one model per (L, Eb/N0)")
    _experiment_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="write BLER curves (CSV) for each scheme and L")
    _experiment_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run experiments from config files")
    p.add_argument("configs", nargs="+", help="config files (flat key=value)")
    _experiment_args(p, with_config=False)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="decode latency benchmark (CSV)")
    p.add_argument("--case", action="append", help="scheme:N:M[:L[:Q|K|D]]; repeatable")
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="latency.csv")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("codebook", help="dump codewords as CSV rows")
    p.add_argument("--scheme", required=True, choices=["nc-ofdm-im", "pam-med", "nc-ea"])
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--d", type=int)
    p.add_argument("--ebn0", type=float, help="scale to this Eb/N0 (default E_s = 1)")
    p.add_argument("--model", help="model archive (nc-ea)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_codebook)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"ncea: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (MissingModelError, ArchiveError, OSError) as exc:
        print(f"ncea: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(f"ncea: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
