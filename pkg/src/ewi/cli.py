"""Command-line entry point.

Every subcommand writes into a temporary directory next to ``--out`` and moves
it into place only on success, together with a ``manifest.json`` recording the
configuration, seed and SHA-256 of every artifact.

Exit codes: 0 success, 1 unexpected failure, 2 usage error, 3 malformed
configuration, 4 missing input, 5 invalid input data.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
from contextlib import contextmanager
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import ENV_PREFIX, PROFILES, RunConfig, load_config
from .errors import ConfigError, DataError, MissingDataError
from .evaluation import ScoredLabels, pr_curve, roc_curve
from .files import (
    date_of, load_matrix, read_csv_columns, read_ohlc, save_array, save_matrix, save_model,
    sha256_file, write_csv, write_curve, write_json, write_ohlc,
)
from .indicator import train_ewi
from .ledger import encode_snapshots, filter_long_term_users, merge_addresses, read_ledger
from .linalg import SolverOptions, estimate_rank, reconstruction_score, robust_nmf
from .pipeline import SWEEP_COLUMNS, make_partition, run_backtest, sensitivity_sweep
from .synth import SynthSpec, generate
from .volatility import VolatilitySeries, label_extremes, positive_rate

log = logging.getLogger("ewi")

EXIT_OK, EXIT_ERROR, EXIT_USAGE, EXIT_CONFIG, EXIT_MISSING, EXIT_DATA = 0, 1, 2, 3, 4, 5


@contextmanager
def atomic_output(out):
    """Yield a scratch directory that replaces ``out`` only if the block succeeds."""
    out = Path(out).resolve()
    if out.exists() and (not out.is_dir() or (any(out.iterdir()) and not (out / "manifest.json").exists())):
        raise ConfigError(f"refusing to replace {out}: it exists and was not written by ewi")
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    os.chmod(tmp, 0o755)
    if out.exists():
        shutil.rmtree(out)
    tmp.rename(out)


def write_manifest(directory, command, config, seed):
    directory = Path(directory)
    artifacts = {
        str(p.relative_to(directory)): sha256_file(p)
        for p in sorted(directory.rglob("*"))
        if p.is_file() and p.name != "manifest.json"
    }
    write_json(directory / "manifest.json", {
        "command": command, "version": __version__, "seed": seed, "config": config, "artifacts": artifacts,
    })


def _out_dir(args, cfg=None):
    out = args.out or (cfg.run.out if cfg is not None else "")
    if not out:
        raise ConfigError("no output directory: pass --out or set run.out in the config")
    return out


def _maybe_config(args):
    return load_config(args.config) if args.config else None


def _seed(args, cfg=None):
    if args.seed is not None:
        return args.seed
    return cfg.run.seed if cfg is not None else 0


def _solver(args, cfg, seed):
    base = cfg.solver_options() if cfg is not None else SolverOptions()
    kw = asdict(base)
    kw["seed"] = seed
    for name in ("max_iters", "rel_tol"):
        v = getattr(args, name, None)
        if v is not None:
            kw[name] = v
    return SolverOptions(**kw)


# ---------------------------------------------------------------- subcommands


def cmd_ingest(args):
    cfg = _maybe_config(args)
    events = read_ledger(_existing(args.ledger))
    mapping = merge_addresses(events)
    users = filter_long_term_users(events, mapping, args.min_tx, args.min_span, args.active_before)
    if not users:
        raise DataError("no users pass the long-term filter")
    X = encode_snapshots(events, mapping, users, args.encoding)
    with atomic_output(_out_dir(args, cfg)) as tmp:
        save_matrix(tmp, X)
        write_csv(tmp / "users.csv", ["address", "user"], sorted(mapping.user_of.items()))
        write_json(tmp / "summary.json", {
            "n_events": len(events), "n_addresses": len(mapping), "n_users": mapping.n_users,
            "n_long_term_users": len(users), "shape": list(X.shape), "encoding": args.encoding,
        })
        write_manifest(tmp, "ingest", _args_snapshot(args), None)
    return EXIT_OK


def cmd_label(args):
    cfg = _maybe_config(args)
    sigma = VolatilitySeries.from_bars(read_ohlc(args.ohlc, args.epoch))
    labels = label_extremes(sigma, args.alpha, args.h)
    ok = labels.beta >= 0
    with atomic_output(_out_dir(args, cfg)) as tmp:
        write_csv(tmp / "sigma.csv", ["day", "date", "sigma"],
                  [(d, date_of(d, args.epoch), s) for d, s in zip(sigma.days, sigma.sigma) if np.isfinite(s)])
        write_csv(tmp / "labels.csv", ["day", "date", "label"],
                  [(d, date_of(d, args.epoch), b) for d, b in zip(labels.days[ok], labels.beta[ok])])
        write_json(tmp / "summary.json", {
            "alpha": args.alpha, "h": args.h, "n": int(ok.sum()), "eps": positive_rate(labels),
        })
        write_manifest(tmp, "label", _args_snapshot(args), None)
    return EXIT_OK


def cmd_decompose(args):
    cfg = _maybe_config(args)
    seed = _seed(args, cfg)
    X = load_matrix(args.input)
    fp = robust_nmf(X.values, args.k, args.lam, _solver(args, cfg, seed))
    summary = {
        "k": args.k, "lambda": args.lam, "objective": fp.objective, "n_iter": fp.n_iter,
        "reconstruction_score": reconstruction_score(X.values, fp.W, fp.H),
    }
    try:
        summary["estimated_rank"] = estimate_rank(X.values)
    except ValueError:
        summary["estimated_rank"] = None
    factors = list(range(args.k))
    with atomic_output(_out_dir(args, cfg)) as tmp:
        save_array(tmp, "W", fp.W, X.row_index, factors)
        save_array(tmp, "H", fp.H, factors, [int(d) for d in X.day_index])
        write_json(tmp / "summary.json", summary)
        write_manifest(tmp, "decompose", _args_snapshot(args), seed)
    return EXIT_OK


def cmd_train(args):
    cfg = _maybe_config(args)
    seed = _seed(args, cfg)
    X = load_matrix(args.x)
    if args.train_days:
        X = X.columns(max(0, X.shape[1] - args.train_days), X.shape[1])
    sigma = VolatilitySeries.from_bars(read_ohlc(args.ohlc, args.epoch)).aligned(X.day_index)
    model = train_ewi(
        X.values, sigma, args.k, args.delta, args.lam, args.lam_c, _solver(args, cfg, seed),
        train_days=(int(X.day_index[0]), int(X.day_index[-1])),
    )
    with atomic_output(_out_dir(args, cfg)) as tmp:
        save_model(tmp / "model.zip", model, {"seed": seed, "rows": [str(r) for r in X.row_index]})
        write_json(tmp / "summary.json", {
            "k": model.k, "delta": model.delta, "train_days": list(model.train_days),
            "nonzero_coefficients": int(np.count_nonzero(model.c)),
        })
        write_manifest(tmp, "train", _args_snapshot(args), seed)
    return EXIT_OK


def _load_run_inputs(cfg: RunConfig):
    cfg.check_paths()
    d = cfg.data
    if d.matrix:
        X = load_matrix(d.matrix)
    else:
        events = read_ledger(d.ledger)
        mapping = merge_addresses(events)
        users = filter_long_term_users(events, mapping, d.min_tx, d.min_span, d.active_before)
        if not users:
            raise DataError("no users pass the long-term filter")
        X = encode_snapshots(events, mapping, users, d.encoding)
    sigma = VolatilitySeries.from_bars(read_ohlc(d.ohlc, d.epoch))
    covered = np.isfinite(sigma.aligned(X.day_index))
    if not covered.any():
        raise DataError("price data does not overlap the evolution matrix days")
    return X, sigma


def _run_config(args) -> RunConfig:
    if not args.config:
        raise ConfigError(f"{args.command} requires --config")
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.run.seed = args.seed
    if args.threads is not None:
        cfg.run.threads = args.threads
    return cfg


def cmd_backtest(args):
    cfg = _run_config(args)
    out = _out_dir(args, cfg)
    X, sigma = _load_run_inputs(cfg)
    part = make_partition(X.shape[1], cfg.partition.holdout_days, cfg.partition.train_days)
    res = run_backtest(
        X, sigma, cfg.model.indicator, cfg.indicator_params(), cfg.evaluation.alpha, cfg.evaluation.h,
        part, cfg.run.seed, cfg.run.threads,
    )
    m = res.metrics
    labels = label_extremes(sigma, cfg.evaluation.alpha, cfg.evaluation.h)
    score_rows = []
    folds = []
    for fs, sl, auc_roc, auc_pr in zip(res.fold_scores, res.scored, m.fold_auc_roc, m.fold_auc_pr):
        beta = labels.lookup(fs.days)
        score_rows += [(fs.fold.index, d, date_of(d, cfg.data.epoch), s, b) for d, s, b in zip(fs.days, fs.scores, beta)]
        a, b = fs.fold.train
        folds.append({
            "index": fs.fold.index,
            "train_days": [int(X.day_index[a]), int(X.day_index[b - 1])],
            "holdout_days": [int(fs.days[0]), int(fs.days[-1])],
            "train_max_day": fs.train_max_day,
            "n": len(sl), "n_pos": sl.n_pos, "auc_roc": auc_roc, "auc_pr": auc_pr,
        })
    metrics = {
        "indicator": cfg.model.indicator, "alpha": cfg.evaluation.alpha, "h": cfg.evaluation.h,
        "n": m.n, "eps": m.eps, "auc_roc": m.roc.auc, "auc_pr": m.pr.auc,
        "auc_pr_minus_eps": m.pr.auc - m.eps, "degenerate_folds": m.degenerate_folds, "folds": folds,
    }
    with atomic_output(out) as tmp:
        write_csv(tmp / "scores.csv", ["fold", "day", "date", "score", "label"], score_rows)
        write_curve(tmp / "roc.csv", m.roc)
        write_curve(tmp / "pr.csv", m.pr)
        write_json(tmp / "metrics.json", metrics)
        write_manifest(tmp, "backtest", cfg.snapshot(), cfg.run.seed)
    return EXIT_OK


def cmd_sweep(args):
    cfg = _run_config(args)
    out = _out_dir(args, cfg)
    X, sigma = _load_run_inputs(cfg)
    part = make_partition(X.shape[1], cfg.partition.holdout_days, cfg.partition.train_days)
    rows = sensitivity_sweep(X, sigma, cfg.sweep_grid(), cfg.indicator_params(), part, cfg.run.seed, cfg.run.threads)
    with atomic_output(out) as tmp:
        write_csv(tmp / "sweep.csv", SWEEP_COLUMNS, [[r[c] for c in SWEEP_COLUMNS] for r in rows])
        write_manifest(tmp, "sweep", cfg.snapshot(), cfg.run.seed)
    return EXIT_OK


def _read_day_values(path, column, cast):
    days, values = read_csv_columns(path, "day", column)
    try:
        return dict(zip((int(d) for d in days), (cast(v) for v in values)))
    except ValueError as e:
        raise DataError(f"{path}: {e}") from e


def cmd_evaluate(args):
    cfg = _maybe_config(args)
    scores = _read_day_values(args.scores, "score", float)
    labels = _read_day_values(args.labels, "label", int)
    days = sorted(d for d in scores if d in labels and labels[d] >= 0)
    if not days:
        raise DataError("scores and labels share no days")
    sl = ScoredLabels([scores[d] for d in days], [labels[d] for d in days], days)
    roc, pr = roc_curve(sl), pr_curve(sl)
    with atomic_output(_out_dir(args, cfg)) as tmp:
        write_curve(tmp / "roc.csv", roc)
        write_curve(tmp / "pr.csv", pr)
        write_json(tmp / "metrics.json", {
            "n": len(sl), "eps": sl.positive_rate, "auc_roc": roc.auc, "auc_pr": pr.auc,
            "auc_pr_minus_eps": pr.auc - sl.positive_rate,
        })
        write_manifest(tmp, "evaluate", _args_snapshot(args), None)
    return EXIT_OK


SYNTH_CONFIG = """\
# written by `ewi synth`; paths are relative to this file
[data]
matrix = "."
ohlc = "ohlc.csv"

[model]
indicator = "nmf_nlr"
k = {k}
delta = {delta}

[evaluation]
alpha = {alpha}
h = 1

[run]
seed = {seed}
"""


def cmd_synth(args):
    cfg = _maybe_config(args)
    raw = {}
    if args.spec:
        import tomli

        text = _existing(args.spec).read_text()
        try:
            raw = tomli.loads(text)
        except tomli.TOMLDecodeError as e:
            raise ConfigError(f"{args.spec}: {e}") from e
        raw = raw.get("synth", raw)
    if args.seed is not None:
        raw["seed"] = args.seed
    try:
        spec = SynthSpec.from_dict(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid synth spec: {e}") from e
    data = generate(spec)
    with atomic_output(_out_dir(args, cfg)) as tmp:
        save_matrix(tmp, data.X)
        write_ohlc(tmp / "ohlc.csv", data.bars)
        truth = tmp / "truth"
        truth.mkdir()
        save_array(truth, "W", data.W_true)
        save_array(truth, "H", data.H_true)
        save_array(truth, "c", data.c_true)
        write_csv(truth / "sigma.csv", ["day", "sigma"], zip(data.X.day_index, data.sigma))
        write_json(truth / "spec.json", {**spec.to_dict(), "signal_factors": list(data.signal_factors)})
        (tmp / "backtest.toml").write_text(
            SYNTH_CONFIG.format(k=spec.k_true, delta=spec.delta, alpha=spec.alpha, seed=spec.seed)
        )
        write_manifest(tmp, "synth", spec.to_dict(), spec.seed)
    return EXIT_OK


def _table_rows(rows, h):
    """Table-shaped summary: indicator rows by alpha columns for one horizon."""
    rows = [r for r in rows if int(r["h"]) == h]
    alphas = sorted({float(r["alpha"]) for r in rows})
    cell = {}
    eps = {}
    order = []
    for r in rows:
        ind = r["indicator"]
        if ind == "volume":
            label = "AUC PR (VOL)"
        else:
            name = "NMF+NLR" if ind == "nmf_nlr" else "SVD+LR"
            label = f"AUC PR ({name})[k={r['k']},delta={r['delta']}]"
        if label not in order:
            order.append(label)
        a = float(r["alpha"])
        cell[label, a] = (float(r["auc_pr"]), float(r["auc_pr_minus_eps"]))
        eps[a] = float(r["eps"])
    return alphas, order, cell, eps


def _num(v, spec):
    return "n/a" if v is None or not np.isfinite(v) else format(v, spec)


def render_report(directory, h=1) -> str:
    directory = Path(directory)
    lines = []
    sweep = directory / "sweep.csv"
    metrics = directory / "metrics.json"
    if sweep.exists():
        cols = read_csv_columns(sweep, *SWEEP_COLUMNS)
        rows = [dict(zip(SWEEP_COLUMNS, vals)) for vals in zip(*cols)]
        if not any(int(r["h"]) == h for r in rows):
            raise DataError(f"sweep has no rows for h={h}")
        alphas, order, cell, eps = _table_rows(rows, h)
        head = f"| Indicator (h={h}) | " + " | ".join(f"alpha={a:g}" for a in alphas) + " |"
        sep = "|---" * (len(alphas) + 1) + "|"
        lines += ["## AUC PR", "", head, sep]
        lines.append("| AUC PR (RND) | " + " | ".join(f"{eps[a]:.3f}" for a in alphas) + " |")
        for label in order:
            lines.append(f"| {label} | " + " | ".join(
                _num(cell.get((label, a), (None, None))[0], ".3f") for a in alphas) + " |")
        lines += ["", "## AUC PR - AUC PR (RND)", "", head, sep]
        for label in order:
            lines.append(f"| {label} - RND | " + " | ".join(
                _num(cell.get((label, a), (None, None))[1], "+.3f") for a in alphas) + " |")
    elif metrics.exists():
        m = json.loads(metrics.read_text())
        lines += [
            f"## Backtest: {m['indicator']} (alpha={m['alpha']}, h={m['h']})", "",
            "| metric | value |", "|---|---|",
            f"| holdout anchors | {m['n']} |",
            f"| AUC ROC | {m['auc_roc']:.3f} (random 0.500) |",
            f"| AUC PR | {m['auc_pr']:.3f} (random {m['eps']:.3f}) |",
            f"| AUC PR - eps | {m['auc_pr_minus_eps']:+.3f} |",
            f"| folds | {len(m['folds'])} ({len(m['degenerate_folds'])} single-class) |",
        ]
        for curve in ("roc", "pr"):
            p = directory / f"{curve}.csv"
            if p.exists():
                n = len(p.read_text().splitlines()) - 1
                lines.append(f"| {curve.upper()} curve points | {n} |")
    else:
        raise MissingDataError(f"{directory} holds neither sweep.csv nor metrics.json")
    return "\n".join(lines) + "\n"


def cmd_report(args):
    text = render_report(_existing(args.input), args.h)
    sys.stdout.write(text)
    if args.out:
        with atomic_output(args.out) as tmp:
            (tmp / "report.md").write_text(text)
            write_manifest(tmp, "report", _args_snapshot(args), None)
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _existing(path):
    p = Path(path)
    if not p.exists():
        raise MissingDataError(f"{p} does not exist")
    return p


def _args_snapshot(args):
    skip = {"func", "verbose"}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k not in skip and k != "out"}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", help="run configuration (TOML); env vars %s<SECTION>__<KEY> override keys" % ENV_PREFIX)
    g.add_argument("--seed", type=int, default=None, help="RNG seed (default: run.seed from config, else 0)")
    g.add_argument("--out", default=None, help="output directory (default: run.out from config)")
    g.add_argument("--threads", type=int, default=None, help="worker threads for folds (default: run.threads, else 1)")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="ewi", description=__doc__.splitlines()[0], formatter_class=fmt)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_, description=help_, formatter_class=fmt)
        p.set_defaults(func=func)
        return p

    p = add("ingest", cmd_ingest, "ledger -> users -> evolution matrix")
    p.add_argument("--ledger", required=True, help="line-delimited JSON ledger")
    p.add_argument("--encoding", choices=("node", "edge"), default="node", help="snapshot encoding")
    p.add_argument("--min-tx", type=int, default=100, help="minimum transactions per long-term user")
    p.add_argument("--min-span", type=int, default=600, help="minimum days between first and last activity")
    p.add_argument("--active-before", type=int, default=None, help="day index first activity must precede")

    p = add("label", cmd_label, "Garman-Klass volatility and extreme-event labels")
    p.add_argument("--ohlc", required=True, help="CSV with date,open,high,low,close")
    p.add_argument("--alpha", type=float, default=0.1, help="extreme volatility threshold")
    p.add_argument("--h", type=int, default=1, help="horizon in days")
    p.add_argument("--epoch", default="1970-01-01", help="date of day index 0")

    p = add("decompose", cmd_decompose, "robust L2,1 NMF of an evolution matrix")
    p.add_argument("--in", dest="input", required=True, help="matrix directory (X.npy + sidecars)")
    p.add_argument("--k", type=int, default=10, help="rank")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="L2,1 weight on H")
    p.add_argument("--max-iters", type=int, default=None, help="solver iteration cap (default 500)")
    p.add_argument("--rel-tol", type=float, default=None, help="relative objective change to stop (default 1e-4)")

    p = add("train", cmd_train, "fit an NMF-NLR model on one window")
    p.add_argument("--x", required=True, help="matrix directory")
    p.add_argument("--ohlc", required=True, help="CSV with date,open,high,low,close")
    p.add_argument("--k", type=int, default=10, help="number of factors")
    p.add_argument("--delta", type=int, default=5, help="auto-regressive order")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0, help="L2,1 weight on H")
    p.add_argument("--lam-c", type=float, default=1e-3, help="sparsity weight on coefficients")
    p.add_argument("--train-days", type=int, default=None, help="use only the last N days (default: all)")
    p.add_argument("--epoch", default="1970-01-01", help="date of day index 0")
    p.add_argument("--max-iters", type=int, default=None, help="solver iteration cap (default 500)")
    p.add_argument("--rel-tol", type=float, default=None, help="relative objective change to stop (default 1e-4)")

    add("backtest", cmd_backtest, "rolling-window backtest of one indicator")
    add("sweep", cmd_sweep, "sensitivity sweep over alpha, h, k and delta (profiles: %s)" % ", ".join(sorted(PROFILES)))

    p = add("evaluate", cmd_evaluate, "ROC and PR curves for a score file against a label file")
    p.add_argument("--scores", required=True, help="CSV with day,score")
    p.add_argument("--labels", required=True, help="CSV with day,label")

    p = add("synth", cmd_synth, "synthetic matrix + OHLC data with a planted signal")
    p.add_argument("--spec", default=None, help="TOML synth spec (keys of SynthSpec, optionally under [synth])")

    p = add("report", cmd_report, "render a sweep or backtest directory as a summary table")
    p.add_argument("--in", dest="input", required=True, help="sweep or backtest output directory")
    p.add_argument("--h", type=int, default=1, help="horizon to tabulate")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"ewi {args.command}: configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except MissingDataError as e:
        print(f"ewi {args.command}: missing input: {e}", file=sys.stderr)
        return EXIT_MISSING
    except (DataError, ValueError) as e:
        print(f"ewi {args.command}: invalid data: {e}", file=sys.stderr)
        return EXIT_DATA
    except Exception as e:  # noqa: BLE001
        log.exception("unexpected failure")
        print(f"ewi {args.command}: error: {e}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
