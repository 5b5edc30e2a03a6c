"""``fnce`` command-line interface.

Machine-readable CSV goes to stdout (or the configured ``out_path``);
everything else, including the resolved configuration, goes to stderr.
"""
import argparse
import csv
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import data_io
from .errors import ConfigValueError, FocalInfoNCEError
from .metrics import evaluate_sts
from .objective import (
    GRAD_CHECK_TOL,
    LossConfig,
    effective_logit,
    grad_check,
    loss_gradient,
    random_instance,
    relative_error,
)
from .synthetic import synth_anisotropic, synth_sts
from .trainer import ProjectionHead, format_value, train

logger = logging.getLogger("fnce")

SEED_ENV = "FNCE_SEED"
SWEEP_FIELDS = ("tau", "m", "final_loss", "spearman", "alignment", "uniformity")
EVAL_FIELDS = ("spearman", "alignment", "uniformity", "n_pairs", "n_positive_pairs", "n_embeddings")
FAULT_SIZE = 1e-3


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _flatten(groups):
    return [v for group in groups for v in group]


def _write_csv(rows, header, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_value(row[k]) for k in header])


def _seed_override():
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        seed = int(raw.strip(), 10)
    except ValueError:
        raise ConfigValueError(f"{SEED_ENV}={raw!r} is not an integer") from None
    return {"seed": seed}


def load_config(path):
    return data_io.read_config(path, overrides=_seed_override())


def load_dataset(cfg, need_pairs=False):
    """(store, pairs) for a run: files when configured, synthetic data otherwise.

    ``pairs`` is None when neither a pair file nor the ``sts`` generator
    supplies gold scores.
    """
    if cfg.embeddings_path is not None:
        store = data_io.read_embeddings(cfg.embeddings_path)
        pairs = data_io.read_pairs(cfg.pairs_path) if cfg.pairs_path is not None else None
    elif cfg.synth == "sts":
        store, pairs = synth_sts(cfg.synth_n, cfg.synth_d, cfg.synth_pairs, cfg.synth_anisotropy, cfg.seed)
        if cfg.pairs_path is not None:
            pairs = data_io.read_pairs(cfg.pairs_path)
    else:
        x = synth_anisotropic(cfg.synth_n, cfg.synth_d, cfg.synth_anisotropy, cfg.seed)
        store = data_io.EmbeddingStore([f"s{i:05d}" for i in range(x.shape[0])], x)
        pairs = data_io.read_pairs(cfg.pairs_path) if cfg.pairs_path is not None else None
    if need_pairs and pairs is None:
        raise ConfigValueError("evaluation needs pairs_path or synth=sts")
    return store, pairs


def head_path_for(cfg):
    if cfg.head_path is not None:
        return Path(cfg.head_path)
    if cfg.out_path is not None:
        return Path(cfg.out_path).with_suffix(".npz")
    return None


def run_training(cfg, store):
    head = ProjectionHead.init(store.d, seed=cfg.seed)
    return train(head, store.matrix, cfg.train_config())


def cmd_train(args):
    cfg = load_config(args.config)
    store, _ = load_dataset(cfg)
    head, trace = run_training(cfg, store)
    if cfg.out_path is not None:
        with open(cfg.out_path, "w", newline="", encoding="utf-8") as fh:
            trace.to_csv(fh)
    else:
        trace.to_csv(sys.stdout)
    target = head_path_for(cfg)
    if target is not None:
        head.save(target)
        logger.info("head saved to %s", target)
    if trace.rows:
        first, last = trace.rows[0], trace.rows[-1]
        logger.info(
            "final loss %.6g (initial %.6g); mean s_p %.4f -> %.4f; mean s_n %.4f -> %.4f; "
            "alignment %.4f; uniformity %.4f",
            last["loss"], first["loss"], first["mean_sp"], last["mean_sp"],
            first["mean_sn"], last["mean_sn"], last["alignment"], last["uniformity"],
        )
    else:
        logger.info("steps=0: nothing trained")
    return 0


def cmd_eval(args):
    cfg = load_config(args.config)
    store, pairs = load_dataset(cfg, need_pairs=True)
    head = None
    if cfg.head_path is not None:
        head = ProjectionHead.load(cfg.head_path)
    report = evaluate_sts(store, pairs, cfg.positive_threshold, transform=head)
    logger.info(
        "spearman %.6f  alignment %.6f  uniformity %.6f  (%d pairs, %d positive, %d embeddings)",
        report.spearman, report.alignment, report.uniformity,
        report.n_pairs, report.n_positive_pairs, report.n_embeddings,
    )
    _write_csv([report.as_row()], EVAL_FIELDS, sys.stdout)
    return 0


def cmd_gradcheck(args):
    cfg = LossConfig(args.loss, args.tau, args.m)
    rng = np.random.default_rng(args.seed)
    header = ("trial", "n", "d", "max_rel_err", "mean_rel_err", "passed", "printed_max_rel_err")
    rows = []
    for trial in range(args.trials):
        sim = random_instance(rng, args.n, args.d)
        analytic = loss_gradient(sim, cfg)
        if args.inject_fault:
            analytic = analytic.copy()
            analytic[0, 0] += FAULT_SIZE
        report = grad_check(sim, cfg, analytic=analytic)
        row = {
            "trial": trial,
            "n": args.n,
            "d": args.d,
            "max_rel_err": report.max_rel_err,
            "mean_rel_err": report.mean_rel_err,
            "passed": int(report.passed),
            "printed_max_rel_err": "",
        }
        if cfg.kind.value == "focal":
            printed = loss_gradient(sim, cfg, form="printed")
            row["printed_max_rel_err"] = float(relative_error(printed, report.numeric).max())
        rows.append(row)
    _write_csv(rows, header, sys.stdout)

    worst = max(r["max_rel_err"] for r in rows) if rows else 0.0
    mean = float(np.mean([r["mean_rel_err"] for r in rows])) if rows else 0.0
    failures = sum(1 for r in rows if not r["passed"])
    logger.info("exact gradient: max rel err %.3g, mean rel err %.3g over %d trials (tolerance %g)",
                worst, mean, len(rows), GRAD_CHECK_TOL)
    printed = [r["printed_max_rel_err"] for r in rows if r["printed_max_rel_err"] != ""]
    if printed:
        logger.info("printed closed form (factor 2(s+m), row sum) vs finite differences: max rel err %.3g", max(printed))
    if failures:
        logger.error("%d of %d trials failed the gradient check", failures, len(rows))
        return 1
    return 0


def sweep_rows(cfg, taus, ms, store=None, pairs=None):
    """Train and evaluate once per ``(tau, m)`` grid point, in grid order.

    All grid points share the dataset and the seed.  With gold pairs the
    metrics come from `evaluate_sts`; otherwise alignment and uniformity
    describe the final training batch and spearman is left empty.
    """
    if store is None:
        store, pairs = load_dataset(cfg)
    rows = []
    for tau in taus:
        for m in ms:
            point = data_io.replace_config(cfg, tau=tau, m=m, log_every=max(cfg.steps, 1))
            head, trace = run_training(point, store)
            row = {"tau": tau, "m": m, "final_loss": float("nan"), "spearman": "",
                   "alignment": float("nan"), "uniformity": float("nan")}
            if trace.rows:
                last = trace.rows[-1]
                row.update(final_loss=last["loss"], alignment=last["alignment"],
                           uniformity=last["uniformity"])
            if pairs is not None:
                report = evaluate_sts(store, pairs, cfg.positive_threshold, transform=head)
                row.update(spearman=report.spearman, alignment=report.alignment,
                           uniformity=report.uniformity)
            logger.info("tau=%g m=%g: final loss %s, spearman %s", tau, m,
                        format_value(row["final_loss"]), format_value(row["spearman"]))
            rows.append(row)
    return rows


def cmd_sweep(args):
    cfg = load_config(args.config)
    taus = _flatten(args.tau) if args.tau else [cfg.tau]
    ms = _flatten(args.m) if args.m else [cfg.m]
    for tau in taus:
        for m in ms:
            LossConfig(cfg.loss, tau, m)
    rows = sweep_rows(cfg, taus, ms)
    if cfg.out_path is not None:
        with open(cfg.out_path, "w", newline="", encoding="utf-8") as fh:
            _write_csv(rows, SWEEP_FIELDS, fh)
    else:
        _write_csv(rows, SWEEP_FIELDS, sys.stdout)
    return 0


def reweight_curve(ms, resolution):
    """Rows ``(m, s, g(s), s)`` on ``s = k / (resolution - 1)``, ``k = 0..resolution-1``."""
    grid = np.arange(resolution) / (resolution - 1)
    rows = []
    for m in ms:
        for s in grid:
            rows.append({"m": m, "s": float(s), "g": float(effective_logit(s, m)), "identity": float(s)})
    return rows


def cmd_reweight_curve(args, parser):
    ms = _flatten(args.m)
    bad = [m for m in ms if not 0.0 <= m <= 1.0]
    if bad:
        parser.error(f"--m values must lie in [0, 1], got {bad[0]!r}")
    if args.resolution < 2:
        parser.error("--resolution must be at least 2")
    rows = reweight_curve(ms, args.resolution)
    header = ("m", "s", "g", "identity")
    if args.out is not None:
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            _write_csv(rows, header, fh)
    else:
        _write_csv(rows, header, sys.stdout)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="fnce",
        description="Focal-InfoNCE training, evaluation and verification tools.",
    )
    parser.add_argument("-q", "--quiet", action="store_true", help="only report errors on stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("train", help="train a projection head and write its trace CSV")
    p.add_argument("--config", required=True, help="key=value run configuration")

    p = sub.add_parser("eval", help="evaluate embeddings (optionally through a head) on STS pairs")
    p.add_argument("--config", required=True)

    p = sub.add_parser("gradcheck", help="compare analytic and finite-difference gradients")
    p.add_argument("--n", type=int, default=8, help="batch size of each random instance")
    p.add_argument("--d", type=int, default=16, help="embedding dimension")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--tau", type=float, default=0.05)
    p.add_argument("--m", type=float, default=0.3)
    p.add_argument("--loss", default="focal", help="focal or infonce")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)

    p = sub.add_parser("sweep", help="train and evaluate over a tau x m grid")
    p.add_argument("--config", required=True)
    p.add_argument("--tau", type=_float_list, nargs="+", help="temperatures, comma or space separated")
    p.add_argument("--m", type=_float_list, nargs="+", help="hardness values, comma or space separated")

    p = sub.add_parser("reweight-curve", help="emit s, s(s+m) and the identity on [0, 1]")
    p.add_argument("--m", type=_float_list, nargs="+", required=True)
    p.add_argument("--resolution", type=int, default=101, help="points per m value")
    p.add_argument("--out", help="write CSV here instead of stdout")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.ERROR if args.quiet else logging.INFO,
        stream=sys.stderr,
        format="%(message)s",
        force=True,
    )
    if args.command == "gradcheck":
        if args.n < 1 or args.d < 1 or args.trials < 0:
            parser.error("--n and --d must be positive and --trials non-negative")
    try:
        if args.command == "train":
            return cmd_train(args)
        if args.command == "eval":
            return cmd_eval(args)
        if args.command == "gradcheck":
            return cmd_gradcheck(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        return cmd_reweight_curve(args, parser)
    except (FocalInfoNCEError, OSError) as exc:
        print(f"fnce: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
