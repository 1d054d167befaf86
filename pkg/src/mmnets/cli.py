"""Command-line entry point: data generation, training, evaluation,
single-image translation, gradient verification, and report rendering.

Exit codes: 0 on success, 1 on usage errors, 2 on validation failures
(bad config, missing checkpoint, gradient error above tolerance, ...).

The ``MMNETS_THREADS`` environment variable caps the BLAS worker count; it
is applied before numpy is imported so it always takes effect when the
console script is the process entry point.
"""

from __future__ import annotations

import os

_threads = os.environ.get("MMNETS_THREADS")
if _threads:
    for _var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

import argparse
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import config as C
from . import data as D
from . import figures as F
from . import metrics as M
from . import trainer as T
from .gradsuite import TOLERANCE, run_gradient_suite

DEPTH_COLUMNS = ["delta1", "delta2", "delta3", "rmse_lin", "rmse_log"]


class CliError(Exception):
    """Validation failure with an actionable message; maps to exit code 2."""


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

def _load_config(args) -> C.ExperimentConfig:
    if getattr(args, "config", None):
        cfg = C.parse_config(args.config)
    else:
        cfg = C.ExperimentConfig()
        cfg.validate()
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "out", None):
        cfg.paths.out_dir = args.out
    return cfg


def _run_dir(cfg, create=True) -> Path:
    out = Path(cfg.paths.out_dir)
    if create:
        out.mkdir(parents=True, exist_ok=True)
        (out / "checkpoints").mkdir(exist_ok=True)
        (out / "images").mkdir(exist_ok=True)
    return out


def _append_run_info(out: Path, line: str):
    """The single file allowed to contain timestamps."""
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    with open(out / "run_info.txt", "a", encoding="ascii") as f:
        f.write(f"{stamp} {line}\n")


def _make_split(cfg, seed):
    if cfg.data.task == "scenes":
        scene_cfg = D.SceneConfig(k=cfg.data.k)
        return D.make_splits(cfg.data.n_train, cfg.data.n_test, seed,
                             config=scene_cfg)
    return D.make_opponent_splits(cfg.data.n_train, cfg.data.n_test, seed)


def _build_state(cfg, seed):
    return T.build_train_state(cfg.task(), arch=cfg.arch, seed=seed)


def _load_state(cfg, checkpoint_path) -> T.TrainState:
    path = Path(checkpoint_path)
    if not path.exists():
        raise CliError(
            f"checkpoint {path} not found; run 'mmnets train' first or pass "
            f"--checkpoint explicitly")
    state = _build_state(cfg, seed=cfg.seed)
    T.load_checkpoint(path, state)
    return state


# ---------------------------------------------------------------------------
# gen-data
# ---------------------------------------------------------------------------

def _write_scene_files(split, out: Path, manifest):
    for i, (rgb, seg) in enumerate(split.d_rs):
        for name, arr in (("rgb", rgb), ("seg", seg.astype(np.float32)[None])):
            p = out / f"train_rs_{i:04d}_{name}.raw"
            D.write_raw(p, arr)
            manifest.append(("train_rs", i, name, p.name, arr.shape))
    for i, (rgb, depth) in enumerate(split.d_rd):
        for name, arr in (("rgb", rgb), ("depth", depth)):
            p = out / f"train_rd_{i:04d}_{name}.raw"
            D.write_raw(p, arr)
            manifest.append(("train_rd", i, name, p.name, arr.shape))
    for i, t in enumerate(split.d_ds_test):
        for name, arr in (("rgb", t.rgb), ("seg", t.seg.astype(np.float32)[None]),
                          ("depth", t.depth)):
            p = out / f"test_{i:04d}_{name}.raw"
            D.write_raw(p, arr)
            manifest.append(("test", i, name, p.name, arr.shape))


def _write_opponent_files(split, out: Path, manifest):
    for kind, rows in (("train_12", split.d_12), ("train_13", split.d_13)):
        names = ("theta1", "theta2") if kind == "train_12" else ("theta1", "theta3")
        for i, pair in enumerate(rows):
            for name, arr in zip(names, pair):
                p = out / f"{kind}_{i:04d}_{name}.raw"
                D.write_raw(p, arr)
                manifest.append((kind, i, name, p.name, arr.shape))
    for i, s in enumerate(split.test):
        for name, arr in (("theta1", s.theta1), ("theta2", s.theta2),
                          ("theta3", s.theta3)):
            p = out / f"test_{i:04d}_{name}.raw"
            D.write_raw(p, arr)
            manifest.append(("test", i, name, p.name, arr.shape))


def _write_previews(cfg, split, out: Path, count=4):
    prev = out / "previews"
    prev.mkdir(exist_ok=True)
    if cfg.data.task == "scenes":
        for i, t in enumerate(split.d_ds_test[:count]):
            D.write_ppm(prev / f"test_{i:04d}_rgb.ppm", t.rgb)
            D.write_ppm(prev / f"test_{i:04d}_seg.ppm", F.labels_to_rgb(t.seg))
            D.write_pgm(prev / f"test_{i:04d}_depth.pgm", t.depth)
    else:
        for i, s in enumerate(split.test[:count]):
            D.write_ppm(prev / f"test_{i:04d}_theta3.ppm", s.theta3)


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.paths.data_dir or Path(cfg.paths.out_dir) / "data")
    out.mkdir(parents=True, exist_ok=True)
    split = _make_split(cfg, cfg.seed)
    manifest = []
    if cfg.data.task == "scenes":
        _write_scene_files(split, out, manifest)
    else:
        _write_opponent_files(split, out, manifest)
    _write_previews(cfg, split, out)
    lines = [f"# dataset manifest: task={cfg.data.task} seed={cfg.seed} "
             f"n_train={cfg.data.n_train} n_test={cfg.data.n_test}",
             "kind,index,modality,file,shape"]
    for kind, i, name, fname, shape in manifest:
        lines.append(f"{kind},{i},{name},{fname},{'x'.join(map(str, shape))}")
    (out / "manifest.csv").write_text("\n".join(lines) + "\n", encoding="ascii")
    print(f"wrote {len(manifest)} arrays + manifest to {out}")
    return 0


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = _load_config(args)
    out = _run_dir(cfg)
    (out / "config.snapshot").write_text(C.dump_config(cfg), encoding="ascii")
    split = _make_split(cfg, cfg.seed)
    state = _build_state(cfg, cfg.seed)
    start = time.perf_counter()
    T.run_schedule(state, cfg.stages, split,
                   log_every=args.log_every, monitor_every=args.monitor_every)
    elapsed = time.perf_counter() - start
    T.write_metric_log(state.history, out / "metrics.csv")
    ckpt = out / "checkpoints" / args.checkpoint_name
    T.save_checkpoint(ckpt, state)
    _append_run_info(out, f"train seed={cfg.seed} iterations={state.iteration} "
                          f"elapsed={elapsed:.1f}s checkpoint={ckpt.name}")
    print(f"trained {state.iteration} iterations in {elapsed:.1f}s; "
          f"checkpoint {ckpt}, metric log {out / 'metrics.csv'}")
    return 0


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def _eval_scenes(cfg, state, split, no_pp_state):
    test = split.d_ds_test
    depths = [t.depth for t in test]
    rgbs = [t.rgb for t in test]
    segs = [t.seg for t in test]
    gt_seg = np.stack(segs)
    gt_depth = np.stack(depths)
    k = cfg.data.k
    table = M.ReportTable(columns=M.seg_metrics_columns(k) + DEPTH_COLUMNS)

    def seg_row(label, probs):
        m = M.segmentation_metrics(np.argmax(probs, axis=1), gt_seg, k)
        table.add_row(label, M.seg_metrics_values(m) + [None] * len(DEPTH_COLUMNS))

    seg_row("D->S", T.translate_batch(state, "depth", "seg", depths))
    if cfg.eval.cascade:
        rgb_hat = T.translate_batch(state, "depth", "rgb", depths)
        seg_row("D->R->S", T.translate_batch(state, "rgb", "seg", list(rgb_hat)))
    pred_depth = T.translate_batch(state, "seg", "depth", segs)
    dm = M.depth_metrics(pred_depth, gt_depth)
    table.add_row("S->D", [None] * (k + 2) + [dm.delta1, dm.delta2, dm.delta3,
                                              dm.rmse_lin, dm.rmse_log])
    fused = T.fused_translate_batch(state, ("rgb", "depth"), "seg", rgbs,
                                    depths, alpha=cfg.eval.alpha,
                                    indices_from="rgb")
    seg_row("fused(R+D)->S", fused)
    if no_pp_state is not None:
        seg_row("no_pp:D->S",
                T.translate_batch(no_pp_state, "depth", "seg", depths))
    return table


def _eval_opponent(cfg, state, split, no_pp_state):
    test = split.test
    labels = [s.class_label for s in test]
    n_classes = D.OpponentConfig().n_classes
    oracle = M.ColorShapeOracle().fit(
        [t3 for _, t3 in split.d_13],
        [sid % n_classes for sid in split.ids_13])
    t1s = [s.theta1 for s in test]
    t2s = [s.theta2 for s in test]
    table = M.ReportTable(columns=["accuracy"])

    def acc_row(label, images):
        table.add_row(label, [M.opponent_accuracy(list(images), labels, oracle)])

    acc_row("oracle-self", [s.theta3 for s in test])
    acc_row("T2->T3", T.translate_batch(state, "theta2", "theta3", t2s))
    if cfg.eval.cascade:
        t1_hat = T.translate_batch(state, "theta2", "theta1", t2s)
        acc_row("T2->T1->T3",
                T.translate_batch(state, "theta1", "theta3", list(t1_hat)))
    acc_row("fused(T1+T2)->T3",
            T.fused_translate_batch(state, ("theta1", "theta2"), "theta3",
                                    t1s, t2s, alpha=cfg.eval.alpha,
                                    indices_from="theta1"))
    if no_pp_state is not None:
        acc_row("no_pp:T2->T3",
                T.translate_batch(no_pp_state, "theta2", "theta3", t2s))
    return table


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    out = _run_dir(cfg)
    ckpt = args.checkpoint or out / "checkpoints" / "final.mmnc"
    state = _load_state(cfg, ckpt)
    no_pp_state = None
    if cfg.eval.no_pp:
        no_pp_path = out / "checkpoints" / "final_no_pp.mmnc"
        if not no_pp_path.exists():
            raise CliError(
                f"pseudo-pair ablation requested (eval.baselines.no_pp) but "
                f"{no_pp_path} is missing; train one with "
                f"'stages.3.weights.pp = 0' and "
                f"'mmnets train --checkpoint-name final_no_pp.mmnc'")
        no_pp_state = _load_state(cfg, no_pp_path)
    split = _make_split(cfg, cfg.seed)
    if cfg.data.task == "scenes":
        table = _eval_scenes(cfg, state, split, no_pp_state)
    else:
        table = _eval_opponent(cfg, state, split, no_pp_state)
    M.emit_report(table, out / "report.txt", fmt="text-table")
    M.emit_report(table, out / "report.csv", fmt="csv")
    _append_run_info(out, f"eval checkpoint={Path(ckpt).name} "
                          f"rows={len(table.rows)}")
    print((out / "report.txt").read_text(), end="")
    return 0


# ---------------------------------------------------------------------------
# translate
# ---------------------------------------------------------------------------

def cmd_translate(args) -> int:
    cfg = _load_config(args)
    out = _run_dir(cfg)
    mods = {m.spec.name: m for m in cfg.task().all}
    for role, name in (("--from", args.src), ("--to", args.dst)):
        if name not in mods:
            raise CliError(f"{role} {name!r} is not a modality of the "
                           f"{cfg.data.task!r} task; choose from "
                           f"{sorted(mods)}")
    state = _load_state(cfg, args.checkpoint or out / "checkpoints" / "final.mmnc")
    image = D.load_image(args.input)
    src_spec = mods[args.src].spec
    if src_spec.output_activation == "softmax":                  # label plane input
        raw = image[0].astype(np.int64)
    elif image.shape[0] != src_spec.channels:
        raise CliError(f"input has {image.shape[0]} channels but modality "
                       f"{args.src!r} expects {src_spec.channels}")
    else:
        raw = image
    pred = T.translate_batch(state, args.src, args.dst, [raw])[0]
    out_path = Path(args.output)
    dst_spec = mods[args.dst].spec
    if out_path.suffix == ".raw":
        D.write_raw(out_path, pred)
    elif dst_spec.output_activation == "softmax":
        D.write_ppm(out_path, F.labels_to_rgb(np.argmax(pred, axis=0)))
    elif pred.shape[0] == 3:
        D.write_ppm(out_path, np.clip(pred, 0.0, 1.0))
    else:
        D.write_pgm(out_path, np.clip(pred, 0.0, 1.0))
    print(f"translated {args.input} ({args.src} -> {args.dst}) to {out_path}")
    return 0


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    start = time.perf_counter()
    results, worst = run_gradient_suite(seeds=range(args.seeds), tol=args.tol)
    elapsed = time.perf_counter() - start
    failures = [(name, seed, err) for name, seed, err in results
                if not err < args.tol]
    cases = sorted({name for name, _, _ in results})
    print(f"checked {len(cases)} cases x {args.seeds} seeds "
          f"({len(results)} runs) in {elapsed:.1f}s")
    print(f"max relative error {worst:.3e} (tolerance {args.tol:g})")
    if failures:
        for name, seed, err in failures[:20]:
            print(f"FAIL {name} seed={seed} err={err:.3e}", file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def _read_history(path: Path):
    lines = path.read_text(encoding="ascii").splitlines()
    columns = lines[0].split(",")
    if tuple(columns) != T.METRIC_COLUMNS:
        raise CliError(f"{path} does not look like a metric log "
                       f"(header {columns!r})")
    history = []
    for line in lines[1:]:
        parts = line.split(",")
        row = {}
        for col, cell in zip(columns, parts):
            row[col] = int(cell) if col in ("iteration", "stage") else float(cell)
        history.append(row)
    return history


def cmd_report(args) -> int:
    cfg = _load_config(args)
    out = _run_dir(cfg, create=False)
    log_path = out / "metrics.csv"
    if not log_path.exists():
        raise CliError(f"{log_path} not found; run 'mmnets train' first")
    history = _read_history(log_path)
    fig_paths = F.render_report_figures(history, out)
    ends = {}
    for row in history:                             # last row of each stage
        ends[row["stage"]] = row
    table = M.ReportTable(columns=["iteration", "loss_total", "af_rs",
                                   "af_rd", "af_ds"])
    for stage in sorted(ends):
        row = ends[stage]
        table.add_row(f"stage_{stage}_end",
                      [row["iteration"], row["loss_total"], row["af_rs"],
                       row["af_rd"], row["af_ds"]])
    summary_path = out / "training_summary.txt"
    M.emit_report(table, summary_path, fmt="text-table")
    print(summary_path.read_text(), end="")
    print("figures: " + ", ".join(str(p) for p in fig_paths))
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(p):
    p.add_argument("--config", metavar="PATH",
                   help="experiment config file (dotted keys); defaults apply "
                        "when omitted")
    p.add_argument("--seed", type=int, metavar="N", help="override config seed")
    p.add_argument("--out", metavar="DIR", help="override output directory")


def build_parser() -> _Parser:
    parser = _Parser(prog="mmnets",
                     description="Zero-pair cross-modal image translation "
                                 "experiments.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-data", help="generate a dataset and manifest")
    _add_common(p)
    p.set_defaults(fn=cmd_gen_data)

    p = sub.add_parser("train", help="run the staged schedule; write "
                                     "checkpoint and metric log")
    _add_common(p)
    p.add_argument("--log-every", type=int, default=10, metavar="N")
    p.add_argument("--monitor-every", type=int, default=250, metavar="N")
    p.add_argument("--checkpoint-name", default="final.mmnc", metavar="NAME")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="zero-pair, cascade, fusion, and "
                                    "ablation metrics on the test set")
    _add_common(p)
    p.add_argument("--checkpoint", metavar="PATH")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("translate", help="map one image file through an "
                                         "encoder/decoder pair")
    _add_common(p)
    p.add_argument("--from", dest="src", required=True, metavar="MODALITY")
    p.add_argument("--to", dest="dst", required=True, metavar="MODALITY")
    p.add_argument("--checkpoint", metavar="PATH")
    p.add_argument("input", help="source image (raw f32 / PPM / PGM)")
    p.add_argument("output", help="destination image (.ppm/.pgm/.raw)")
    p.set_defaults(fn=cmd_translate)

    p = sub.add_parser("gradcheck", help="finite-difference check of every "
                                         "op and loss")
    p.add_argument("--seeds", type=int, default=10, metavar="N")
    p.add_argument("--tol", type=float, default=TOLERANCE, metavar="X")
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("report", help="render summary tables and figures "
                                      "from the metric log")
    _add_common(p)
    p.set_defaults(fn=cmd_report)
    return parser


def run_cli(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "fn", None):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.fn(args)
    except (CliError, C.ConfigError, T.CheckpointError, D.ImageFormatError,
            FileNotFoundError, ValueError) as exc:
        print(f"mmnets: error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run_cli(sys.argv[1:]))
