"""Benchmark command line: gen, train, eval, ablate, fieldest, gradcheck.

Every command is a pure function of (argv, input files); there is no clock or
OS entropy anywhere, so reruns produce byte-identical outputs. Exit codes:
0 success, 1 check failure, 2 usage error, 3 IO/parse error.

Option precedence: explicit CLI flags > --config JSON file > built-in
defaults.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from .gradcheck import run_gradcheck
from .losses import LOSS_NAMES, parse_loss
from .metrics import (
    METRIC_NAMES,
    MetricError,
    MetricRow,
    asd,
    confusion,
    dice,
    hd95,
    rates,
    wilcoxon_signed_rank,
)
from .predictor import FeatureConfig, extract_features, forward, load_params, save_params
from .rng import Rng, sub_seed
from .synthetic import (
    CorruptionSpec,
    IntensitySpec,
    ShapeSpec,
    gen_dataset,
    gen_shape,
    load_dataset,
    save_dataset,
)
from .tdist import TLossMode
from .trainer import TrainConfig, field_estimate, train
from .volumes import BinaryMask, Dims, MvolError, ProbabilityMask, binarize

P_SIGNIFICANT = 0.05


class UsageError(ValueError):
    pass


def _fmt(x) -> str:
    """Round-trip decimal formatting for CSV cells."""
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _parse_ints(text, n, what) -> tuple[int, ...]:
    if isinstance(text, (list, tuple)):
        vals = [int(v) for v in text]
    else:
        vals = [int(v) for v in str(text).split(",")]
    if len(vals) == 1 and n == 3:
        vals = vals * 3
    if len(vals) != n:
        raise UsageError(f"{what} expects {n} comma-separated integers, got {text!r}")
    return tuple(vals)


def _parse_floats(text, n, what) -> tuple[float, ...]:
    if isinstance(text, (list, tuple)):
        vals = [float(v) for v in text]
    else:
        vals = [float(v) for v in str(text).split(",")]
    if len(vals) == 1 and n == 3:
        vals = vals * 3
    if len(vals) != n:
        raise UsageError(f"{what} expects {n} comma-separated values, got {text!r}")
    return tuple(vals)


def _parse_mode(text) -> TLossMode:
    try:
        return TLossMode(str(text))
    except ValueError:
        raise UsageError(f"--mode must be 'pervoxel' or 'multivariate', got {text!r}") from None


def _parse_losses(text) -> list[str]:
    names = [t.strip().lower() for t in (text.split(",") if isinstance(text, str) else text)]
    for name in names:
        if name not in LOSS_NAMES:
            raise UsageError(f"unknown loss {name!r}; expected one of {', '.join(LOSS_NAMES)}")
    return names


def _split_counts(split, n) -> tuple[int, int, int]:
    """Train/val/test sizes from counts or fractions; default 2/3, 1/6, 1/6."""
    if split is None:
        n_train = round(n * 2.0 / 3.0)
        n_val = round(n / 6.0)
    else:
        vals = _parse_floats(split, 3, "--split")
        if all(float(v).is_integer() for v in vals) and sum(vals) == n:
            n_train, n_val = int(vals[0]), int(vals[1])
        elif abs(sum(vals) - 1.0) < 1e-9:
            n_train, n_val = round(n * vals[0]), round(n * vals[1])
        else:
            raise UsageError(
                f"--split must be counts summing to {n} or fractions summing to 1, got {split!r}"
            )
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise UsageError(f"split ({n_train},{n_val},{n_test}) leaves an empty subset")
    return n_train, n_val, n_test


def _resolved(args, defaults: dict) -> dict:
    """CLI flag > config-file entry > default, per key."""
    config = {}
    path = getattr(args, "config", None)
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
        unknown = set(config) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    out = {}
    for key, default in defaults.items():
        cli = getattr(args, key, None)
        if cli is not None:
            out[key] = cli
        elif key in config:
            out[key] = config[key]
        else:
            out[key] = default
    return out


def _print_table(headers, rows) -> None:
    cells = [[str(h) for h in headers]] + [[str(c) for c in row] for row in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]
    for row in cells:
        print("  ".join(c.ljust(w) for c, w in zip(row, widths)))


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(c) for c in row])


def _write_json(path, payload) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- commands


_GEN_DEFAULTS = {
    "seed": 7,
    "n": 60,
    "dims": "32",
    "spacing": "1,1,1",
    "lobes": 3,
    "sigma_range": "3,6",
    "threshold": 0.35,
    "flip_rate": 0.15,
    "blobs": 3,
    "blob_radius": 3,
    "morph_range": "-1,2",
    "drop_prob": 0.15,
    "fg_mean": 1.0,
    "bg_mean": 0.0,
    "noise_sd": 0.2,
}


def cmd_gen(args) -> int:
    opt = _resolved(args, _GEN_DEFAULTS)
    if args.out is None:
        raise UsageError("gen requires --out")
    n = int(opt["n"])
    if n < 1:
        raise UsageError(f"--n must be >= 1, got {n}")
    dims = Dims(*_parse_ints(opt["dims"], 3, "--dims"))
    spacing = _parse_floats(opt["spacing"], 3, "--spacing")
    shape_spec = ShapeSpec(
        dims=dims,
        n_lobes=int(opt["lobes"]),
        lobe_sigma_range=_parse_floats(opt["sigma_range"], 2, "--sigma-range"),
        threshold=float(opt["threshold"]),
    )
    morph_lo, morph_hi = _parse_ints(opt["morph_range"], 2, "--morph-range")
    max_radius = max(abs(morph_lo), abs(morph_hi))
    if max_radius > min(dims.as_tuple()) / 4:
        raise UsageError(
            f"--morph-range radius {max_radius} exceeds min dim {min(dims.as_tuple())} / 4"
        )
    corruption = CorruptionSpec(
        boundary_flip_rate=float(opt["flip_rate"]),
        outlier_blob_count=int(opt["blobs"]),
        outlier_blob_radius=int(opt["blob_radius"]),
        morph_radius_range=(morph_lo, morph_hi),
        drop_component_prob=float(opt["drop_prob"]),
    )
    intensity = IntensitySpec(
        fg_mean=float(opt["fg_mean"]),
        bg_mean=float(opt["bg_mean"]),
        noise_sd=float(opt["noise_sd"]),
    )
    samples = gen_dataset(int(opt["seed"]), n, shape_spec, corruption, intensity, spacing)
    save_dataset(args.out, samples, int(opt["seed"]), shape_spec, corruption, intensity, spacing)
    weak_dice = [dice(s.weak, s.gt) for s in samples]
    print(f"wrote {n} samples to {args.out}")
    print(f"mean Dice(weak, gt) = {np.mean(weak_dice):.4f}")
    return 0


_TRAIN_DEFAULTS = {
    "seed": 1,
    "loss": "tdist",
    "mode": "pervoxel",
    "lr_theta": 1e-3,
    "lr_r": 1e-4,
    "lr_sigma": 1e-4,
    "epochs": 600,
    "patience": 20,
    "min_delta": 1e-5,
    "tau": 0.5,
    "augment": True,
    "scale_scope": "voxel",
    "stop_criterion": "tdist",
    "hidden": 16,
    "focal_alpha": 0.25,
    "focal_gamma": 2.0,
    "split": None,
}


def _train_config_from(opt) -> TrainConfig:
    kind = parse_loss(
        str(opt["loss"]),
        alpha=float(opt["focal_alpha"]),
        gamma=float(opt["focal_gamma"]),
        mode=_parse_mode(opt["mode"]),
    )
    return TrainConfig(
        loss=kind,
        lr_theta=float(opt["lr_theta"]),
        lr_r=float(opt["lr_r"]),
        lr_sigma=float(opt["lr_sigma"]),
        max_epochs=int(opt["epochs"]),
        patience=int(opt["patience"]),
        min_delta=float(opt["min_delta"]),
        tau=float(opt["tau"]),
        augment=bool(opt["augment"]),
        seed=int(opt["seed"]),
        scale_scope=str(opt["scale_scope"]),
        stop_criterion=str(opt["stop_criterion"]),
        hidden=int(opt["hidden"]),
    )


def _load_splits(data_dir, split):
    samples, manifest = load_dataset(data_dir)
    names = manifest["samples"]
    n_train, n_val, n_test = _split_counts(split, len(samples))
    cut1, cut2 = n_train, n_train + n_val
    return (
        (samples[:cut1], names[:cut1]),
        (samples[cut1:cut2], names[cut1:cut2]),
        (samples[cut2:], names[cut2:]),
        manifest,
    )


def cmd_train(args) -> int:
    opt = _resolved(args, _TRAIN_DEFAULTS)
    if args.data is None or args.out is None:
        raise UsageError("train requires --data and --out")
    try:
        cfg = _train_config_from(opt)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    (train_split, _), (val_split, _), _, _ = _load_splits(args.data, opt["split"])
    outcome = train(train_split, val_split, cfg)
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "report.json"), outcome.report.to_dict())
    save_params(os.path.join(args.out, "best.mprm"), outcome.params)
    print(
        f"loss={cfg.loss.name} stopped_epoch={outcome.report.stopped_epoch} "
        f"best_epoch={outcome.report.best_epoch} best_val={outcome.report.best_val:.6f} "
        f"final_r={outcome.report.final_r:.4f}"
    )
    return 0


def _metric_row(pred: BinaryMask, gt: BinaryMask) -> tuple[MetricRow, list[str]]:
    row = MetricRow()
    failures = []
    try:
        row.dice = dice(pred, gt)
    except MetricError:
        failures.append("dice")
    try:
        r = rates(confusion(pred, gt))
        row.iou, row.acc, row.pre, row.sen, row.spe = r
    except MetricError:
        failures.extend(["iou", "acc", "pre", "sen", "spe"])
    try:
        row.hd95 = hd95(pred, gt)
        row.asd = asd(pred, gt)
    except MetricError:
        failures.extend(["hd95", "asd"])
    return row, failures


def _eval_params_on(samples, params, feature_cfg, tau, spacing_override):
    rows = []
    warnings = 0
    for sample in samples:
        feats = extract_features(sample.intensity, feature_cfg)
        mu = forward(params, feats)
        spacing = spacing_override or sample.intensity.spacing
        pred = binarize(ProbabilityMask(sample.intensity.dims, spacing, mu), tau)
        gt = BinaryMask(sample.gt.dims, spacing, sample.gt.data)
        row, failures = _metric_row(pred, gt)
        warnings += len(failures)
        rows.append(row)
    return rows, warnings


def _mean_sd(values) -> tuple[float | None, float | None]:
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    arr = np.array(vals, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


_EVAL_DEFAULTS = {
    "tau": 0.5,
    "spacing": None,
    "split": None,
    "subset": "test",
}


def cmd_eval(args) -> int:
    opt = _resolved(args, _EVAL_DEFAULTS)
    if args.data is None or args.params is None or args.out is None:
        raise UsageError("eval requires --data, --params and --out")
    if opt["subset"] not in ("train", "val", "test"):
        raise UsageError(f"--subset must be train, val or test, got {opt['subset']!r}")
    params = load_params(args.params)
    splits = _load_splits(args.data, opt["split"])
    subset, names = {"train": splits[0], "val": splits[1], "test": splits[2]}[opt["subset"]]
    spacing = _parse_floats(opt["spacing"], 3, "--spacing") if opt["spacing"] else None
    rows, warnings = _eval_params_on(subset, params, FeatureConfig(), float(opt["tau"]), spacing)

    os.makedirs(args.out, exist_ok=True)
    csv_rows = [
        [name] + [getattr(row, m) for m in METRIC_NAMES]
        for name, row in zip(names, rows)
    ]
    _write_csv(os.path.join(args.out, "eval.csv"), ["sample"] + list(METRIC_NAMES), csv_rows)

    table_rows = []
    for metric in METRIC_NAMES:
        mean, sd = _mean_sd([getattr(r, metric) for r in rows])
        table_rows.append(
            [metric, "n/a" if mean is None else f"{mean:.4f}", "n/a" if sd is None else f"{sd:.4f}"]
        )
    _print_table(["metric", "mean", "sd"], table_rows)
    if warnings:
        print(f"warning: {warnings} undefined metric values excluded from means")
    return 0


_ABLATE_DEFAULTS = dict(_TRAIN_DEFAULTS, losses="ce,bce,focal,mse,mae,tdist")


def cmd_ablate(args) -> int:
    opt = _resolved(args, _ABLATE_DEFAULTS)
    if args.data is None or args.out is None:
        raise UsageError("ablate requires --data and --out")
    loss_names = _parse_losses(opt["losses"])
    (train_split, _), (val_split, _), (test_split, _), _ = _load_splits(args.data, opt["split"])
    os.makedirs(args.out, exist_ok=True)

    per_loss: dict[str, list[MetricRow]] = {}
    for name in loss_names:
        loss_opt = dict(opt, loss=name)
        cfg = _train_config_from(loss_opt)
        outcome = train(train_split, val_split, cfg)
        loss_dir = os.path.join(args.out, name)
        os.makedirs(loss_dir, exist_ok=True)
        _write_json(os.path.join(loss_dir, "report.json"), outcome.report.to_dict())
        save_params(os.path.join(loss_dir, "best.mprm"), outcome.params)
        rows, _ = _eval_params_on(test_split, outcome.params, FeatureConfig(), float(opt["tau"]), None)
        per_loss[name] = rows
        print(f"trained {name}: stopped_epoch={outcome.report.stopped_epoch}")

    def paired_p(name: str, metric: str) -> float | None:
        if name == "tdist" or "tdist" not in per_loss:
            return 1.0 if name == "tdist" else None
        pairs = [
            (getattr(a, metric), getattr(b, metric))
            for a, b in zip(per_loss[name], per_loss["tdist"])
            if getattr(a, metric) is not None and getattr(b, metric) is not None
        ]
        try:
            return wilcoxon_signed_rank([p[0] for p in pairs], [p[1] for p in pairs])[1]
        except (MetricError, ValueError):
            return None

    header = [
        "loss",
        "dice_mean",
        "dice_sd",
        "hd95_mean",
        "hd95_sd",
        "asd_mean",
        "asd_sd",
        "p_dice",
        "p_asd",
    ]
    csv_rows = []
    table_rows = []
    for name in loss_names:
        rows = per_loss[name]
        dice_m, dice_s = _mean_sd([r.dice for r in rows])
        hd_m, hd_s = _mean_sd([r.hd95 for r in rows])
        asd_m, asd_s = _mean_sd([r.asd for r in rows])
        p_dice = paired_p(name, "dice")
        p_asd = paired_p(name, "asd")
        csv_rows.append([name, dice_m, dice_s, hd_m, hd_s, asd_m, asd_s, p_dice, p_asd])

        def star(p):
            return "*" if p is not None and p <= P_SIGNIFICANT else ""

        def cell(mean, sd, p=None):
            if mean is None:
                return "n/a"
            text = f"{mean:.4f} +/- {sd:.4f}"
            return text + star(p)

        table_rows.append(
            [name, cell(dice_m, dice_s, p_dice), cell(hd_m, hd_s), cell(asd_m, asd_s, p_asd)]
        )
    _write_csv(os.path.join(args.out, "ablate.csv"), header, csv_rows)
    _print_table(["loss", "dice", "hd95", "asd"], table_rows)
    print(f"(* marks Wilcoxon p <= {P_SIGNIFICANT} vs tdist)")
    return 0


_FIELDEST_DEFAULTS = {
    "seed": 0,
    "n_seeds": 20,
    "contamination": 0.3,
    "labels": 10,
    "steps": 400,
    "lr": 0.05,
    "dims": "16",
    "tau": 0.5,
    "mode": "pervoxel",
    "losses": "ce,bce,focal,mse,mae,tdist",
    "lobes": 2,
    "sigma_range": "2.5,4.5",
    "threshold": 0.35,
    "lr_r": 1e-4,
    "lr_sigma": 1e-4,
    "scale_scope": "scalar",
}


def _fieldest_labels(rng: Rng, shape_spec: ShapeSpec, n_labels: int, contamination: float):
    """Ground truth plus its label set: clean replicas with the leading
    round(contamination * n) replaced by iid Bernoulli(0.5) noise masks."""
    gt = gen_shape(rng, shape_spec)
    n_noise = round(contamination * n_labels)
    labels = []
    for j in range(n_labels):
        if j < n_noise:
            bits = np.array(
                [1 if rng.uniform() < 0.5 else 0 for _ in range(gt.dims.count)],
                dtype=np.uint8,
            ).reshape(gt.data.shape)
            labels.append(BinaryMask(gt.dims, gt.spacing, bits))
        else:
            labels.append(gt)
    return gt, labels


def cmd_fieldest(args) -> int:
    opt = _resolved(args, _FIELDEST_DEFAULTS)
    if args.out is None:
        raise UsageError("fieldest requires --out")
    loss_names = _parse_losses(opt["losses"])
    contamination = float(opt["contamination"])
    if not 0.0 <= contamination <= 1.0:
        raise UsageError(f"--contamination must lie in [0, 1], got {contamination}")
    n_seeds = int(opt["n_seeds"])
    n_labels = int(opt["labels"])
    if n_seeds < 1 or n_labels < 1:
        raise UsageError("--n-seeds and --labels must be >= 1")
    dims = Dims(*_parse_ints(opt["dims"], 3, "--dims"))
    shape_spec = ShapeSpec(
        dims=dims,
        n_lobes=int(opt["lobes"]),
        lobe_sigma_range=_parse_floats(opt["sigma_range"], 2, "--sigma-range"),
        threshold=float(opt["threshold"]),
    )
    mode = _parse_mode(opt["mode"])
    tau = float(opt["tau"])

    scores: dict[str, list[float]] = {name: [] for name in loss_names}
    for i in range(n_seeds):
        rng = Rng(sub_seed(int(opt["seed"]), i))
        gt, labels = _fieldest_labels(rng, shape_spec, n_labels, contamination)
        for name in loss_names:
            kind = parse_loss(name, mode=mode)
            proba = field_estimate(
                labels,
                kind,
                steps=int(opt["steps"]),
                lr=float(opt["lr"]),
                scale_scope=str(opt["scale_scope"]),
                lr_r=float(opt["lr_r"]),
                lr_sigma=float(opt["lr_sigma"]),
            )
            scores[name].append(dice(binarize(proba, tau), gt))

    header = ["loss", "dice_mean", "dice_sd", "win_rate_tdist"]
    csv_rows = []
    table_rows = []
    for name in loss_names:
        mean, sd = _mean_sd(scores[name])
        if "tdist" in scores:
            wins = [t >= b for t, b in zip(scores["tdist"], scores[name])]
            win_rate = float(np.mean(wins))
        else:
            win_rate = None
        csv_rows.append([name, mean, sd, win_rate])
        table_rows.append(
            [name, f"{mean:.4f}", f"{sd:.4f}", "n/a" if win_rate is None else f"{win_rate:.2f}"]
        )
    os.makedirs(args.out, exist_ok=True)
    _write_csv(os.path.join(args.out, "fieldest.csv"), header, csv_rows)
    _print_table(header, table_rows)
    return 0


_GRADCHECK_DEFAULTS = {"seed": 0, "trials": 120}


def cmd_gradcheck(args) -> int:
    opt = _resolved(args, _GRADCHECK_DEFAULTS)
    trials = int(opt["trials"])
    if trials < 1:
        raise UsageError("--trials must be >= 1")
    report = run_gradcheck(trials=trials, seed=int(opt["seed"]), corrupt=args.inject_sign_flip)
    for name in sorted(report.max_errors):
        err = report.max_errors[name]
        status = "PASS" if err <= report.tolerance else "FAIL"
        print(f"{status} {name}: max_rel_err={err:.3e}")
    print(f"max relative error: {report.worst:.3e} (tolerance {report.tolerance:g})")
    if not report.passed:
        print(f"FAILED components: {', '.join(report.failing_components())}")
        return 1
    return 0


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tloss-lab",
        description="Robust-loss benchmark: synthetic 3D weak-label segmentation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_shared(p):
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--dims", default=None, help="d,h,w or a single cube size")
        p.add_argument("--config", default=None, help="JSON config file (lower precedence than flags)")
        p.add_argument("--out", default=None)
        p.add_argument("--tau", type=float, default=None)
        p.add_argument("--spacing", default=None, help="x,y,z voxel spacing")
        p.add_argument("--mode", default=None, choices=["pervoxel", "multivariate"])

    p_gen = sub.add_parser("gen", help="generate a synthetic weak-label dataset")
    add_shared(p_gen)
    p_gen.add_argument("--n", type=int, default=None)
    p_gen.add_argument("--lobes", type=int, default=None)
    p_gen.add_argument("--sigma-range", dest="sigma_range", default=None)
    p_gen.add_argument("--threshold", type=float, default=None)
    p_gen.add_argument("--flip-rate", dest="flip_rate", type=float, default=None)
    p_gen.add_argument("--blobs", type=int, default=None)
    p_gen.add_argument("--blob-radius", dest="blob_radius", type=int, default=None)
    p_gen.add_argument("--morph-range", dest="morph_range", default=None)
    p_gen.add_argument("--drop-prob", dest="drop_prob", type=float, default=None)
    p_gen.add_argument("--fg-mean", dest="fg_mean", type=float, default=None)
    p_gen.add_argument("--bg-mean", dest="bg_mean", type=float, default=None)
    p_gen.add_argument("--noise-sd", dest="noise_sd", type=float, default=None)
    p_gen.set_defaults(func=cmd_gen)

    def add_train_flags(p):
        p.add_argument("--data", default=None)
        p.add_argument("--loss", default=None)
        p.add_argument("--lr-theta", dest="lr_theta", type=float, default=None)
        p.add_argument("--lr-r", dest="lr_r", type=float, default=None)
        p.add_argument("--lr-sigma", dest="lr_sigma", type=float, default=None)
        p.add_argument("--epochs", type=int, default=None)
        p.add_argument("--patience", type=int, default=None)
        p.add_argument("--min-delta", dest="min_delta", type=float, default=None)
        p.add_argument(
            "--no-augment", dest="augment", action="store_const", const=False, default=None
        )
        p.add_argument("--scale-scope", dest="scale_scope", default=None, choices=["voxel", "scalar"])
        p.add_argument(
            "--stop-criterion", dest="stop_criterion", default=None, choices=["tdist", "own"]
        )
        p.add_argument("--hidden", type=int, default=None)
        p.add_argument("--focal-alpha", dest="focal_alpha", type=float, default=None)
        p.add_argument("--focal-gamma", dest="focal_gamma", type=float, default=None)
        p.add_argument("--split", default=None, help="train,val,test counts or fractions")

    p_train = sub.add_parser("train", help="train one predictor on a dataset")
    add_shared(p_train)
    add_train_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="evaluate saved parameters on a dataset split")
    add_shared(p_eval)
    p_eval.add_argument("--data", default=None)
    p_eval.add_argument("--params", default=None)
    p_eval.add_argument("--split", default=None)
    p_eval.add_argument("--subset", default=None, choices=["train", "val", "test"])
    p_eval.set_defaults(func=cmd_eval)

    p_ablate = sub.add_parser("ablate", help="train every loss kind and compare on the test split")
    add_shared(p_ablate)
    add_train_flags(p_ablate)
    p_ablate.add_argument("--losses", default=None)
    p_ablate.set_defaults(func=cmd_ablate)

    p_field = sub.add_parser("fieldest", help="field-estimation robustness benchmark")
    add_shared(p_field)
    p_field.add_argument("--contamination", type=float, default=None)
    p_field.add_argument("--n-seeds", dest="n_seeds", type=int, default=None)
    p_field.add_argument("--labels", type=int, default=None)
    p_field.add_argument("--steps", type=int, default=None)
    p_field.add_argument("--lr", type=float, default=None)
    p_field.add_argument("--losses", default=None)
    p_field.add_argument("--lobes", type=int, default=None)
    p_field.add_argument("--sigma-range", dest="sigma_range", default=None)
    p_field.add_argument("--threshold", type=float, default=None)
    p_field.add_argument("--lr-r", dest="lr_r", type=float, default=None)
    p_field.add_argument("--lr-sigma", dest="lr_sigma", type=float, default=None)
    p_field.add_argument("--scale-scope", dest="scale_scope", default=None, choices=["voxel", "scalar"])
    p_field.set_defaults(func=cmd_fieldest)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    add_shared(p_grad)
    p_grad.add_argument("--trials", type=int, default=None)
    p_grad.add_argument("--inject-sign-flip", dest="inject_sign_flip", default=None, help=argparse.SUPPRESS)
    p_grad.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code in (0, None) else 2
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (MvolError, FileNotFoundError, IsADirectoryError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
