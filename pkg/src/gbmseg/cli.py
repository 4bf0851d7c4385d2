"""Batch command-line interface tying the pipeline stages together.

Subcommands: filters, features, train, predict, evaluate, report-hist,
bench-conv, phantom.  Exit status is 0 on success, 2 on usage errors, and 1
on runtime errors; diagnostics go to stderr, data only to the named output
files or stdout.
"""

import argparse
import json
import os
import sys
import time

import numpy as np

from . import conv, dog, io, metrics, network, phantom
from .features import extract_features
from .volume import MultiChannelVolume, Volume3D, zscore_normalize

_CONFIG_KEYS = {
    # optimizer
    "learning_rate", "momentum", "batch_size", "epochs", "rng_seed",
    "class_balance", "l2",
    # filter bank
    "sigmas", "support", "zero_dc",
    # execution and file locations
    "threads", "features_dir", "labels_dir", "out",
}


def load_pipeline_config(path):
    """Read a JSON key/value pipeline config, rejecting unknown keys."""
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    for key in cfg:
        if key not in _CONFIG_KEYS:
            raise ValueError(f"{path}: unknown config key {key!r}")
    return cfg


def _parse_sigmas(text):
    try:
        return tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise ValueError(f"cannot parse sigma list {text!r}")


def _parse_dims(text):
    parts = [int(p) for p in text.split(",") if p.strip()]
    if len(parts) == 1:
        return (parts[0],) * 3
    if len(parts) == 3:
        return tuple(parts)
    raise ValueError(f"dims must be one or three integers, got {text!r}")


def _label_file_stems(directory):
    stems = {}
    for name in sorted(os.listdir(directory)):
        stem, ext = os.path.splitext(name)
        if ext in (".lbl", ".rvol"):
            stems.setdefault(stem, os.path.join(directory, name))
    return stems


def _default_workers(args):
    return args.threads if args.threads else (os.cpu_count() or 1)


# --- subcommand implementations ---------------------------------------------

def _cmd_filters(args):
    spec = dog.DoGSpec(
        sigmas=_parse_sigmas(args.sigmas) if args.sigmas else dog.DEFAULT_SIGMAS,
        support=args.support,
        zero_dc=not args.no_zero_dc,
    )
    bank = dog.build_bank(spec)
    io.write_bank(bank, args.out)
    print(f"wrote {len(bank)} filters of {spec.support}^3 to {args.out}", file=sys.stderr)
    return 0


def _cmd_features(args):
    bank = io.read_bank(args.bank)
    paths = [p for p in args.channels.split(",") if p.strip()]
    if not paths:
        raise ValueError("--channels needs at least one path")
    if args.names:
        names = [n.strip() for n in args.names.split(",")]
        if len(names) != len(paths):
            raise ValueError(f"{len(names)} names for {len(paths)} channel paths")
    else:
        names = [os.path.splitext(os.path.basename(p))[0] for p in paths]
    channels = [io.read_scan(p) for p in paths]
    if not args.no_normalize:
        channels = [zscore_normalize(ch) for ch in channels]
    image = MultiChannelVolume(channels, names)
    feats = extract_features(image, bank, workers=_default_workers(args))
    io.write_features(feats, args.out)
    print(f"wrote {feats.feature_count} features over {feats.dims} to {args.out}",
          file=sys.stderr)
    return 0


def _cmd_train(args):
    cfg = load_pipeline_config(args.config) if args.config else {}
    features_dir = args.features_dir or cfg.get("features_dir")
    labels_dir = args.labels_dir or cfg.get("labels_dir")
    out = args.out or cfg.get("out")
    if not (features_dir and labels_dir and out):
        raise ValueError("train needs --features-dir, --labels-dir and --out")

    config_kwargs = {
        k: cfg[k] for k in (
            "learning_rate", "momentum", "batch_size", "epochs", "rng_seed",
            "class_balance", "l2",
        ) if k in cfg
    }
    if args.epochs is not None:
        config_kwargs["epochs"] = args.epochs
    if args.seed is not None:
        config_kwargs["rng_seed"] = args.seed
    train_config = network.TrainConfig(**config_kwargs)

    feat_paths = sorted(
        os.path.join(features_dir, n)
        for n in os.listdir(features_dir)
        if n.endswith(".feat")
    )
    if not feat_paths:
        raise ValueError(f"no .feat files in {features_dir}")
    label_stems = _label_file_stems(labels_dir)

    matrices, labels, names = [], [], None
    for path in feat_paths:
        stem = os.path.splitext(os.path.basename(path))[0]
        if stem not in label_stems:
            raise ValueError(f"no label file for case {stem!r} in {labels_dir}")
        feats = io.read_features(path)
        ref = io.read_labels(label_stems[stem])
        if ref.dims != feats.dims:
            raise ValueError(
                f"case {stem!r}: feature dims {feats.dims} vs label dims {ref.dims}"
            )
        if names is None:
            names = feats.feature_names
        elif names != feats.feature_names:
            raise ValueError(f"{path}: feature names differ from {feat_paths[0]}")
        matrices.append(feats.data.reshape(-1, feats.feature_count))
        labels.append(ref.labels.reshape(-1))
    x = np.concatenate(matrices)
    y = np.concatenate(labels)
    del matrices, labels

    print(f"training on {x.shape[0]} voxels, {x.shape[1]} features", file=sys.stderr)
    params, losses = network.train(x, y, train_config, feature_names=names)
    for epoch, loss in enumerate(losses):
        print(f"epoch {epoch}: loss {loss:.6f}", file=sys.stderr)
    network.save_checkpoint(params, out, train_config)
    print(f"wrote checkpoint to {out}", file=sys.stderr)
    return 0


def _cmd_predict(args):
    params, _ = network.load_checkpoint(args.model)
    feats = io.read_features(args.features)
    if feats.feature_names != params.feature_names:
        raise ValueError(
            f"{args.features}: feature names do not match the checkpoint manifest "
            f"({len(feats.feature_names)} vs {len(params.feature_names)} entries)"
        )
    labels, probs = network.predict_volume(params, feats)
    io.write_rvol(labels, 3, args.out)
    if args.probs:
        io.write_rvol(probs, 2, args.probs)
    print(f"wrote labels to {args.out}", file=sys.stderr)
    return 0


def _cmd_evaluate(args):
    pred_stems = _label_file_stems(args.pred_dir)
    ref_stems = _label_file_stems(args.ref_dir)
    if not pred_stems:
        raise ValueError(f"no label files (.lbl/.rvol) in {args.pred_dir}")
    rows, per_case = [], []
    for stem in sorted(pred_stems):
        if stem not in ref_stems:
            raise ValueError(f"no reference labels for case {stem!r} in {args.ref_dir}")
        pred = io.read_labels(pred_stems[stem])
        ref = io.read_labels(ref_stems[stem])
        if pred.dims != ref.dims:
            raise ValueError(
                f"case {stem!r}: prediction dims {pred.dims} vs reference dims {ref.dims}"
            )
        scores = metrics.evaluate_case(pred, ref)
        per_case.append(scores)
        rows += [(stem, region, scores[region]) for region in metrics.REGIONS]
    metrics.write_report_csv(rows, args.out)
    if args.summary_out:
        metrics.write_summary_csv(metrics.aggregate(per_case), args.summary_out)
    print(f"evaluated {len(per_case)} case(s) -> {args.out}", file=sys.stderr)
    return 0


def _cmd_report_hist(args):
    rows = metrics.read_report_csv(args.infile)
    metrics.write_histogram_csv(metrics.histogram(rows, args.bins), args.out)
    return 0


def _cmd_bench_conv(args):
    rng = np.random.default_rng(args.seed)
    image = Volume3D(rng.standard_normal((args.image_size,) * 3))
    kernel = Volume3D(rng.standard_normal((args.kernel_size,) * 3))
    mode = "same" if args.kernel_size % 2 else "full"
    timings = {}
    for name, fn in (
        ("direct", lambda: conv.convolve_direct(image, kernel, mode)),
        ("fft", lambda: conv.convolve_fft(image, kernel, mode,
                                          workers=_default_workers(args))),
    ):
        total = 0.0
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            fn()
            total += time.perf_counter() - t0
        timings[name] = total / args.repeats
    print("path,seconds")
    for name in ("direct", "fft"):
        print(f"{name},{timings[name]:.6f}")
    return 0


def _cmd_phantom(args):
    spec = phantom.PhantomSpec(
        dims=_parse_dims(args.dims),
        rng_seed=args.seed,
        noise_sigma=args.noise_sigma,
    )
    image, labels = phantom.generate(spec)
    os.makedirs(args.out_dir, exist_ok=True)
    entries = []
    for name, channel in zip(image.channel_names, image.channels):
        rel = f"{name}.rvol"
        io.write_rvol(channel, 2, os.path.join(args.out_dir, rel))
        entries.append((name, rel))
    io.write_rvol(labels, 3, os.path.join(args.out_dir, "labels.rvol"))
    io.write_case_manifest(
        os.path.join(args.out_dir, "manifest.txt"),
        case_id=f"phantom{args.seed}",
        channels=entries,
        labels="labels.rvol",
        notes=[f"synthetic phantom, seed {args.seed}, dims {spec.dims}"],
    )
    print(f"wrote phantom case to {args.out_dir}", file=sys.stderr)
    return 0


# --- argument parsing ---------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="gbmseg",
        description="Volumetric tumor segmentation pipeline (filters, features, "
                    "training, prediction, evaluation).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("filters", help="build a DoG filter bank directory")
    p.add_argument("--support", type=int, default=dog.DEFAULT_SUPPORT)
    p.add_argument("--sigmas", help="comma-separated scales (default: 8-scale ladder)")
    p.add_argument("--no-zero-dc", action="store_true",
                   help="skip discrete re-normalization to zero filter sum")
    p.add_argument("--out", required=True, help="output bank directory (.rvolset)")
    p.set_defaults(fn=_cmd_filters)

    p = sub.add_parser("features", help="featurize a multi-channel case")
    p.add_argument("--channels", required=True,
                   help="comma-separated channel files (RVOL or NIfTI-1)")
    p.add_argument("--names", help="comma-separated channel names (default: file stems)")
    p.add_argument("--bank", required=True, help="filter bank directory")
    p.add_argument("--no-normalize", action="store_true",
                   help="skip per-channel z-score normalization")
    p.add_argument("--threads", type=int, default=0, help="FFT worker threads")
    p.add_argument("--out", required=True, help="output .feat file")
    p.set_defaults(fn=_cmd_features)

    p = sub.add_parser("train", help="train the per-voxel classifier")
    p.add_argument("--features-dir", help="directory of .feat files")
    p.add_argument("--labels-dir", help="directory of matching .lbl/.rvol label files")
    p.add_argument("--config", help="JSON pipeline config")
    p.add_argument("--epochs", type=int, help="override config epochs")
    p.add_argument("--seed", type=int, help="override config rng_seed")
    p.add_argument("--out", help="output checkpoint path")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("predict", help="label a featurized case with a checkpoint")
    p.add_argument("--model", required=True, help="checkpoint file")
    p.add_argument("--features", required=True, help=".feat file")
    p.add_argument("--probs", help="optional output RVOL of class probabilities")
    p.add_argument("--out", required=True, help="output label file")
    p.set_defaults(fn=_cmd_predict)

    p = sub.add_parser("evaluate", help="Dice-score predictions against references")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--ref-dir", required=True)
    p.add_argument("--summary-out", help="optional per-region summary CSV")
    p.add_argument("--out", required=True, help="per-case report CSV")
    p.set_defaults(fn=_cmd_evaluate)

    p = sub.add_parser("report-hist", help="bin report scores into a histogram CSV")
    p.add_argument("--in", dest="infile", required=True, help="report CSV")
    p.add_argument("--bins", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_report_hist)

    p = sub.add_parser("bench-conv", help="time direct vs FFT convolution")
    p.add_argument("--image-size", type=int, required=True)
    p.add_argument("--kernel-size", type=int, required=True)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=0, help="FFT worker threads")
    p.set_defaults(fn=_cmd_bench_conv)

    p = sub.add_parser("phantom", help="generate a synthetic ground-truth case")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--dims", default="64", help="edge length or three comma-separated")
    p.add_argument("--noise-sigma", type=float, default=phantom.PhantomSpec().noise_sigma)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=_cmd_phantom)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError, MemoryError) as exc:
        print(f"gbmseg: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
