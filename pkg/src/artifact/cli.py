"""Command-line entry point tying the toolkit together.

Subcommands: simulate | train | reconstruct | barcode | rf. Every command
reads a flat key=value config (see :mod:`artifact.config`), applies the
--out/--seed/--f64 overrides, writes the fully resolved config beside its
outputs, and exits 0 on success or 1 with a one-line diagnostic.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import io
from .homology import betti0_barcode, betti0_curve, complexity_summary, \
    image_cloud, pairwise_distances, rescale
from .kspace import (GAUSSIAN_RANDOM, UNIFORM_ACS, ArtifactPair,
                     make_mask, wrap_phase)
from .phantom import make_phantom, ssos
from .pipeline import (DatasetSplit, Hyper, build_dataset, net_predictor,
                       nmse, phase_masks_for, simulate_pair,
                       train_magnitude_network, train_phase_network,
                       reconstruct, zero_predictor)
from .unet import NetworkSpec, effective_receptive_field, receptive_field


def _seed_seq(seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(entropy=seed, spawn_key=key)


def _phantoms(cfg):
    H = W = cfg["size"]
    return [make_phantom(H, W, cfg["coils"], seed=_seed_seq(cfg["seed"], 0, i))
            for i in range(cfg["phantoms"])]


def _mask(cfg, pattern=None):
    pattern = pattern or cfg["mask"]
    return make_mask(pattern, cfg["size"], cfg["accel"], cfg["acs_fraction"],
                     seed=_seed_seq(cfg["seed"], 1))


def _spec(cfg) -> NetworkSpec:
    return NetworkSpec(
        n_scales=cfg["scales"],
        layers_per_stage=cfg["stage_layers"],
        base_channels=cfg["base_channels"],
        input_size=(cfg["size"], cfg["size"]),
        mode=cfg["model"],
        upsample=cfg["upsample"],
        skip=cfg["skip"],
    )


def _hyper(cfg) -> Hyper:
    return Hyper(epochs=cfg["epochs"], batch_size=cfg["batch"],
                 lr_start=cfg["lr_start"], lr_end=cfg["lr_end"],
                 momentum=cfg["momentum"], seed=cfg["seed"],
                 dtype="float64" if cfg["f64"] else "float32")


def _out_dir(cfg) -> Path:
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    cfgmod.write_config(out / "config.txt", cfg)
    return out


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(cfg) -> Path:
    out = _out_dir(cfg)
    data = out / "dataset"
    data.mkdir(exist_ok=True)

    mask = _mask(cfg)
    io.save_ptf(data / "mask.ptf", mask.lines.astype(np.float32))
    io.save_mask_csv(data / "mask.csv", mask)

    phantoms = _phantoms(cfg)
    split = build_dataset(phantoms, mask, augment_train=cfg["augment"],
                          split_seed=cfg["seed"],
                          train_count=cfg["train_count"] or None)

    manifest = {
        "count": len(split.train) + len(split.test),
        "h": cfg["size"], "w": cfg["size"], "coils": cfg["coils"],
        "train_phantoms": ",".join(map(str, split.train_ids)),
        "test_phantoms": ",".join(map(str, split.test_ids)),
    }
    items = [("train", p) for p in split.train] + [("test", p) for p in split.test]
    for i, (side, pair) in enumerate(items):
        stem = f"item{i:05d}"
        manifest[f"{stem}.split"] = side
        manifest[f"{stem}.phantom"] = pair.phantom_id
        manifest[f"{stem}.coil"] = pair.coil_index
        manifest[f"{stem}.transform"] = pair.transform_id
        io.save_ptf(data / f"{stem}_input_mag.ptf", pair.input_mag)
        io.save_ptf(data / f"{stem}_label_mag.ptf", pair.label_mag)
        io.save_ptf(data / f"{stem}_input_phase.ptf", pair.input_phase)
        io.save_ptf(data / f"{stem}_label_phase.ptf", pair.label_phase)
    io.save_manifest(data / "items.txt", manifest)

    # complex truths and aliased inputs for the held-out phantoms, used by
    # the reconstruction command
    for pid in split.test_ids:
        for c, truth in enumerate(phantoms[pid]):
            pair_in = simulate_pair(truth, mask)
            aliased = pair_in.input_mag * np.exp(1j * pair_in.input_phase)
            io.save_ptf(data / f"truth{pid:04d}_coil{c}.ptf", truth)
            io.save_ptf(data / f"aliased{pid:04d}_coil{c}.ptf", aliased)
    return data


def _load_split(data: Path) -> tuple:
    if not (data / "items.txt").exists():
        raise FileNotFoundError(f"missing dataset at {data}; run simulate first")
    manifest = io.load_manifest(data / "items.txt")
    count = int(manifest["count"])
    split = DatasetSplit([], [], 0)
    split.train_ids = [int(v) for v in manifest["train_phantoms"].split(",") if v]
    split.test_ids = [int(v) for v in manifest["test_phantoms"].split(",") if v]
    for i in range(count):
        stem = f"item{i:05d}"
        pair = ArtifactPair(
            io.load_ptf(data / f"{stem}_input_mag.ptf"),
            io.load_ptf(data / f"{stem}_label_mag.ptf"),
            io.load_ptf(data / f"{stem}_input_phase.ptf"),
            io.load_ptf(data / f"{stem}_label_phase.ptf"),
            phantom_id=int(manifest[f"{stem}.phantom"]),
            coil_index=int(manifest[f"{stem}.coil"]),
            transform_id=int(manifest[f"{stem}.transform"]),
        )
        (split.train if manifest[f"{stem}.split"] == "train" else split.test).append(pair)
    return split, manifest


def _append_curve(path: Path, rows) -> None:
    if path.exists():
        with open(path, "a") as fh:
            for row in rows:
                fh.write(",".join(io._format_cell(v) for v in row) + "\n")
    else:
        io.save_csv(path, ("epoch", "train_loss", "test_nmse"), rows)


# ---------------------------------------------------------------------------
# train

def cmd_train(cfg) -> Path:
    out = _out_dir(cfg)
    split, manifest = _load_split(out / "dataset")
    size = (int(manifest["h"]), int(manifest["w"]))
    spec = _spec(cfg)
    if spec.input_size != size:
        spec = NetworkSpec(spec.n_scales, spec.layers_per_stage,
                           spec.base_channels, size, spec.mode,
                           spec.upsample, skip=spec.skip)
    hyper = _hyper(cfg)
    dtype = hyper.np_dtype

    mag_dir = out / "model_mag"
    start_epoch = 0
    net = None
    if (mag_dir / "manifest.txt").exists():
        net, saved = io.load_network(mag_dir, dtype=dtype)
        start_epoch = int(saved.get("epochs_done", 0))
    if start_epoch < hyper.epochs:
        result = train_magnitude_network(split, spec, hyper,
                                         learning=cfg["learning"],
                                         net=net, start_epoch=start_epoch)
        io.save_network(mag_dir, result.net, {"epochs_done": hyper.epochs})
        _append_curve(out / "curves_mag.csv", result.curve)
        net = result.net

    if cfg["train_phase"]:
        phase_dir = out / "model_phase"
        p_start = 0
        pnet = None
        if (phase_dir / "manifest.txt").exists():
            pnet, saved = io.load_network(phase_dir, dtype=dtype)
            p_start = int(saved.get("epochs_done", 0))
        if p_start < hyper.epochs:
            masks_tr, masks_te = phase_masks_for(split, net_predictor(net),
                                                 cfg["phase_threshold"])
            presult = train_phase_network(split, masks_tr, masks_te, spec,
                                          hyper, net=pnet, start_epoch=p_start)
            io.save_network(phase_dir, presult.net, {"epochs_done": hyper.epochs})
            _append_curve(out / "curves_phase.csv", presult.curve)
    return out


# ---------------------------------------------------------------------------
# reconstruct

def _oracle_predictors(aliased_coils, truth_coils):
    """Predictors that emit the true artifacts, coil by coil."""
    mag_labels = iter([np.abs(a) - np.abs(t)
                       for a, t in zip(aliased_coils, truth_coils)])
    angles = iter([np.angle(np.asarray(t)) for t in truth_coils])

    def mag_predict(_):
        return next(mag_labels)

    def phase_predict(masked_phase):
        return wrap_phase(masked_phase - next(angles))

    return mag_predict, phase_predict


def cmd_reconstruct(cfg, oracle: bool = False, zero: bool = False) -> Path:
    out = _out_dir(cfg)
    data = out / "dataset"
    split, manifest = _load_split(data)
    coils = int(manifest["coils"])
    dtype = np.float64 if cfg["f64"] else np.float32

    mag_net = phase_net = None
    if not (oracle or zero):
        if not (out / "model_mag" / "manifest.txt").exists():
            raise FileNotFoundError(
                f"no trained model under {out}; run train, or pass --oracle/--zero")
        mag_net, _ = io.load_network(out / "model_mag", dtype=dtype)
        if (out / "model_phase" / "manifest.txt").exists():
            phase_net, _ = io.load_network(out / "model_phase", dtype=dtype)

    rows = []
    for n, pid in enumerate(split.test_ids):
        aliased = [io.load_ptf(data / f"aliased{pid:04d}_coil{c}.ptf")
                   for c in range(coils)]
        truth = [io.load_ptf(data / f"truth{pid:04d}_coil{c}.ptf")
                 for c in range(coils)]
        if oracle:
            mag_p, phase_p = _oracle_predictors(aliased, truth)
        elif zero:
            mag_p = phase_p = zero_predictor
        else:
            mag_p = net_predictor(mag_net)
            phase_p = net_predictor(phase_net) if phase_net else zero_predictor
        result = reconstruct(mag_p, phase_p, aliased, truth_coils=truth,
                             threshold_fraction=cfg["phase_threshold"])
        zf = nmse(ssos(aliased), ssos(truth))
        rows.append((pid, zf, result.nmse_mag))
        print(f"phantom {pid}: wall time {result.wall_time:.4f} s")
        if n < 4:
            io.save_pgm(out / f"recon{pid:04d}.pgm", result.ssos)
            io.save_pgm(out / f"zerofill{pid:04d}.pgm", ssos(aliased))
            io.save_pgm(out / f"truth{pid:04d}.pgm", ssos(truth))
            io.save_pgm(out / f"recon{pid:04d}_phase_coil0.pgm",
                        np.angle(result.coil_images[0]) + np.pi)
            io.save_pgm(out / f"truth{pid:04d}_phase_coil0.pgm",
                        np.angle(truth[0]) + np.pi)
    io.save_csv(out / "metrics.csv", ("id", "nmse_zero_fill", "nmse_recon"), rows)
    return out / "metrics.csv"


# ---------------------------------------------------------------------------
# barcode

def cmd_barcode(cfg) -> Path:
    out = _out_dir(cfg)
    if cfg["phantoms"] < 2:
        raise ValueError("barcode analysis needs at least 2 phantoms")
    phantoms = _phantoms(cfg)
    # first-coil magnitudes, each normalized to unit max so clouds compare
    # shapes rather than intensity scales
    truths = []
    for coil_images in phantoms:
        img = np.asarray(coil_images[0])
        peak = np.abs(img).max()
        truths.append(img / peak if peak > 0 else img)

    ds = cfg["cloud_downsample"]
    clouds = {"image": image_cloud([np.abs(t) for t in truths], (ds, ds), "image")}
    for pattern in (UNIFORM_ACS, GAUSSIAN_RANDOM):
        mask = _mask(cfg, pattern)
        labels = [simulate_pair(t, mask).label_mag for t in truths]
        clouds[f"artifact_{pattern}"] = image_cloud(labels, (ds, ds), pattern)

    barcodes = {name: betti0_barcode(pairwise_distances(cloud))
                for name, cloud in clouds.items()}
    shared = max(bc.scale_max for bc in barcodes.values())
    summary = []
    for name, bc in barcodes.items():
        bc = rescale(bc, shared)     # one axis for all clouds
        bars = [(i, b, d, int(np.isfinite(d))) for i, (b, d) in enumerate(bc.bars)]
        io.save_csv(out / f"barcode_{name}.csv",
                    ("bar_index", "birth", "death", "finite"), bars)
        io.save_csv(out / f"curve_{name}.csv", ("epsilon", "betti0"),
                    betti0_curve(bc, normalize=True))
        summary.append((name, clouds[name].points.shape[0], complexity_summary(bc)))
    io.save_csv(out / "auc.csv", ("cloud", "n_points", "auc"), summary)
    return out / "auc.csv"


# ---------------------------------------------------------------------------
# receptive field

def cmd_rf(cfg) -> Path:
    out = _out_dir(cfg)
    spec = _spec(cfg)
    rows = [(r.name, r.kernel, r.stride, r.rf_h, r.rf_w)
            for r in receptive_field(spec)]
    eff = effective_receptive_field(spec)
    rows.append(("effective", "", "", eff[0], eff[1]))
    io.save_csv(out / "rf.csv", ("layer", "kernel", "stride", "rf_h", "rf_w"), rows)
    print((out / "rf.csv").read_text(), end="")
    return out / "rf.csv"


# ---------------------------------------------------------------------------
# argument parsing

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="artifact",
        description="k-space undersampling simulation, artifact-learning "
                    "training, reconstruction and barcode analysis")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
            ("simulate", "generate phantoms, masks and artifact pairs"),
            ("train", "train the magnitude (and optionally phase) network"),
            ("reconstruct", "reconstruct held-out images and write metrics"),
            ("barcode", "persistent-homology barcodes of image/artifact clouds"),
            ("rf", "per-layer receptive-field table")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="key=value config file")
        p.add_argument("--out", help="output directory (overrides config)")
        p.add_argument("--seed", type=int, help="seed (overrides config)")
        p.add_argument("--f64", action="store_true",
                       help="float64 deterministic mode")
        if name == "reconstruct":
            p.add_argument("--oracle", action="store_true",
                           help="use the true artifacts as predictions")
            p.add_argument("--zero", action="store_true",
                           help="use all-zero predictions (zero-filled baseline)")
    return parser


def _resolve_cfg(args) -> dict:
    cfg = cfgmod.load_config(args.config) if args.config else cfgmod.resolve()
    if args.out is not None:
        cfg["out"] = args.out
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.f64:
        cfg["f64"] = True
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _resolve_cfg(args)
        if args.command == "simulate":
            cmd_simulate(cfg)
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "reconstruct":
            cmd_reconstruct(cfg, oracle=args.oracle, zero=args.zero)
        elif args.command == "barcode":
            cmd_barcode(cfg)
        elif args.command == "rf":
            cmd_rf(cfg)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
