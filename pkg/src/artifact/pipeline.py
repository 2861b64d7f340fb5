"""End-to-end dataset construction, magnitude/phase training, and the
subtract-the-artifact reconstruction flow with metrics.

A dataset pairs aliased magnitude/phase images with their artifact labels,
split by source phantom so augmented variants never straddle the split.
The magnitude network maps aliased magnitudes to magnitude artifacts; the
reconstruction subtracts the prediction. Phase training and reconstruction
run inside a magnitude-derived mask that zeroes the meaningless random
phases outside the object.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .augment import augment
from .kspace import (ArtifactPair, SamplingMask, compute_artifact, dft2,
                     subsample, wrap_phase, zero_fill_recon)
from .phantom import ssos
from .unet import NetworkSpec, build_network, lr_schedule, train_epoch

TRAIN_RATIO = 66 / 81      # default train fraction for phantom splits
N_AUGMENT = 32


@dataclass
class DatasetSplit:
    train: list                # ArtifactPair, provenance fields filled in
    test: list
    split_seed: int
    train_ids: list = field(default_factory=list)
    test_ids: list = field(default_factory=list)


@dataclass
class PhaseMask:
    mask: np.ndarray           # bool, H x W
    threshold_fraction: float


@dataclass
class Hyper:
    epochs: int = 50
    batch_size: int = 3
    lr_start: float = 1e-2
    lr_end: float = 1e-3
    momentum: float = 0.9
    seed: int = 0
    dtype: str = "float32"     # "float64" for the deterministic test mode

    @property
    def np_dtype(self):
        return np.float64 if self.dtype == "float64" else np.float32


def nmse(x: np.ndarray, ref: np.ndarray) -> float:
    """Squared error normalized by the squared norm of the reference."""
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {ref.shape}")
    denom = np.sum(np.abs(ref) ** 2)
    if denom == 0:
        raise ValueError("reference has zero norm")
    return float(np.sum(np.abs(x - ref) ** 2) / denom)


def simulate_pair(truth: np.ndarray, mask: SamplingMask) -> ArtifactPair:
    """Forward-model one coil image: k-space, subsample, zero-fill,
    artifact labels."""
    aliased = zero_fill_recon(subsample(dft2(truth), mask))
    return compute_artifact(aliased, truth)


def build_dataset(phantoms, mask: SamplingMask, augment_train: bool = False,
                  split_seed: int = 0, train_count=None) -> DatasetSplit:
    """Simulate artifact pairs for every phantom coil image and split by
    phantom. ``train_count`` defaults to the 66:15 ratio, rounded."""
    n = len(phantoms)
    if n == 0:
        raise ValueError("no phantoms given")
    if train_count is None:
        train_count = int(round(n * TRAIN_RATIO))
    if not 0 <= train_count <= n:
        raise ValueError(f"train_count must lie in [0, {n}]")

    order = np.random.default_rng(split_seed).permutation(n)
    train_ids = sorted(int(i) for i in order[:train_count])
    test_ids = sorted(int(i) for i in order[train_count:])

    def pairs_for(pid, augmented):
        out = []
        for coil, img in enumerate(phantoms[pid]):
            transforms = range(N_AUGMENT) if augmented else (0,)
            for t in transforms:
                truth = augment(img, t) if t else img
                pair = simulate_pair(truth, mask)
                pair.phantom_id = pid
                pair.coil_index = coil
                pair.transform_id = t
                out.append(pair)
        return out

    train = [p for pid in train_ids for p in pairs_for(pid, augment_train)]
    test = [p for pid in test_ids for p in pairs_for(pid, False)]
    return DatasetSplit(train, test, split_seed, train_ids, test_ids)


def truth_magnitude(pair: ArtifactPair) -> np.ndarray:
    return pair.input_mag - pair.label_mag


def truth_phase(pair: ArtifactPair) -> np.ndarray:
    return wrap_phase(pair.input_phase - pair.label_phase)


def _stack(arrays, dtype) -> np.ndarray:
    return np.stack([np.asarray(a, dtype=dtype) for a in arrays])[:, None]


def make_phase_mask(recon_mag: np.ndarray, threshold_fraction: float = 0.05) -> PhaseMask:
    """Threshold a reconstructed magnitude image at a fraction of its max."""
    recon_mag = np.asarray(recon_mag)
    if recon_mag.min() < 0:
        raise ValueError("magnitude image must be nonnegative")
    peak = recon_mag.max()
    if peak == 0:
        warnings.warn("all-zero magnitude image; phase mask is empty")
        return PhaseMask(np.zeros(recon_mag.shape, dtype=bool), threshold_fraction)
    return PhaseMask(recon_mag >= threshold_fraction * peak, threshold_fraction)


def net_predictor(net, batch_size: int = 8):
    """Wrap a network as a 2D-image -> 2D-image callable."""
    def predict(img: np.ndarray) -> np.ndarray:
        x = np.asarray(img)[None, None]
        return net.predict(x, batch_size=batch_size)[0, 0].astype(np.float64)
    return predict


def zero_predictor(img: np.ndarray) -> np.ndarray:
    return np.zeros_like(np.asarray(img, dtype=np.float64))


@dataclass
class TrainResult:
    net: object
    curve: list                # rows (epoch, train_loss, test_nmse)


def train_magnitude_network(split: DatasetSplit, spec: NetworkSpec,
                            hyper: Hyper, learning: str = "artifact",
                            net=None, start_epoch: int = 0) -> TrainResult:
    """Train the magnitude network and record, per epoch, the training
    loss and the held-out NMSE of the subtracted reconstruction (or of the
    direct output when ``learning='image'``). Pass a loaded ``net`` and
    ``start_epoch`` to resume an interrupted run."""
    if learning not in ("artifact", "image"):
        raise ValueError(f"learning must be 'artifact' or 'image', got {learning!r}")
    if not split.train:
        raise ValueError("empty training split")
    dt = hyper.np_dtype
    X = _stack([p.input_mag for p in split.train], dt)
    if learning == "artifact":
        Y = _stack([p.label_mag for p in split.train], dt)
    else:
        Y = _stack([truth_magnitude(p) for p in split.train], dt)
    test_X = _stack([p.input_mag for p in split.test], dt)
    test_truth = [truth_magnitude(p) for p in split.test]

    if net is None:
        net = build_network(spec, seed=hyper.seed, dtype=dt)
    velocity = {}
    curve = []
    for epoch in range(start_epoch, hyper.epochs):
        lr = lr_schedule(epoch, hyper.epochs, hyper.lr_start, hyper.lr_end)
        loss = train_epoch(net, X, Y, velocity, lr, hyper.momentum,
                           hyper.batch_size, seed=(hyper.seed, epoch))
        preds = net.predict(test_X) if split.test else np.zeros((0, 1) + spec.input_size)
        errs = []
        for i, truth in enumerate(test_truth):
            rec = (test_X[i, 0].astype(np.float64) - preds[i, 0]
                   if learning == "artifact" else preds[i, 0].astype(np.float64))
            errs.append(nmse(rec, truth))
        curve.append((epoch, loss, float(np.mean(errs)) if errs else np.nan))
    return TrainResult(net, curve)


def phase_masks_for(split: DatasetSplit, mag_predict,
                    threshold_fraction: float = 0.05):
    """Phase masks for every train/test item from the subtracted magnitude
    reconstruction, the same flow inference uses."""
    def mask_of(pair):
        rec = pair.input_mag - mag_predict(pair.input_mag)
        return make_phase_mask(np.maximum(rec, 0.0), threshold_fraction)
    return ([mask_of(p) for p in split.train], [mask_of(p) for p in split.test])


def train_phase_network(split: DatasetSplit, masks_train, masks_test,
                        spec: NetworkSpec, hyper: Hyper,
                        net=None, start_epoch: int = 0) -> TrainResult:
    """Train the phase network on mask-windowed inputs and labels."""
    if len(masks_train) != len(split.train) or len(masks_test) != len(split.test):
        raise ValueError("need one phase mask per train and test item")
    dt = hyper.np_dtype
    mtr = [m.mask for m in masks_train]
    mte = [m.mask for m in masks_test]
    X = _stack([p.input_phase * m for p, m in zip(split.train, mtr)], dt)
    Y = _stack([p.label_phase * m for p, m in zip(split.train, mtr)], dt)
    test_X = _stack([p.input_phase * m for p, m in zip(split.test, mte)], dt)
    test_truth = [truth_phase(p) * m for p, m in zip(split.test, mte)]

    if net is None:
        net = build_network(spec, seed=hyper.seed, dtype=dt)
    velocity = {}
    curve = []
    for epoch in range(start_epoch, hyper.epochs):
        lr = lr_schedule(epoch, hyper.epochs, hyper.lr_start, hyper.lr_end)
        loss = train_epoch(net, X, Y, velocity, lr, hyper.momentum,
                           hyper.batch_size, seed=(hyper.seed, epoch))
        preds = net.predict(test_X) if split.test else None
        errs = []
        for i, truth in enumerate(test_truth):
            m = mte[i]
            rec = wrap_phase(test_X[i, 0].astype(np.float64) - preds[i, 0]) * m
            if np.any(truth):
                errs.append(nmse(rec, truth))
        curve.append((epoch, loss, float(np.mean(errs)) if errs else np.nan))
    return TrainResult(net, curve)


@dataclass
class ReconResult:
    coil_images: list          # complex reconstructions, one per coil
    ssos: np.ndarray
    nmse_mag: float | None
    nmse_phase: list | None    # per coil, inside the phase mask
    wall_time: float


def reconstruct(mag_predict, phase_predict, aliased_coils,
                truth_coils=None, threshold_fraction: float = 0.05) -> ReconResult:
    """Subtract predicted artifacts from each aliased coil image and
    recombine. Predictors are 2D-image -> 2D-image callables."""
    if mag_predict is None or phase_predict is None:
        raise ValueError("both predictors are required")
    start = time.perf_counter()
    recons = []
    phase_recs = []
    masks = []
    for aliased in aliased_coils:
        aliased = np.asarray(aliased)
        am = np.abs(aliased)
        mag_rec = am - mag_predict(am)
        pm = make_phase_mask(np.maximum(mag_rec, 0.0), threshold_fraction)
        masked_phase = np.angle(aliased) * pm.mask
        phase_rec = wrap_phase(masked_phase - phase_predict(masked_phase)) * pm.mask
        recons.append(mag_rec * np.exp(1j * phase_rec))
        phase_recs.append(phase_rec)
        masks.append(pm.mask)
    combined = ssos(recons)
    wall = time.perf_counter() - start

    nmse_mag = nmse_phase = None
    if truth_coils is not None:
        nmse_mag = nmse(combined, ssos(truth_coils))
        nmse_phase = [
            nmse(pr * m, np.angle(np.asarray(t)) * m)
            if np.any(np.angle(np.asarray(t)) * m) else 0.0
            for pr, m, t in zip(phase_recs, masks, truth_coils)
        ]
    return ReconResult(recons, combined, nmse_mag, nmse_phase, wall)
