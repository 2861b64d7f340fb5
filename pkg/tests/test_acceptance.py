"""Acceptance suite: every release criterion at its stated tolerance,
one printed pass line per criterion (run with ``pytest -v -s``).

The two training criteria run the frozen desk-scale configurations and
take tens of minutes of CPU; everything else completes in seconds.
"""

import time

import numpy as np
import pytest

from artifact.cli import cmd_barcode, cmd_reconstruct, cmd_simulate, cmd_train
from artifact.config import resolve
from artifact.homology import (betti0_barcode, complexity_summary,
                               image_cloud, pairwise_distances, rescale)
from artifact.kspace import (FULL, GAUSSIAN_RANDOM, UNIFORM_ACS, dft2, idft2,
                             make_mask, subsample, wrap_phase, zero_fill_recon)
from artifact.nn import (BNParams, ConvParams, batch_norm,
                         batch_norm_backward, concat_channels,
                         concat_channels_backward, conv2d, conv2d_backward,
                         max_pool_2x2, max_pool_2x2_backward,
                         max_relative_error, mse_loss, numerical_gradient,
                         relu, relu_backward, unpool_2x2, unpool_2x2_backward,
                         xavier_init)
from artifact.phantom import make_phantom
from artifact.pipeline import (Hyper, build_dataset, make_phase_mask,
                               net_predictor, nmse, phase_masks_for,
                               reconstruct, simulate_pair,
                               train_magnitude_network, train_phase_network,
                               truth_magnitude)
from artifact.unet import (NetworkSpec, build_network,
                           effective_receptive_field, receptive_field)

N_SEEDS = 20


def spread_values(shape, seed):
    n = int(np.prod(shape))
    vals = (np.arange(n) + 0.5) / n * 2.0 - 1.0
    np.random.default_rng(seed).shuffle(vals)
    return vals.reshape(shape)


def _check(analytic, f, x, tol, h=1e-5, floor=1e-8):
    err = max_relative_error(analytic, numerical_gradient(f, x.copy(), h=h),
                             floor=floor)
    assert err < tol, err


def test_criterion_1_gradient_correctness():
    start = time.time()
    for seed in range(N_SEEDS):
        rng = np.random.default_rng(seed)

        k = 3 if seed % 2 == 0 else 1
        x = rng.normal(size=(1, 2, 6, 6))
        p = xavier_init((k, k, 2, 3), seed=seed, dtype=np.float64)
        out, cache = conv2d(x, p)
        w = rng.normal(size=out.shape)
        dx, dw, db = conv2d_backward(w, cache)
        _check(dx, lambda v: float(np.sum(conv2d(v, p)[0] * w)), x, 1e-5)
        _check(dw, lambda v: float(
            np.sum(conv2d(x, ConvParams(v, p.bias))[0] * w)), p.weights, 1e-5)
        _check(db, lambda v: float(
            np.sum(conv2d(x, ConvParams(p.weights, v))[0] * w)), p.bias, 1e-5)

        gamma, beta = rng.normal(1, 0.2, 2), rng.normal(size=2)
        xb = rng.normal(size=(2, 2, 4, 4))
        ob, cb = batch_norm(xb, BNParams(gamma.copy(), beta.copy()), "train")
        wb = rng.normal(size=ob.shape)
        dxb, dg, dbta = batch_norm_backward(wb, cb)
        _check(dxb, lambda v: float(np.sum(
            batch_norm(v, BNParams(gamma.copy(), beta.copy()), "train")[0] * wb)),
            xb, 1e-5)
        _check(dg, lambda v: float(np.sum(
            batch_norm(xb, BNParams(v.copy(), beta.copy()), "train")[0] * wb)),
            gamma, 1e-5)
        _check(dbta, lambda v: float(np.sum(
            batch_norm(xb, BNParams(gamma.copy(), v.copy()), "train")[0] * wb)),
            beta, 1e-5)

        xr = spread_values((1, 2, 6, 6), seed)
        outr, cr = relu(xr)
        wr = rng.normal(size=outr.shape)
        _check(relu_backward(wr, cr),
               lambda v: float(np.sum(relu(v)[0] * wr)), xr, 1e-5)

        xp = spread_values((1, 2, 6, 6), seed + 100)
        pooled, switches = max_pool_2x2(xp)
        wp = rng.normal(size=pooled.shape)
        _check(max_pool_2x2_backward(wp, switches),
               lambda v: float(np.sum(max_pool_2x2(v)[0] * wp)), xp, 1e-5)

        wu = rng.normal(size=xp.shape)
        _check(unpool_2x2_backward(wu, switches),
               lambda v: float(np.sum(unpool_2x2(v, switches) * wu)),
               pooled, 1e-5)

        a = rng.normal(size=(1, 2, 4, 4))
        b = rng.normal(size=(1, 3, 4, 4))
        cc, split = concat_channels(a, b)
        wc = rng.normal(size=cc.shape)
        ga, gb = concat_channels_backward(wc, split)
        _check(ga, lambda v: float(np.sum(concat_channels(v, b)[0] * wc)), a, 1e-5)
        _check(gb, lambda v: float(np.sum(concat_channels(a, v)[0] * wc)), b, 1e-5)

        pred = rng.normal(size=(1, 2, 4, 4))
        target = rng.normal(size=pred.shape)
        _, grad = mse_loss(pred, target)
        num = numerical_gradient(lambda v: mse_loss(v, target)[0], pred.copy())
        assert np.max(np.abs(grad - num)) < 1e-8

    # end-to-end on the tiny network; floor 1e-6 handles the exactly-zero
    # gradients of conv biases that feed batch norm
    net = build_network(NetworkSpec(2, 4, 2, (8, 8)), seed=3, dtype=np.float64)
    rng = np.random.default_rng(5)
    x = rng.normal(size=(2, 1, 8, 8))
    y = rng.normal(size=(2, 1, 8, 8))
    _, g = mse_loss(net.forward(x, mode="train"), y)
    net.backward(g)
    grads = net.gradients()
    for name, p in net.parameters().items():
        def f(v, p=p):
            old = p.copy()
            p[...] = v
            loss, _ = mse_loss(net.forward(x, mode="train"), y)
            p[...] = old
            return loss
        err = max_relative_error(grads[name],
                                 numerical_gradient(f, p.copy(), h=1e-5),
                                 floor=1e-6)
        assert err < 1e-4, (name, err)

    elapsed = time.time() - start
    assert elapsed < 120
    print(f"\nPASS criterion 1: gradient correctness ({elapsed:.0f}s)")


def test_criterion_2_forward_model_identities():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(64, 64)) + 1j * rng.normal(size=(64, 64))
    assert np.max(np.abs(idft2(dft2(x)) - x)) < 1e-10
    assert abs(np.linalg.norm(dft2(x)) - np.linalg.norm(x)) < 1e-10
    recon = zero_fill_recon(subsample(dft2(x), make_mask(FULL, 64)))
    assert np.max(np.abs(recon - x)) < 1e-10

    # oracle artifact predictions algebraically invert the artifact
    # definition: reconstruction equals ground truth inside the mask
    truth = make_phantom(64, 64, 4, seed=2)
    mask = make_mask(UNIFORM_ACS, 64, 4, 0.05)
    aliased = [zero_fill_recon(subsample(dft2(c), mask)) for c in truth]
    mag_labels = iter([np.abs(a) - np.abs(t) for a, t in zip(aliased, truth)])
    angles = iter([np.angle(t) for t in truth])
    result = reconstruct(lambda _: next(mag_labels),
                         lambda mp: wrap_phase(mp - next(angles)),
                         aliased, truth_coils=truth)
    assert result.nmse_mag < 1e-10
    for rec, t in zip(result.coil_images, truth):
        inside = make_phase_mask(np.abs(t), 0.05).mask
        assert np.max(np.abs((rec - t) * inside)) < 1e-5
    print("\nPASS criterion 2: forward-model identities")


def test_criterion_3_receptive_fields():
    single = NetworkSpec(base_channels=64, input_size=(256, 256),
                         mode="single_scale")
    rows = receptive_field(single)
    assert rows[-1].rf_h == rows[-1].rf_w == 37
    multi = NetworkSpec(5, 4, 64, (256, 256))
    assert receptive_field(multi)[-1].rf_h >= 256
    assert effective_receptive_field(multi) == (256, 256)
    print("\nPASS criterion 3: receptive fields (37x37 single, >=256 multi)")


def test_criterion_4_homology_against_single_linkage():
    def merge_heights(dist):
        clusters = [{i} for i in range(dist.shape[0])]
        heights = []
        while len(clusters) > 1:
            best = (np.inf, None, None)
            for i in range(len(clusters)):
                for j in range(i + 1, len(clusters)):
                    d = min(dist[a, b] for a in clusters[i] for b in clusters[j])
                    if d < best[0]:
                        best = (d, i, j)
            d, i, j = best
            heights.append(d)
            clusters[i] |= clusters[j]
            del clusters[j]
        return sorted(heights)

    start = time.time()
    rng = np.random.default_rng(11)
    for _ in range(50):
        n = int(rng.integers(2, 17))
        d = int(rng.integers(1, 6))
        pts = rng.normal(size=(n, d))
        from artifact.homology import PointCloud
        dist = pairwise_distances(PointCloud(pts))
        finite = [death for _, death in betti0_barcode(dist).bars
                  if np.isfinite(death)]
        assert finite == merge_heights(dist)   # exact, zero tolerance
    elapsed = time.time() - start
    assert elapsed < 60
    print(f"\nPASS criterion 4: barcode deaths = single-linkage heights "
          f"({elapsed:.0f}s)")


def test_criterion_5_manifold_ordering():
    start = time.time()
    for seed in (0, 1, 2):
        phantoms = [make_phantom(64, 64, 1, seed=(seed, 0, i))[0]
                    for i in range(60)]
        truths = [p / np.abs(p).max() for p in phantoms]
        barcodes = {}
        cloud = image_cloud([np.abs(t) for t in truths], (32, 32))
        barcodes["image"] = betti0_barcode(pairwise_distances(cloud))
        for pattern in (UNIFORM_ACS, GAUSSIAN_RANDOM):
            mask = make_mask(pattern, 64, 4, 0.05, seed=(seed, 1))
            labels = [simulate_pair(t, mask).label_mag for t in truths]
            barcodes[pattern] = betti0_barcode(
                pairwise_distances(image_cloud(labels, (32, 32))))
        shared = max(bc.scale_max for bc in barcodes.values())
        auc = {k: complexity_summary(rescale(bc, shared))
               for k, bc in barcodes.items()}
        assert auc[UNIFORM_ACS] < auc[GAUSSIAN_RANDOM] < auc["image"], \
            (seed, auc)
    elapsed = time.time() - start
    assert elapsed < 300
    print(f"\nPASS criterion 5: AUC(uniform+ACS) < AUC(gaussian) < AUC(image) "
          f"on 3 seeds ({elapsed:.0f}s)")


@pytest.mark.slow
def test_criterion_6_artifact_learning_efficacy():
    start = time.time()
    phantoms = [make_phantom(64, 64, 1, seed=(0, 0, i)) for i in range(200)]
    mask = make_mask(UNIFORM_ACS, 64, 4, 0.05, seed=(0, 1))
    split = build_dataset(phantoms, mask, split_seed=0, train_count=165)
    zero_fill = float(np.mean([nmse(p.input_mag, truth_magnitude(p))
                               for p in split.test]))
    spec = NetworkSpec(3, 4, 16, (64, 64))
    result = train_magnitude_network(split, spec, Hyper(epochs=50, seed=0))
    final = result.curve[-1][2]
    elapsed = time.time() - start
    assert final <= 0.5 * zero_fill, (final, zero_fill)
    print(f"\nPASS criterion 6: held-out NMSE {final:.4f} <= 0.5 x "
          f"zero-filled {zero_fill:.4f} ({elapsed:.0f}s)")


@pytest.mark.slow
def test_criterion_7_ablation_orderings():
    start = time.time()
    phantoms = [make_phantom(64, 64, 1, seed=(7, 0, i)) for i in range(60)]
    mask = make_mask(UNIFORM_ACS, 64, 4, 0.05, seed=(7, 1))
    split = build_dataset(phantoms, mask, split_seed=7, train_count=50)
    hyper = Hyper(epochs=40, seed=7)
    multi = NetworkSpec(3, 4, 16, (64, 64))
    single = NetworkSpec(base_channels=16, input_size=(64, 64),
                         mode="single_scale")

    multi_artifact = train_magnitude_network(split, multi, hyper, "artifact")
    multi_image = train_magnitude_network(split, multi, hyper, "image")
    single_artifact = train_magnitude_network(split, single, hyper, "artifact")
    ma, mi, sa = (r.curve[-1][2] for r in
                  (multi_artifact, multi_image, single_artifact))
    assert ma <= mi, (ma, mi)
    assert ma <= sa, (ma, sa)

    masks_tr, masks_te = phase_masks_for(split,
                                         net_predictor(multi_artifact.net))
    phase_multi = train_phase_network(split, masks_tr, masks_te, multi, hyper)
    phase_single = train_phase_network(split, masks_tr, masks_te, single, hyper)
    pm, ps = phase_multi.curve[-1][2], phase_single.curve[-1][2]
    assert pm <= ps, (pm, ps)

    elapsed = time.time() - start
    print(f"\nPASS criterion 7: magnitude {ma:.4f} <= image {mi:.4f}, "
          f"{ma:.4f} <= single {sa:.4f}; phase {pm:.4f} <= {ps:.4f} "
          f"({elapsed:.0f}s)")


def test_criterion_8_determinism(tmp_path):
    files = ("curves_mag.csv", "metrics.csv", "auc.csv",
             "dataset/mask.csv", "curve_image.csv")
    outputs = []
    for name in ("a", "b"):
        cfg = resolve({"out": str(tmp_path / name), "phantoms": 6, "size": 16,
                       "coils": 1, "train_count": 4, "scales": 2,
                       "stage_layers": 2, "base_channels": 2, "epochs": 2,
                       "cloud_downsample": 8, "f64": True})
        cmd_simulate(cfg)
        cmd_train(cfg)
        cmd_reconstruct(cfg)
        cmd_barcode(cfg)
        outputs.append(tuple((tmp_path / name / f).read_bytes() for f in files))
    assert outputs[0] == outputs[1]
    print("\nPASS criterion 8: byte-identical metric CSVs on rerun (f64)")
