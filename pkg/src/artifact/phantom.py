"""Randomized multi-coil ellipse phantoms.

Each phantom is a piecewise-smooth magnitude image (a head ellipse with a
handful of randomized interior ellipses), a smooth low-order polynomial
phase map scaled into [-pi, pi], and one Gaussian coil-sensitivity profile
per coil anchored at a distinct image border. Outside the head ellipse the
magnitude is exactly zero. All randomness comes from the seed.
"""

from __future__ import annotations

import numpy as np


def _is_pow2(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _ellipse_support(yy, xx, cy, cx, ay, ax, angle):
    ct, st = np.cos(angle), np.sin(angle)
    yr = (yy - cy) * ct - (xx - cx) * st
    xr = (yy - cy) * st + (xx - cx) * ct
    return (xr / ax) ** 2 + (yr / ay) ** 2 <= 1.0


def coil_sensitivities(H: int, W: int, n_coils: int) -> list[np.ndarray]:
    """Smooth positive Gaussian profiles, one per coil, centered at the
    border midpoints and corners in a fixed cycle."""
    anchors = [(-1.0, 0.0), (1.0, 0.0), (0.0, -1.0), (0.0, 1.0),
               (-1.0, -1.0), (1.0, 1.0), (-1.0, 1.0), (1.0, -1.0)]
    yy, xx = np.meshgrid(np.linspace(-1, 1, H), np.linspace(-1, 1, W),
                         indexing="ij")
    width = 0.9
    maps = []
    for c in range(n_coils):
        ay, ax = anchors[c % len(anchors)]
        r2 = (yy - ay) ** 2 + (xx - ax) ** 2
        maps.append(np.exp(-r2 / (2.0 * width ** 2)))
    return maps


def make_phantom(H: int, W: int, n_coils: int = 1, seed=0) -> list[np.ndarray]:
    """Generate one random phantom as a list of per-coil complex images."""
    if not (_is_pow2(H) and _is_pow2(W) and H >= 8 and W >= 8):
        raise ValueError(f"H and W must be powers of two >= 8, got {H}x{W}")
    if n_coils < 1:
        raise ValueError("n_coils must be >= 1")

    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.linspace(-1, 1, H), np.linspace(-1, 1, W),
                         indexing="ij")

    # head ellipse: sized so its support stays inside the frame and covers
    # roughly a quarter to a half of it
    cy, cx = rng.uniform(-0.08, 0.08, size=2)
    ay = rng.uniform(0.58, 0.85)
    ax = rng.uniform(0.52, 0.80)
    angle = rng.uniform(0.0, np.pi)
    head = _ellipse_support(yy, xx, cy, cx, ay, ax, angle)

    mag = np.where(head, rng.uniform(0.7, 1.0), 0.0)
    # interior detail: ramped ellipses plus a few thin streaks, each a
    # smooth intensity field cut by a sharp boundary
    for _ in range(int(rng.integers(8, 16))):
        ecy = cy + rng.uniform(-0.5, 0.5) * ay
        ecx = cx + rng.uniform(-0.5, 0.5) * ax
        if rng.uniform() < 0.3:
            eay = rng.uniform(0.25, 0.6) * ay      # streak: long and thin
            eax = rng.uniform(0.015, 0.05) * ax
        else:
            eay = rng.uniform(0.05, 0.3) * ay
            eax = rng.uniform(0.05, 0.3) * ax
        eang = rng.uniform(0.0, np.pi)
        inner = _ellipse_support(yy, xx, ecy, ecx, eay, eax, eang)
        gy, gx = rng.uniform(-1.0, 1.0, size=2)
        ramp = 1.0 + gy * (yy - ecy) + gx * (xx - ecx)
        mag = mag + np.where(inner & head, rng.uniform(-0.6, 0.6) * ramp, 0.0)
    mag = np.clip(mag, 0.0, None)
    peak = mag.max()
    if peak > 0:
        mag = mag / peak

    # smooth phase: random quadratic in (x, y), scaled into [-pi, pi]
    c = rng.uniform(-1.0, 1.0, size=6)
    poly = (c[0] + c[1] * xx + c[2] * yy
            + c[3] * xx ** 2 + c[4] * xx * yy + c[5] * yy ** 2)
    amplitude = rng.uniform(0.6, 1.0) * np.pi
    phase = poly * (amplitude / np.max(np.abs(poly)))

    base = mag * np.exp(1j * phase)
    return [base * s for s in coil_sensitivities(H, W, n_coils)]


def ssos(coil_images) -> np.ndarray:
    """Square root of the sum of squared magnitudes across coils."""
    stack = np.stack([np.abs(np.asarray(c)) for c in coil_images])
    return np.sqrt(np.sum(stack.astype(np.float64) ** 2, axis=0))
