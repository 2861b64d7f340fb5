"""Cartesian MR acquisition model: FFTs, sampling masks, zero-filled
reconstruction and aliasing-artifact labels.

Images and k-space grids are plain 2D complex ndarrays; k-space is stored
DC-centered (fftshift convention) and sampling masks index rows of the
stored grid. Both transforms are unitary (1/sqrt(HW) each way) so energy
is preserved exactly and round trips are identities to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UNIFORM_ACS = "uniform_acs"
GAUSSIAN_RANDOM = "gaussian_random"
FULL = "full"
MASK_PATTERNS = (UNIFORM_ACS, GAUSSIAN_RANDOM, FULL)


@dataclass(frozen=True)
class SamplingMask:
    """Phase-encode sampling pattern: one keep/skip flag per k-space row."""

    lines: np.ndarray        # bool, shape (H,)
    pattern: str
    acceleration: int
    acs_count: int

    @property
    def n_sampled(self) -> int:
        return int(np.count_nonzero(self.lines))


@dataclass
class ArtifactPair:
    """One training example: aliased magnitude/phase inputs and the
    corresponding artifact labels (aliased minus truth, phase wrapped).

    The provenance fields track which phantom/coil/augmentation produced
    the pair so dataset splits can be audited.
    """

    input_mag: np.ndarray
    label_mag: np.ndarray
    input_phase: np.ndarray
    label_phase: np.ndarray
    phantom_id: int = -1
    coil_index: int = 0
    transform_id: int = 0


def _require_finite(arr: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")


def dft2(img: np.ndarray) -> np.ndarray:
    """Unitary 2D DFT of an image; output has the DC component at the
    grid center."""
    img = np.asarray(img)
    _require_finite(img, "image")
    return np.fft.fftshift(np.fft.fft2(np.fft.ifftshift(img), norm="ortho"))


def idft2(ks: np.ndarray) -> np.ndarray:
    """Exact inverse of :func:`dft2`: DC-centered k-space back to image
    space."""
    ks = np.asarray(ks)
    _require_finite(ks, "k-space grid")
    return np.fft.fftshift(np.fft.ifft2(np.fft.ifftshift(ks), norm="ortho"))


def make_mask(pattern: str, H: int, R: int = 1, acs_fraction: float = 0.0,
              seed=0) -> SamplingMask:
    """Build a sampling mask over ``H`` phase-encode rows.

    ``uniform_acs`` keeps every R-th row plus a centered block of
    ``round(acs_fraction * H)`` auto-calibration rows (the block is in
    addition to the uniform budget; overlapping rows count once).
    ``gaussian_random`` draws the same number of rows as the uniform
    pattern would sample, without replacement, with density
    exp(-(r - H/2)^2 / (2 sigma^2)) about the center row, sigma = H/6.
    ``full`` keeps every row.
    """
    if pattern not in MASK_PATTERNS:
        raise ValueError(f"unknown mask pattern {pattern!r}")
    if not 1 <= R <= H:
        raise ValueError(f"acceleration must satisfy 1 <= R <= H, got {R}")
    if not 0.0 <= acs_fraction < 1.0:
        raise ValueError(f"acs_fraction must lie in [0, 1), got {acs_fraction}")

    if pattern == FULL:
        return SamplingMask(np.ones(H, dtype=bool), FULL, 1, 0)

    acs = int(np.floor(acs_fraction * H + 0.5))
    uniform = np.zeros(H, dtype=bool)
    uniform[::R] = True
    start = H // 2 - acs // 2
    uniform[start:start + acs] = True

    if pattern == UNIFORM_ACS:
        return SamplingMask(uniform, UNIFORM_ACS, R, acs)

    # gaussian_random: match the uniform+ACS sample budget
    target = int(np.count_nonzero(uniform))
    rows = np.arange(H)
    sigma = H / 6.0
    weights = np.exp(-((rows - H / 2.0) ** 2) / (2.0 * sigma ** 2))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(H, size=target, replace=False, p=weights / weights.sum())
    lines = np.zeros(H, dtype=bool)
    lines[chosen] = True
    return SamplingMask(lines, GAUSSIAN_RANDOM, R, 0)


def subsample(ks: np.ndarray, mask: SamplingMask) -> np.ndarray:
    """Zero out the k-space rows the mask skips."""
    ks = np.asarray(ks)
    if mask.lines.shape[0] != ks.shape[0]:
        raise ValueError(
            f"mask covers {mask.lines.shape[0]} rows, grid has {ks.shape[0]}")
    return np.where(mask.lines[:, None], ks, 0)


def zero_fill_recon(ks_sub: np.ndarray) -> np.ndarray:
    """Minimum-norm reconstruction of subsampled Cartesian k-space: the
    inverse transform with missing rows left at zero."""
    return idft2(ks_sub)


def wrap_phase(theta: np.ndarray) -> np.ndarray:
    """Wrap angles into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(theta), 2.0 * np.pi)


def compute_artifact(aliased: np.ndarray, truth: np.ndarray) -> ArtifactPair:
    """Magnitude/phase artifact labels for an aliased image against its
    fully sampled truth: label_mag = |aliased| - |truth| and label_phase
    is the wrapped phase difference."""
    aliased = np.asarray(aliased)
    truth = np.asarray(truth)
    if aliased.shape != truth.shape:
        raise ValueError(
            f"shape mismatch: aliased {aliased.shape} vs truth {truth.shape}")
    input_mag = np.abs(aliased)
    input_phase = np.angle(aliased)
    label_mag = input_mag - np.abs(truth)
    label_phase = wrap_phase(input_phase - np.angle(truth))
    return ArtifactPair(input_mag, label_mag, input_phase, label_phase)
