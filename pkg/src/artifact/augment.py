"""Deterministic 32-transform augmentation catalog for complex images.

The catalog is the lexicographic product of four axis flips
(none / horizontal / vertical / both), three rotation angles
(0, +10, -10 degrees) and three horizontal shears (0, +0.1, -0.1),
truncated to its first 32 entries. Entry 0 is the identity. 180-degree
rotation is the both-axes flip, realized as an exact index reversal, so
only the +-10 degree rotations and nonzero shears resample the image;
those use bilinear interpolation applied independently to the real and
imaginary parts. The transform order is flip, then rotate, then shear,
all about the image center.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

FLIPS = ("none", "h", "v", "hv")
ROTATIONS_DEG = (0.0, 10.0, -10.0)
SHEARS = (0.0, 0.1, -0.1)

CATALOG = tuple(
    (f, r, s) for f in FLIPS for r in ROTATIONS_DEG for s in SHEARS
)[:32]


def _flip(img: np.ndarray, kind: str) -> np.ndarray:
    if kind == "h":
        return img[:, ::-1]
    if kind == "v":
        return img[::-1, :]
    if kind == "hv":
        return img[::-1, ::-1]
    return img


def _warp(img: np.ndarray, rot_deg: float, shear: float) -> np.ndarray:
    """Rotate then shear about the image center, bilinear, zero fill."""
    theta = np.deg2rad(rot_deg)
    rot = np.array([[np.cos(theta), -np.sin(theta)],
                    [np.sin(theta), np.cos(theta)]])
    shear_mat = np.array([[1.0, 0.0], [shear, 1.0]])   # columns shift with row
    forward = shear_mat @ rot
    inv = np.linalg.inv(forward)
    center = (np.array(img.shape, dtype=float) - 1.0) / 2.0
    offset = center - inv @ center

    def _interp(channel):
        return ndimage.affine_transform(
            channel, inv, offset=offset, order=1, mode="constant", cval=0.0)

    if np.iscomplexobj(img):
        return _interp(img.real) + 1j * _interp(img.imag)
    return _interp(img)


def augment(img: np.ndarray, transform_id: int) -> np.ndarray:
    """Apply catalog entry ``transform_id`` (0..31) to a 2D image."""
    if not 0 <= transform_id < len(CATALOG):
        raise ValueError(
            f"transform_id must lie in [0, {len(CATALOG)}), got {transform_id}")
    img = np.asarray(img)
    flip, rot, shear = CATALOG[transform_id]
    out = _flip(img, flip)
    if rot != 0.0 or shear != 0.0:
        out = _warp(out, rot, shear)
    return np.ascontiguousarray(out)
