"""Independent reference implementations used to derive expected values.

Each oracle shares no code with the package: loops, stdlib modules or
scipy routines stand in for the vectorised implementations under test.
"""

from __future__ import annotations

import colorsys
import math
import struct

import numpy as np
import scipy.ndimage
from scipy.spatial.distance import jensenshannon


def matvec_loop(M, v):
    rows, cols = len(M), len(M[0])
    return [sum(M[i][j] * v[j] for j in range(cols)) for i in range(rows)]


def linear_process_loop(C, D, e, h_d, h_y):
    cd = matvec_loop(C, h_d)
    dy = matvec_loop(D, h_y)
    return np.array([cd[i] + dy[i] + e[i] for i in range(len(e))])


def cov_dy_loop(W_cd, W_cy, sigma_c):
    """Cov(d_i, y_j) = sigma_c^2 * sum_k W_cd[k, i] W_cy[k, j] (row-vector SCM)."""
    k = len(W_cd)
    return np.array([[sigma_c**2 * sum(W_cd[m][i] * W_cy[m][j] for m in range(k)) for j in range(k)]
                     for i in range(k)])


def jsd_scipy(p, q) -> float:
    return float(jensenshannon(p, q, base=2) ** 2)


def ols_lstsq(X, t):
    A = np.hstack([X, np.ones((len(X), 1))])
    coef, *_ = np.linalg.lstsq(A, t, rcond=None)
    return coef[:-1], coef[-1]


def idx_bytes(magic: int, dims, values) -> bytes:
    head = struct.pack(">I", magic) + b"".join(struct.pack(">I", d) for d in dims)
    return head + bytes(int(v) for v in np.asarray(values).reshape(-1))


def hsv_colorsys(rgb):
    return np.array([colorsys.rgb_to_hsv(*px) for px in np.asarray(rgb).reshape(-1, 3)]).reshape(np.shape(rgb))


def hue_shift_colorsys(rgb, shift):
    out = []
    for px in np.asarray(rgb, dtype=float).reshape(-1, 3):
        h, s, v = colorsys.rgb_to_hsv(*px)
        out.append(colorsys.hsv_to_rgb((h + shift) % 1.0, s, v))
    return np.array(out).reshape(np.shape(rgb))


def rotate_scipy(img2d, angle_deg):
    """Counter-clockwise rotation as displayed (row axis points down), bilinear, zero fill.

    Output pixel (r, c) samples input at centre + R^-1 (p - centre) with p in
    (row, col) coordinates.
    """
    h, w = img2d.shape
    t = math.radians(angle_deg)
    # display CCW with y down: in (x, y) coords the forward map is [[cos, sin], [-sin, cos]];
    # inverse in (row, col) = (y, x) order
    inv = np.array([[math.cos(t), math.sin(t)], [-math.sin(t), math.cos(t)]])
    centre = np.array([(h - 1) / 2, (w - 1) / 2])
    offset = centre - inv @ centre
    return scipy.ndimage.affine_transform(img2d, inv, offset=offset, order=1, mode="grid-constant", cval=0.0)


def color_only_accuracy(flip_prob: float, label_noise: float) -> float:
    """P(colour == noisy label) and against the pre-flip (shape) label, by enumeration."""
    agree_noisy = 1 - flip_prob
    agree_shape = sum(
        pn * pf
        for noisy_flip, pn in ((0, 1 - label_noise), (1, label_noise))
        for colour_flip, pf in ((0, 1 - flip_prob), (1, flip_prob))
        if noisy_flip ^ colour_flip == 0
    )
    return agree_noisy, agree_shape
