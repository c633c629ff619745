"""Real spherical harmonics in the splat colour convention, and their rotation.

Splat files store view-dependent colour with the real SH basis used by the
common 3DGS renderers.  Band ``l`` is ordered ``m = -l..l`` and carries the
Condon-Shortley sign on odd ``m``; in particular band 1 is
``(-C1*y, C1*z, -C1*x)``, i.e. the Cartesian components permuted to
``(y, z, x)`` with signs ``(-, +, -)``.

Band rotation matrices are built with the Ivanic-Ruedenberg recursion in
the sign-free real basis (band 1 = ``(y, z, x)``) and then conjugated by the
diagonal sign matrix of the splat basis.  ``rotate_sh`` implements
``f'(d) = f(R^T d)``: the colour seen along ``d`` after rotating the splat by
``R`` is what was seen along ``R^T d`` before.
"""

from __future__ import annotations

import math

import numpy as np

SH_C0 = 0.28209479177387814
SH_C1 = 0.4886025119029199
SH_C2 = (
    1.0925484305920792,
    -1.0925484305920792,
    0.31539156525252005,
    -1.0925484305920792,
    0.5462742152960396,
)
SH_C3 = (
    -0.5900435899266435,
    2.890611442640554,
    -0.4570457994644658,
    0.3731763325901154,
    -0.4570457994644658,
    1.445305721320277,
    -0.5900435899266435,
)

MAX_DEGREE = 3


def n_coeffs(degree):
    """Number of SH coefficients per colour channel."""
    return (degree + 1) ** 2


def check_degree(degree):
    if degree not in range(MAX_DEGREE + 1):
        raise ValueError(f"unsupported SH degree {degree!r}; expected 0..{MAX_DEGREE}")


def eval_basis(dirs, degree):
    """Splat-convention real SH basis at unit directions ``(N, 3)`` -> ``(N, (L+1)^2)``."""
    check_degree(degree)
    d = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    x, y, z = d[:, 0], d[:, 1], d[:, 2]
    cols = [np.full_like(x, SH_C0)]
    if degree >= 1:
        cols += [-SH_C1 * y, SH_C1 * z, -SH_C1 * x]
    if degree >= 2:
        xx, yy, zz = x * x, y * y, z * z
        cols += [
            SH_C2[0] * x * y,
            SH_C2[1] * y * z,
            SH_C2[2] * (2.0 * zz - xx - yy),
            SH_C2[3] * x * z,
            SH_C2[4] * (xx - yy),
        ]
    if degree >= 3:
        cols += [
            SH_C3[0] * y * (3.0 * xx - yy),
            SH_C3[1] * x * y * z,
            SH_C3[2] * y * (4.0 * zz - xx - yy),
            SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
            SH_C3[4] * x * (4.0 * zz - xx - yy),
            SH_C3[5] * z * (xx - yy),
            SH_C3[6] * x * (xx - 3.0 * yy),
        ]
    return np.stack(cols, axis=-1)


# Ivanic-Ruedenberg recursion.  Matrices are indexed [m + l, m' + l].


def _p(i, l, a, b, r1, prev):
    ri1 = r1[i + 1, 2]
    rim1 = r1[i + 1, 0]
    ri0 = r1[i + 1, 1]
    lp = l - 1
    if b == l:
        return ri1 * prev[a + lp, 2 * lp] - rim1 * prev[a + lp, 0]
    if b == -l:
        return ri1 * prev[a + lp, 0] + rim1 * prev[a + lp, 2 * lp]
    return ri0 * prev[a + lp, b + lp]


def _band_matrix(l, r1, prev):
    out = np.zeros((2 * l + 1, 2 * l + 1))
    for m in range(-l, l + 1):
        for n in range(-l, l + 1):
            d = 1.0 if m == 0 else 0.0
            denom = (l + n) * (l - n) if abs(n) < l else (2 * l) * (2 * l - 1)
            u = math.sqrt((l + m) * (l - m) / denom)
            v = 0.5 * math.sqrt((1 + d) * (l + abs(m) - 1) * (l + abs(m)) / denom) * (1 - 2 * d)
            w = -0.5 * math.sqrt((l - abs(m) - 1) * (l - abs(m)) / denom) * (1 - d)

            val = 0.0
            if u != 0.0:
                val += u * _p(0, l, m, n, r1, prev)
            if v != 0.0:
                if m == 0:
                    V = _p(1, l, 1, n, r1, prev) + _p(-1, l, -1, n, r1, prev)
                elif m > 0:
                    d1 = 1.0 if m == 1 else 0.0
                    V = _p(1, l, m - 1, n, r1, prev) * math.sqrt(1 + d1) - _p(
                        -1, l, -m + 1, n, r1, prev
                    ) * (1 - d1)
                else:
                    d1 = 1.0 if m == -1 else 0.0
                    V = _p(1, l, m + 1, n, r1, prev) * (1 - d1) + _p(
                        -1, l, -m - 1, n, r1, prev
                    ) * math.sqrt(1 + d1)
                val += v * V
            if w != 0.0:
                if m > 0:
                    W = _p(1, l, m + 1, n, r1, prev) + _p(-1, l, -m - 1, n, r1, prev)
                else:
                    W = _p(1, l, m - 1, n, r1, prev) - _p(-1, l, -m + 1, n, r1, prev)
                val += w * W
            out[m + l, n + l] = val
    return out


def _band_signs(l):
    return np.array([-1.0 if (m % 2) else 1.0 for m in range(-l, l + 1)])


def sh_rotation_matrices(R, degree):
    """Per-band matrices ``D_l`` with ``c_l' = D_l @ c_l`` in the splat basis."""
    check_degree(degree)
    R = np.asarray(R, dtype=np.float64)
    mats = [np.ones((1, 1))]
    if degree == 0:
        return mats
    perm = [1, 2, 0]  # (y, z, x)
    r1 = R[np.ix_(perm, perm)]
    bands = [np.ones((1, 1)), r1]
    for l in range(2, degree + 1):
        bands.append(_band_matrix(l, r1, bands[-1]))
    for l in range(1, degree + 1):
        s = _band_signs(l)
        mats.append(s[:, None] * bands[l] * s[None, :])
    return mats


def sh_rotation_matrix(R, degree):
    """Block-diagonal ``((L+1)^2, (L+1)^2)`` rotation for one colour channel."""
    mats = sh_rotation_matrices(R, degree)
    k = n_coeffs(degree)
    D = np.zeros((k, k))
    start = 0
    for M in mats:
        w = M.shape[0]
        D[start : start + w, start : start + w] = M
        start += w
    return D


def rotate_sh(coeffs, R, degree):
    """Rotate splat SH colour blocks by ``R``.

    ``coeffs`` has shape ``(..., 3 * (L+1)^2)`` laid out as in splat PLY files:
    the three DC terms first, then the higher-order terms channel by channel
    (all red, all green, all blue).  Returns a float64 array of the same shape.
    """
    check_degree(degree)
    c = np.asarray(coeffs, dtype=np.float64)
    k = n_coeffs(degree)
    if c.shape[-1] != 3 * k:
        raise ValueError(f"SH block width {c.shape[-1]} does not match degree {degree}")
    if degree == 0:
        return c.copy()
    channels = to_channels(c, degree)
    D = sh_rotation_matrix(R, degree)
    # explicit sum keeps each splat's result independent of batch size
    out = np.zeros_like(channels)
    for j in range(k):
        out += channels[..., j : j + 1] * D[:, j]
    return from_channels(out)


def to_channels(flat, degree):
    """``(..., 3*(L+1)^2)`` file layout -> ``(..., 3, (L+1)^2)`` per-channel layout."""
    flat = np.asarray(flat)
    k = n_coeffs(degree)
    lead = flat.shape[:-1]
    dc = flat[..., :3]
    rest = flat[..., 3:].reshape(*lead, 3, k - 1)
    return np.concatenate([dc[..., None], rest], axis=-1)


def from_channels(chan):
    chan = np.asarray(chan)
    lead = chan.shape[:-2]
    dc = chan[..., 0]
    rest = chan[..., 1:].reshape(*lead, -1)
    return np.concatenate([dc, rest], axis=-1)
