"""Real spherical harmonics up to degree 3, plus direction gradients.

Coefficient order follows the usual splatting layout: one DC term, then
(-y, z, -x) style band 1, etc. Colors decode as max(0, basis . sh + 0.5).
"""

import numpy as np

C0 = 0.28209479177387814
C1 = 0.4886025119029199
C2 = (1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
      -1.0925484305920792, 0.5462742152960396)
C3 = (-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
      0.3731763325901154, -0.4570457994644658, 1.445305721320277,
      -0.5900435899266435)


def rgb_to_dc(rgb):
    return (np.asarray(rgb, dtype=np.float64) - 0.5) / C0


def dc_to_rgb(dc):
    return np.asarray(dc, dtype=np.float64) * C0 + 0.5


def sh_basis(degree, dirs):
    """Basis values for unit directions, shape (N, (degree+1)^2)."""
    if not 0 <= degree <= 3:
        raise ValueError(f"sh degree {degree} out of range [0, 3]")
    dirs = np.asarray(dirs, dtype=np.float64)
    n = dirs.shape[0]
    out = np.empty((n, (degree + 1) ** 2))
    out[:, 0] = C0
    if degree < 1:
        return out
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    out[:, 1] = -C1 * y
    out[:, 2] = C1 * z
    out[:, 3] = -C1 * x
    if degree < 2:
        return out
    xx, yy, zz = x * x, y * y, z * z
    xy, yz, xz = x * y, y * z, x * z
    out[:, 4] = C2[0] * xy
    out[:, 5] = C2[1] * yz
    out[:, 6] = C2[2] * (2 * zz - xx - yy)
    out[:, 7] = C2[3] * xz
    out[:, 8] = C2[4] * (xx - yy)
    if degree < 3:
        return out
    out[:, 9] = C3[0] * y * (3 * xx - yy)
    out[:, 10] = C3[1] * xy * z
    out[:, 11] = C3[2] * y * (4 * zz - xx - yy)
    out[:, 12] = C3[3] * z * (2 * zz - 3 * xx - 3 * yy)
    out[:, 13] = C3[4] * x * (4 * zz - xx - yy)
    out[:, 14] = C3[5] * z * (xx - yy)
    out[:, 15] = C3[6] * x * (xx - 3 * yy)
    return out


def sh_basis_grad(degree, dirs):
    """d(basis)/d(direction), shape (N, (degree+1)^2, 3)."""
    dirs = np.asarray(dirs, dtype=np.float64)
    n = dirs.shape[0]
    k = (degree + 1) ** 2
    g = np.zeros((n, k, 3))
    if degree < 1:
        return g
    x, y, z = dirs[:, 0], dirs[:, 1], dirs[:, 2]
    g[:, 1, 1] = -C1
    g[:, 2, 2] = C1
    g[:, 3, 0] = -C1
    if degree < 2:
        return g
    g[:, 4, 0] = C2[0] * y
    g[:, 4, 1] = C2[0] * x
    g[:, 5, 1] = C2[1] * z
    g[:, 5, 2] = C2[1] * y
    g[:, 6, 0] = C2[2] * -2 * x
    g[:, 6, 1] = C2[2] * -2 * y
    g[:, 6, 2] = C2[2] * 4 * z
    g[:, 7, 0] = C2[3] * z
    g[:, 7, 2] = C2[3] * x
    g[:, 8, 0] = C2[4] * 2 * x
    g[:, 8, 1] = C2[4] * -2 * y
    if degree < 3:
        return g
    xx, yy, zz = x * x, y * y, z * z
    g[:, 9, 0] = C3[0] * 6 * x * y
    g[:, 9, 1] = C3[0] * (3 * xx - 3 * yy)
    g[:, 10, 0] = C3[1] * y * z
    g[:, 10, 1] = C3[1] * x * z
    g[:, 10, 2] = C3[1] * x * y
    g[:, 11, 0] = C3[2] * -2 * x * y
    g[:, 11, 1] = C3[2] * (4 * zz - xx - 3 * yy)
    g[:, 11, 2] = C3[2] * 8 * y * z
    g[:, 12, 0] = C3[3] * -6 * x * z
    g[:, 12, 1] = C3[3] * -6 * y * z
    g[:, 12, 2] = C3[3] * (6 * zz - 3 * xx - 3 * yy)
    g[:, 13, 0] = C3[4] * (4 * zz - 3 * xx - yy)
    g[:, 13, 1] = C3[4] * -2 * x * y
    g[:, 13, 2] = C3[4] * 8 * x * z
    g[:, 14, 0] = C3[5] * 2 * x * z
    g[:, 14, 1] = C3[5] * -2 * y * z
    g[:, 14, 2] = C3[5] * (xx - yy)
    g[:, 15, 0] = C3[6] * (3 * xx - 3 * yy)
    g[:, 15, 1] = C3[6] * -6 * x * y
    return g


def eval_colors(sh, degree, dirs):
    """Clamped RGB for each Gaussian given unit view directions.

    Returns (colors, basis, clamp_mask); the mask marks channels pinned at 0
    so the backward pass can zero their gradients.
    """
    k = (degree + 1) ** 2
    if sh.shape[2] < k:
        raise ValueError(f"sh storage holds degree {int(np.sqrt(sh.shape[2])) - 1}, need {degree}")
    basis = sh_basis(degree, dirs)
    raw = np.einsum("nk,nck->nc", basis, sh[:, :, :k]) + 0.5
    clamped = raw < 0
    return np.where(clamped, 0.0, raw), basis, clamped
