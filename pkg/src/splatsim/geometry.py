"""Quaternion and rotation utilities.

Quaternions are stored (w, x, y, z) and interpreted in the COLMAP sense:
``quat_to_rotmat(qvec)`` gives the world-to-camera rotation when qvec comes
from a camera record.
"""

import numpy as np


def quat_normalize(q):
    q = np.asarray(q, dtype=np.float64)
    n = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(n == 0):
        raise ValueError("zero-norm quaternion")
    return q / n


def quat_conjugate(q):
    q = np.asarray(q, dtype=np.float64)
    out = q.copy()
    out[..., 1:] = -out[..., 1:]
    return out


def quat_multiply(a, b):
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_to_rotmat(q):
    """Rotation matrix for one or a batch of unit quaternions, shape (..., 3, 3)."""
    q = quat_normalize(q)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    row0 = np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], axis=-1)
    row1 = np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], axis=-1)
    row2 = np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], axis=-1)
    return np.stack([row0, row1, row2], axis=-2)


def rotmat_to_quat(R):
    """Inverse of quat_to_rotmat for a single 3x3 rotation, returns (w, x, y, z)."""
    R = np.asarray(R, dtype=np.float64)
    Rxx, Ryx, Rzx, Rxy, Ryy, Rzy, Rxz, Ryz, Rzz = R.flat
    K = (
        np.array(
            [
                [Rxx - Ryy - Rzz, 0, 0, 0],
                [Ryx + Rxy, Ryy - Rxx - Rzz, 0, 0],
                [Rzx + Rxz, Rzy + Ryz, Rzz - Rxx - Ryy, 0],
                [Ryz - Rzy, Rzx - Rxz, Rxy - Ryx, Rxx + Ryy + Rzz],
            ]
        )
        / 3.0
    )
    vals, vecs = np.linalg.eigh(K)
    q = vecs[[3, 0, 1, 2], np.argmax(vals)]
    if q[0] < 0:
        q = -q
    return q


def rotmat_quat_jacobian(q):
    """d(quat_to_rotmat)/dq at a unit quaternion, shape (..., 4, 3, 3).

    Valid for the unit-normalized formula above; callers chaining through a
    raw (unnormalized) quaternion must project the result onto the tangent of
    the unit sphere and divide by the raw norm.
    """
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    o = np.zeros_like(w)
    dw = np.stack([o, -z, y, z, o, -x, -y, x, o], axis=-1)
    dx = np.stack([o, y, z, y, -2 * x, -w, z, w, -2 * x], axis=-1)
    dy = np.stack([-2 * y, x, w, x, o, z, -w, z, -2 * y], axis=-1)
    dz = np.stack([-2 * z, -w, x, w, -2 * z, y, x, y, o], axis=-1)
    J = 2.0 * np.stack([dw, dx, dy, dz], axis=-2)
    return J.reshape(q.shape[:-1] + (4, 3, 3))


def build_covariances(rotations, scales):
    """World-space covariances R diag(s)^2 R^T for batched quaternions/scales."""
    R = quat_to_rotmat(rotations)
    M = np.ascontiguousarray(R * np.asarray(scales, dtype=np.float64)[..., None, :])
    return M @ np.swapaxes(M, -1, -2)


def slerp(q0, q1, alpha):
    """Shortest-arc spherical interpolation between two quaternions.

    Falls back to normalized lerp when the arc is too small for a stable
    sin division.
    """
    q0 = quat_normalize(q0)
    q1 = quat_normalize(q1)
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1 = -q1
        dot = -dot
    dot = min(dot, 1.0)
    theta = np.arccos(dot)
    if theta < 1e-6:
        out = (1.0 - alpha) * q0 + alpha * q1
    else:
        s = np.sin(theta)
        out = (np.sin((1.0 - alpha) * theta) / s) * q0 + (np.sin(alpha * theta) / s) * q1
    return quat_normalize(out)
