"""Transfer control-node motion onto the full Gaussian cloud.

Each Gaussian blends its bound nodes' rigid rotations and translations for
the mean, and their deformation gradients for the covariance. Both blends
are written as identity-plus-deviation so an undeformed node set reproduces
the input cloud bit for bit.
"""

import numpy as np

from ..scene import DeformedGaussians


def polar_decompose(F):
    """Rotation factors of batched 3x3 matrices via SVD, reflection-safe.

    Returns (R, P) with F = R @ P and det(R) = +1.
    """
    F = np.asarray(F, dtype=np.float64)
    single = F.ndim == 2
    if single:
        F = F[None]
    U, S, Vt = np.linalg.svd(F)
    det_uv = np.linalg.det(U) * np.linalg.det(Vt)
    U = U.copy()
    U[:, :, 2] *= det_uv[:, None]
    S = S.copy()
    S[:, 2] *= det_uv
    R = U @ Vt
    V = np.swapaxes(Vt, 1, 2)
    P = (V * S[:, None, :]) @ Vt
    if single:
        return R[0], P[0]
    return R, P


def deform_cloud(cloud, binding, nodes):
    """Carry the cloud along the nodes' motion.

    binding: BindingTable from bind_gaussians (indices, weights, rest offsets).
    nodes: ControlNodeSet after some number of substeps.
    Returns DeformedGaussians; covariances are produced directly, skipping
    any factored rotation/scale form.
    """
    idx = binding.node_indices          # (N, K)
    w = binding.weights                 # (N, K)
    offsets = binding.rest_offsets      # (N, K, 3)
    if idx.shape[0] != len(cloud):
        raise RuntimeError(
            f"binding covers {idx.shape[0]} gaussians, cloud has {len(cloud)}"
        )
    if idx.size and idx.max() >= nodes.positions.shape[0]:
        raise RuntimeError("binding references nodes beyond the node set")

    rot, _ = polar_decompose(nodes.F)                     # (M,3,3)
    disp = nodes.positions - nodes.rest_positions         # (M,3)

    rk = rot[idx]                                         # (N,K,3,3)
    # (R_k - I) @ (mu - p_k) summed with weights, plus the node displacement
    rotated = np.einsum("nkab,nkb->nka", rk, offsets) - offsets
    delta = np.einsum("nk,nka->na", w, rotated + disp[idx])
    positions = cloud.positions + delta

    fk = nodes.F[idx]                                     # (N,K,3,3)
    f_blend = np.eye(3) + np.einsum("nk,nkab->nab", w, fk - np.eye(3))
    sigma = cloud.world_covariances()
    covariances = f_blend @ sigma @ np.swapaxes(f_blend, 1, 2)

    return DeformedGaussians(
        positions=positions,
        covariances=covariances,
        opacities=cloud.opacities.copy(),
        sh=cloud.sh.copy(),
    )
