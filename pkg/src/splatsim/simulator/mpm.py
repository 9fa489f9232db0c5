"""MLS-MPM over a sparse set of control particles.

One engine serves both the sparse control nodes and the dense cloud-as-
particles baseline; they differ only in the particle set handed in.
Transfers use quadratic B-spline weights and APIC affine velocities; the
material is fixed corotated elasticity.

All transfers are plain numpy reductions (bincount scatters, fancy-index
gathers), so trajectories are deterministic on a given machine for a fixed
particle order.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .sampling import farthest_point_sample

OFFSETS = np.array(
    [[i, j, k] for i in range(3) for j in range(3) for k in range(3)], dtype=np.int64
)


class SimulationFault(RuntimeError):
    """Blown-up simulation state; carries diagnostics for the caller."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass
class MaterialParams:
    youngs_modulus: float = 1e4     # Pa, soft-tissue scale
    poisson_ratio: float = 0.45
    density: float = 1000.0         # kg/m^3
    dt: float = 5e-4                # seconds per substep
    substeps: int = 80              # per rendered frame
    damping: float = 2.0            # 1/s grid velocity decay
    gravity: tuple = (0.0, 0.0, 0.0)
    grid_resolution: int = 64
    cfl_limit: float = 0.8          # max travel per substep, in cells

    def lame(self):
        e, nu = self.youngs_modulus, self.poisson_ratio
        mu = e / (2.0 * (1.0 + nu))
        lam = e * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
        return mu, lam

    def replace(self, **kwargs):
        return MaterialParams(**{**self.__dict__, **kwargs})


@dataclass
class ForceEvent:
    position: np.ndarray
    direction: np.ndarray           # unit vector
    magnitude: float                # newtons, split over affected particles
    radius: float
    active: bool = True

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.direction = np.asarray(self.direction, dtype=np.float64)
        if self.magnitude < 0:
            raise ValueError("force magnitude must be nonnegative")
        if self.radius <= 0:
            raise ValueError("force radius must be positive")

    def particle_forces(self, positions):
        """Per-particle force vectors. Quadratic falloff 1 - (r/radius)^2,
        normalized so the vector total equals magnitude * direction."""
        if not self.active:
            return None
        d2 = np.sum((positions - self.position) ** 2, axis=1)
        w = np.maximum(0.0, 1.0 - d2 / self.radius**2)
        total = w.sum()
        if total <= 0:
            return None
        return (self.magnitude / total) * w[:, None] * self.direction


@dataclass
class ControlNodeSet:
    """Particle state for the simulator: world positions plus per-particle
    deformation gradient and APIC affine velocity."""

    rest_positions: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    F: np.ndarray                   # (M,3,3)
    C: np.ndarray                   # (M,3,3)
    mass: np.ndarray
    volume: np.ndarray
    anchored: np.ndarray            # bool mask held at rest

    def __len__(self):
        return self.positions.shape[0]

    @staticmethod
    def at_rest(positions, mass, volume, anchored=None):
        positions = np.asarray(positions, dtype=np.float64)
        m = positions.shape[0]
        return ControlNodeSet(
            rest_positions=positions.copy(),
            positions=positions.copy(),
            velocities=np.zeros((m, 3)),
            F=np.broadcast_to(np.eye(3), (m, 3, 3)).copy(),
            C=np.zeros((m, 3, 3)),
            mass=np.asarray(mass, dtype=np.float64),
            volume=np.asarray(volume, dtype=np.float64),
            anchored=np.zeros(m, dtype=bool) if anchored is None else anchored,
        )

    def reset(self):
        self.positions = self.rest_positions.copy()
        self.velocities = np.zeros_like(self.velocities)
        self.F = np.broadcast_to(np.eye(3), self.F.shape).copy()
        self.C = np.zeros_like(self.C)

    def max_displacement(self):
        return float(np.linalg.norm(self.positions - self.rest_positions, axis=1).max())

    def kinetic_energy(self):
        return float(0.5 * (self.mass * np.sum(self.velocities**2, axis=1)).sum())


@dataclass
class MpmGrid:
    """Cubic background grid with a sticky border."""

    resolution: int
    origin: np.ndarray
    dx: float
    border: int = 3
    _border_mask: np.ndarray = field(default=None, repr=False)

    @staticmethod
    def around(positions, resolution=64, pad=0.35, border=3):
        positions = np.asarray(positions, dtype=np.float64)
        lo = positions.min(axis=0)
        hi = positions.max(axis=0)
        center = 0.5 * (lo + hi)
        half = 0.5 * float(np.max(hi - lo))
        half = max(half, 1e-3) * (1.0 + 2.0 * pad)
        origin = center - half
        dx = 2.0 * half / resolution
        return MpmGrid(resolution=resolution, origin=origin, dx=dx, border=border)

    def border_mask(self):
        # flat bool mask over all cells, true within `border` of any face
        if self._border_mask is None:
            r, b = self.resolution, self.border
            idx = np.arange(r)
            edge = (idx < b) | (idx >= r - b)
            m = edge[:, None, None] | edge[None, :, None] | edge[None, None, :]
            self._border_mask = m.ravel()
        return self._border_mask


def _bspline(fx):
    """Quadratic B-spline weights for fx in [0.5, 2.5): shape (3, M, 3)."""
    return np.stack(
        [0.5 * (1.5 - fx) ** 2, 0.75 - (fx - 1.0) ** 2, 0.5 * (fx - 0.5) ** 2]
    )


def _corotated_stress(F, mu, lam):
    """2 mu (F - R) F^T + lambda J (J - 1) I  for batched F."""
    U, S, Vt = np.linalg.svd(F)
    det_uv = np.linalg.det(U) * np.linalg.det(Vt)
    # push any reflection into the last singular direction
    U = U.copy()
    U[:, :, 2] *= det_uv[:, None]
    S = S.copy()
    S[:, 2] *= det_uv
    R = U @ Vt
    J = S.prod(axis=1)
    Ft = np.swapaxes(F, 1, 2)
    stress = 2.0 * mu * ((F - R) @ Ft)
    stress += (lam * J * (J - 1.0))[:, None, None] * np.eye(3)
    return stress, J


def mpm_substep(nodes, grid, params, force=None):
    """One particle-grid-particle cycle. Mutates nodes in place."""
    m = len(nodes)
    res = grid.resolution
    dx = grid.dx
    inv_dx = 1.0 / dx
    mu, lam = params.lame()

    local = (nodes.positions - grid.origin) * inv_dx
    base = np.floor(local - 0.5).astype(np.int64)
    if np.any(base < 0) or np.any(base > res - 3):
        raise SimulationFault(
            "particles left the simulation domain",
            {"min_base": base.min(axis=0).tolist(), "max_base": base.max(axis=0).tolist()},
        )
    fx = local - base
    w = _bspline(fx)  # (3, M, 3)

    stress, J = _corotated_stress(nodes.F, mu, lam)
    if np.any(J <= 0) or not np.all(np.isfinite(stress)):
        raise SimulationFault(
            "deformation gradient inverted",
            {"min_J": float(J.min()), "finite": bool(np.all(np.isfinite(stress)))},
        )
    affine = (-params.dt * 4.0 * inv_dx * inv_dx) * nodes.volume[:, None, None] * stress
    affine += nodes.mass[:, None, None] * nodes.C

    mom_p = nodes.mass[:, None] * nodes.velocities
    if force is not None:
        ext = force.particle_forces(nodes.positions)
        if ext is not None:
            mom_p = mom_p + params.dt * ext

    # all 27 stencil cells at once: (27, M) index/weight tables
    wgt = w[OFFSETS[:, 0], :, 0] * w[OFFSETS[:, 1], :, 1] * w[OFFSETS[:, 2], :, 2]
    dpos = (OFFSETS[:, None, :] - fx[None, :, :]) * dx           # (27, M, 3)
    flat = (
        (base[:, 0] + OFFSETS[:, 0, None]) * res * res
        + (base[:, 1] + OFFSETS[:, 1, None]) * res
        + (base[:, 2] + OFFSETS[:, 2, None])
    )                                                            # (27, M)
    mom = wgt[:, :, None] * (mom_p[None] + np.einsum("nab,onb->ona", affine, dpos))

    # scatter into the occupied slab of the flat grid only
    flat_all = flat.ravel()
    lo_cell = int(flat_all.min())
    ncell = int(flat_all.max()) - lo_cell + 1
    shifted = flat_all - lo_cell
    mass_w = np.broadcast_to(nodes.mass, (27, m)).ravel() * wgt.ravel()
    grid_mass = np.bincount(shifted, weights=mass_w, minlength=ncell)
    grid_mom = np.empty((ncell, 3))
    for a in range(3):
        grid_mom[:, a] = np.bincount(shifted, weights=mom[:, :, a].ravel(), minlength=ncell)

    nnz = np.flatnonzero(grid_mass > 0)
    vel = np.zeros((ncell, 3))
    vel[nnz] = grid_mom[nnz] / grid_mass[nnz, None]
    gravity = np.asarray(params.gravity, dtype=np.float64)
    if np.any(gravity):
        vel[nnz] += params.dt * gravity
    if params.damping > 0:
        vel[nnz] *= max(0.0, 1.0 - params.damping * params.dt)
    border = grid.border_mask()[lo_cell:lo_cell + ncell]
    vel[nnz[border[nnz]]] = 0.0

    speed = float(np.max(np.abs(vel))) if nnz.size else 0.0
    if speed * params.dt > params.cfl_limit * dx:
        raise SimulationFault(
            "velocity exceeded the CFL guard",
            {"max_speed": speed, "dt": params.dt, "dx": dx},
        )

    gv = vel[flat - lo_cell]                                     # (27, M, 3)
    new_v = np.einsum("on,ona->na", wgt, gv)
    new_c = (4.0 * inv_dx * inv_dx) * np.einsum("on,ona,onb->nab", wgt, gv, dpos)

    nodes.velocities = new_v
    nodes.C = new_c
    nodes.F = (np.eye(3) + params.dt * new_c) @ nodes.F
    nodes.positions = nodes.positions + params.dt * new_v

    if np.any(nodes.anchored):
        a = nodes.anchored
        nodes.positions[a] = nodes.rest_positions[a]
        nodes.velocities[a] = 0.0
        nodes.F[a] = np.eye(3)
        nodes.C[a] = 0.0

    if not np.all(np.isfinite(nodes.positions)) or not np.all(np.isfinite(nodes.velocities)):
        raise SimulationFault("non-finite particle state", {})
    return nodes


def dense_baseline_substep(particles, grid, params, force=None):
    """The baseline treats every Gaussian as a particle; identical dynamics."""
    return mpm_substep(particles, grid, params, force)


def _mean_spacing(positions):
    if positions.shape[0] < 2:
        return 0.05
    d, _ = cKDTree(positions).query(positions, k=2)
    return float(d[:, 1].mean())


def _particle_volume(positions):
    """Per-particle share of the occupied volume.

    Hull volume over count; mean nearest-neighbor spacing cubed is only a
    fallback for degenerate sets, it badly underestimates the share for
    non-lattice samples."""
    if positions.shape[0] >= 4:
        try:
            from scipy.spatial import ConvexHull

            hull = ConvexHull(positions)
            if hull.volume > 0:
                return hull.volume / positions.shape[0]
        except Exception:
            pass
    return _mean_spacing(positions) ** 3


def _bbox_anchor_mask(positions, margin, axes=None):
    lo = positions.min(axis=0)
    hi = positions.max(axis=0)
    ext = np.maximum(hi - lo, 1e-9)
    near = ((positions - lo) / ext < margin) | ((hi - positions) / ext < margin)
    if axes is not None:
        keep = np.zeros(positions.shape[0], dtype=bool)
        for ax in axes:
            keep |= near[:, ax]
        return keep
    return np.any(near, axis=1)


def nodes_from_cloud(cloud, n_nodes, seed=0, params=None, anchor_margin=0.0,
                     anchor_axes=None):
    """FPS-sampled control nodes over the Gaussian centers.

    Every node carries an equal share of the cloud's hull volume; mass
    follows from the material density. anchor_margin > 0 pins nodes near
    the cloud bounding-box boundary (all axes, or just anchor_axes).
    Returns (nodes, chosen indices).
    """
    params = params or MaterialParams()
    idx = farthest_point_sample(cloud.positions, n_nodes, seed=seed)
    pos = cloud.positions[idx]
    # volume share comes from the full cloud so sparse and dense runs agree
    # on total mass
    volume = np.full(n_nodes, _particle_volume(cloud.positions)
                     * cloud.positions.shape[0] / n_nodes)
    mass = params.density * volume
    anchored = None
    if anchor_margin > 0:
        anchored = _bbox_anchor_mask(pos, anchor_margin, anchor_axes)
    nodes = ControlNodeSet.at_rest(pos, mass, volume, anchored)
    return nodes, idx


def dense_particles_from_cloud(cloud, params=None, anchor_margin=0.0, anchor_axes=None):
    """Every Gaussian center as a simulation particle (the dense baseline)."""
    params = params or MaterialParams()
    pos = cloud.positions
    volume = np.full(pos.shape[0], _particle_volume(pos))
    mass = params.density * volume
    anchored = None
    if anchor_margin > 0:
        anchored = _bbox_anchor_mask(pos, anchor_margin, anchor_axes)
    return ControlNodeSet.at_rest(pos, mass, volume, anchored)
