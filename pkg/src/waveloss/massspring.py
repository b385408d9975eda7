"""2D mass-spring elastic bodies: star shapes dropped onto the ground.

Semi-implicit Euler integration of Hooke springs with axial damping,
gravity, and a projected ground contact (inward velocity zeroed,
tangential velocity scaled by friction). Particle frames are rasterized
onto paired low/high SDF + velocity grids.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datasets import DatasetRecord, Frame, SimSequence
from .grid import Grid


@dataclass
class MassSpringSetup:
    positions: np.ndarray   # (n, 2)
    velocities: np.ndarray  # (n, 2)
    masses: np.ndarray      # (n,)
    springs: np.ndarray     # (m, 2) int indices
    rest: np.ndarray        # (m,)
    stiffness: float = 80.0
    damping: float = 1.0
    gravity: np.ndarray = field(default_factory=lambda: np.array([0.0, -9.81]))
    ground_height: float = 0.0
    friction: float = 0.9
    domain_extent: float = 32.0

    def __post_init__(self):
        n = len(self.positions)
        if self.springs.size and (self.springs.min() < 0
                                  or self.springs.max() >= n):
            raise ValueError("spring indices out of range")
        if self.stiffness <= 0.0:
            raise ValueError("stiffness must be positive")
        if self.rest.size and self.rest.min() <= 0.0:
            raise ValueError("rest lengths must be positive")


def _point_in_polygon(points, poly):
    """Even-odd ray cast, vectorized over points."""
    x, y = points[:, 0], points[:, 1]
    inside = np.zeros(len(points), dtype=bool)
    px, py = poly[:, 0], poly[:, 1]
    qx, qy = np.roll(px, -1), np.roll(py, -1)
    for i in range(len(poly)):
        cond = (py[i] > y) != (qy[i] > y)
        xs = (qx[i] - px[i]) * (y - py[i]) / (qy[i] - py[i] + 1e-300) + px[i]
        inside ^= cond & (x < xs)
    return inside


def star_polygon(points, r_inner, r_outer, rotation=0.0, scale=1.0,
                 center=(0.0, 0.0)):
    ang = np.arange(2 * points) * np.pi / points + rotation
    rad = np.where(np.arange(2 * points) % 2 == 0, r_outer, r_inner) * scale
    return np.stack([center[0] + rad * np.cos(ang),
                     center[1] + rad * np.sin(ang)], axis=-1)


def star_setup(points=5, r_inner=3.0, r_outer=6.0, rotation=0.0, scale=1.0,
               center=(16.0, 20.0), spacing=0.5, stiffness=80.0, damping=1.0,
               mass=1.0, ground_height=2.0, domain_extent=32.0,
               target_particles=None):
    """Particles on a regular lattice inside a star polygon, springs
    between neighbors within 1.6 lattice spacings."""
    poly = star_polygon(points, r_inner, r_outer, rotation, scale, center)
    lo = poly.min(axis=0) - spacing
    hi = poly.max(axis=0) + spacing
    xs = np.arange(lo[0], hi[0] + spacing / 2, spacing)
    ys = np.arange(lo[1], hi[1] + spacing / 2, spacing)
    cand = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1).reshape(-1, 2)
    pos = cand[_point_in_polygon(cand, poly)]
    if target_particles is not None and len(pos) > target_particles:
        keep = np.linspace(0, len(pos) - 1, target_particles).astype(int)
        pos = pos[keep]
    n = len(pos)
    d = np.linalg.norm(pos[:, None] - pos[None, :], axis=-1)
    iu, ju = np.triu_indices(n, k=1)
    near = d[iu, ju] < 1.6 * spacing
    springs = np.stack([iu[near], ju[near]], axis=-1)
    rest = d[springs[:, 0], springs[:, 1]]
    return MassSpringSetup(positions=pos, velocities=np.zeros((n, 2)),
                           masses=np.full(n, mass), springs=springs,
                           rest=rest, stiffness=stiffness, damping=damping,
                           ground_height=ground_height,
                           domain_extent=domain_extent)


def spring_forces(setup, pos, vel):
    forces = np.zeros_like(pos)
    if len(setup.springs) == 0:
        return forces
    i, j = setup.springs[:, 0], setup.springs[:, 1]
    d = pos[j] - pos[i]
    length = np.linalg.norm(d, axis=-1)
    length = np.maximum(length, 1e-12)
    direction = d / length[:, None]
    f = setup.stiffness * (length - setup.rest)
    rel = np.sum((vel[j] - vel[i]) * direction, axis=-1)
    f = (f + setup.damping * rel)[:, None] * direction
    np.add.at(forces, i, f)
    np.add.at(forces, j, -f)
    return forces


def mass_spring_sim(setup, steps, dt, ground=True):
    """Semi-implicit Euler. Returns (positions, velocities) per frame,
    including the initial state: arrays of shape (steps+1, n, 2)."""
    max_dt = 2.0 / np.sqrt(setup.stiffness / setup.masses.min())
    if dt >= max_dt:
        raise ValueError(f"dt={dt} unstable for stiffness "
                         f"{setup.stiffness} (needs < {max_dt:.4g})")
    pos = setup.positions.copy()
    vel = setup.velocities.copy()
    traj_p, traj_v = [pos.copy()], [vel.copy()]
    for step in range(steps):
        f = spring_forces(setup, pos, vel)
        f = f + setup.masses[:, None] * setup.gravity[None, :]
        vel = vel + dt * f / setup.masses[:, None]
        pos = pos + dt * vel
        if ground:
            below = pos[:, 1] < setup.ground_height
            if np.any(below):
                pos[below, 1] = setup.ground_height
                vel[below, 1] = np.maximum(vel[below, 1], 0.0)
                vel[below, 0] *= setup.friction
        if np.abs(pos).max() > 10.0 * setup.domain_extent:
            raise FloatingPointError(
                f"simulation unstable at step {step}: particle left "
                f"10x the domain extent")
        traj_p.append(pos.copy())
        traj_v.append(vel.copy())
    return np.stack(traj_p), np.stack(traj_v)


def system_energy(setup, pos, vel):
    """Kinetic + spring potential + gravitational (relative to the ground)."""
    e = 0.5 * np.sum(setup.masses * np.sum(vel ** 2, axis=-1))
    if len(setup.springs):
        i, j = setup.springs[:, 0], setup.springs[:, 1]
        length = np.linalg.norm(pos[j] - pos[i], axis=-1)
        e += 0.5 * setup.stiffness * np.sum((length - setup.rest) ** 2)
    g = np.linalg.norm(setup.gravity)
    e += g * np.sum(setup.masses * (pos[:, 1] - setup.ground_height))
    return e


def rasterize_particles(positions, velocities, resolution, radius,
                        cell_size=1.0, band=4.0):
    """Particle cloud to (sdf, velocity) grids.

    SDF is distance-to-nearest-center minus radius, truncated to a
    +-band-cell narrow band; velocities are Shepard-averaged with a hat
    kernel of support 2*radius. Grid cell i sits at world coordinate
    i * cell_size. Velocity grids are in cells per frame.
    """
    if len(positions) == 0:
        raise ValueError("no particles to rasterize")
    res = tuple(int(r) for r in resolution)
    coords = np.stack(np.meshgrid(*[np.arange(n) * cell_size for n in res],
                                  indexing="ij"), axis=-1)
    flat = coords.reshape(-1, 2)
    d = np.linalg.norm(flat[:, None, :] - positions[None, :, :], axis=-1)
    dist = d.min(axis=1)
    sdf = np.clip(dist - radius, -band * cell_size, band * cell_size)
    w = np.maximum(0.0, 1.0 - d / (2.0 * radius))
    wsum = w.sum(axis=1)
    vel = w @ velocities
    nonzero = wsum > 0.0
    vel[nonzero] /= wsum[nonzero, None]
    vel[~nonzero] = 0.0
    return (Grid(sdf.reshape(res), cell_size=cell_size),
            Grid(vel.reshape(res + (2,)) / cell_size, channels=2,
                 cell_size=cell_size))


def generate_mass_spring_record(seed, resolution_low=32, k=2, steps=400,
                                frame_stride=4, dt=0.01, target_particles=900,
                                radius=0.8):
    """One paired low/high mass-spring sequence from a random star drop."""
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    extent = float(resolution_low)
    setup = star_setup(
        points=int(rng.integers(5, 8)),
        r_inner=extent * rng.uniform(0.08, 0.12),
        r_outer=extent * rng.uniform(0.18, 0.25),
        rotation=rng.uniform(0.0, 2.0 * np.pi),
        scale=rng.uniform(0.8, 1.2),
        center=(extent / 2 + rng.uniform(-2, 2), extent * 0.65),
        spacing=extent / 64.0,
        ground_height=extent * 0.1,
        domain_extent=extent,
        target_particles=target_particles)
    traj_p, traj_v = mass_spring_sim(setup, steps, dt)
    lo_frames, hi_frames = [], []
    for t in range(0, steps + 1, frame_stride):
        # velocity in world units per recorded frame
        v_frame = traj_v[t] * dt * frame_stride
        sdf_lo, vel_lo = rasterize_particles(
            traj_p[t], v_frame, (resolution_low,) * 2, radius, cell_size=1.0)
        sdf_hi, vel_hi = rasterize_particles(
            traj_p[t], v_frame, (resolution_low * k,) * 2, radius,
            cell_size=1.0 / k)
        # keep SDF in world units at both resolutions
        lo_frames.append(Frame(sdf=sdf_lo, velocity=vel_lo))
        hi_frames.append(Frame(sdf=sdf_hi, velocity=vel_hi))
    return DatasetRecord(
        low=SimSequence(frames=lo_frames, resolution="low", k=k,
                        source="mass-spring"),
        high=SimSequence(frames=hi_frames, resolution="high", k=k,
                         source="mass-spring"))
