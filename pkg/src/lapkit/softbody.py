"""Deterministic position-based-dynamics core.

Particles live in flat numpy arrays; constraints are projected
Gauss-Seidel style in a fixed order.  To keep the inner loop vectorized
without breaking the sequential semantics, constraints are greedily
colored into groups that share no particles; groups are projected in
color order, constraints within a group in parallel.  The ordering is a
pure function of the constraint list, so stepping is bitwise
deterministic.

Units: mm, g, s.  Gravity defaults to (0, 0, -9810) mm/s^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CoincidentParticles, UnstableSimulation

_MIN_SEPARATION = 1e-9
DEFAULT_SPEED_CEILING = 1e5  # mm/s


@dataclass(eq=False)  # identity semantics: tools are registered by instance
class ToolCapsule:
    """Rigid tool proxy: a capsule from endpoint_a (shaft) to endpoint_b (tip)."""

    endpoint_a: np.ndarray
    endpoint_b: np.ndarray
    radius: float
    active: bool = False  # electrocautery on/off
    jaw_closed: bool = False

    def __post_init__(self):
        self.endpoint_a = np.asarray(self.endpoint_a, dtype=float)
        self.endpoint_b = np.asarray(self.endpoint_b, dtype=float)
        if self.radius <= 0:
            raise ValueError("capsule radius must be positive")

    @property
    def tip(self) -> np.ndarray:
        return self.endpoint_b

    def frame(self) -> np.ndarray:
        """Orthonormal frame with z along the a->b axis."""
        axis = self.endpoint_b - self.endpoint_a
        n = np.linalg.norm(axis)
        z = axis / n if n > 1e-12 else np.array([0.0, 0.0, 1.0])
        ref = np.array([1.0, 0.0, 0.0])
        if abs(z @ ref) > 0.9:
            ref = np.array([0.0, 1.0, 0.0])
        x = ref - (ref @ z) * z
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        return np.column_stack([x, y, z])


@dataclass(frozen=True)
class DistanceConstraint:
    i: int
    j: int
    rest_length: float
    stiffness: float = 1.0

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("constraint endpoints must differ")
        if self.rest_length <= 0:
            raise ValueError("rest_length must be positive")


@dataclass(frozen=True)
class BendingConstraint:
    """Triple (i, j, k) holding the angle at j; projected as an i-k span."""

    i: int
    j: int
    k: int
    rest_angle: float  # degrees
    rest_span: float  # mm, i-k distance at rest
    stiffness: float = 1.0


def _color_groups(pairs):
    """Greedy coloring: groups of constraints sharing no particle."""
    groups = []
    used = []  # one set of particle indices per group
    assignment = []
    for idx, parts in enumerate(pairs):
        placed = False
        for g, members in enumerate(used):
            if not members.intersection(parts):
                groups[g].append(idx)
                members.update(parts)
                placed = True
                break
        if not placed:
            groups.append([idx])
            used.append(set(parts))
        assignment.append(None)
    return groups


class SoftWorld:
    """Particle state plus constraint topology and tool attachments."""

    def __init__(self, gravity=(0.0, 0.0, -9810.0), damping=0.995,
                 speed_ceiling=DEFAULT_SPEED_CEILING):
        self.positions = np.zeros((0, 3), dtype=float)
        self.previous_positions = np.zeros((0, 3), dtype=float)
        self.velocities = np.zeros((0, 3), dtype=float)
        self.inverse_mass = np.zeros(0, dtype=float)
        self.graspable = np.zeros(0, dtype=bool)
        self.gravity = np.asarray(gravity, dtype=float)
        self.damping = float(damping)
        self.speed_ceiling = float(speed_ceiling)

        self.distance_constraints: list[DistanceConstraint] = []
        self.bending_constraints: list[BendingConstraint] = []
        self._distance_alive = np.zeros(0, dtype=bool)
        self._bending_alive = np.zeros(0, dtype=bool)
        self._groups_dirty = True
        self._dist_groups = []
        self._bend_groups = []

        self.bodies: dict[str, tuple[int, int]] = {}
        # particle index -> (ToolCapsule, offset in tool frame)
        self.attachments: dict[int, tuple[ToolCapsule, np.ndarray]] = {}
        self.registered_tools: list[ToolCapsule] = []
        # static scene collision passes: f(positions) -> positions, in place
        self.static_colliders: list = []

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------
    def add_particles(self, positions, masses) -> range:
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        masses = np.atleast_1d(np.asarray(masses, dtype=float))
        start = len(self.positions)
        inv = np.where(masses > 0, 1.0 / np.where(masses > 0, masses, 1.0), 0.0)
        self.positions = np.vstack([self.positions, positions])
        self.previous_positions = self.positions.copy()
        self.velocities = np.vstack([self.velocities, np.zeros_like(positions)])
        self.inverse_mass = np.concatenate([self.inverse_mass, inv])
        self.graspable = np.concatenate(
            [self.graspable, np.ones(len(masses), dtype=bool)]
        )
        return range(start, len(self.positions))

    def add_distance_constraint(self, i, j, rest_length=None, stiffness=1.0) -> int:
        if rest_length is None:
            rest_length = float(np.linalg.norm(self.positions[i] - self.positions[j]))
        n = len(self.positions)
        if not (0 <= i < n and 0 <= j < n):
            raise IndexError("constraint particle index out of range")
        self.distance_constraints.append(DistanceConstraint(i, j, rest_length, stiffness))
        self._distance_alive = np.append(self._distance_alive, True)
        self._groups_dirty = True
        return len(self.distance_constraints) - 1

    def add_bending_constraint(self, i, j, k, stiffness=1.0) -> int:
        a = self.positions[i] - self.positions[j]
        b = self.positions[k] - self.positions[j]
        cosang = np.clip(
            a @ b / (np.linalg.norm(a) * np.linalg.norm(b)), -1.0, 1.0
        )
        span = float(np.linalg.norm(self.positions[i] - self.positions[k]))
        self.bending_constraints.append(
            BendingConstraint(i, j, k, math.degrees(math.acos(cosang)), span, stiffness)
        )
        self._bending_alive = np.append(self._bending_alive, True)
        self._groups_dirty = True
        return len(self.bending_constraints) - 1

    def register_body(self, name: str, particle_range: range):
        span = (particle_range.start, particle_range.stop)
        for other, (s, e) in self.bodies.items():
            if span[0] < e and s < span[1]:
                raise ValueError(f"body {name!r} overlaps {other!r}")
        self.bodies[name] = span

    def body_particles(self, name: str) -> range:
        s, e = self.bodies[name]
        return range(s, e)

    def register_tool(self, tool: ToolCapsule):
        if tool not in self.registered_tools:
            self.registered_tools.append(tool)

    def pin(self, indices):
        self.inverse_mass[np.asarray(indices)] = 0.0
        self.graspable[np.asarray(indices)] = False

    # ------------------------------------------------------------------
    # queries
    # ------------------------------------------------------------------
    def alive_distance_ids(self):
        return [i for i, a in enumerate(self._distance_alive) if a]

    def body_connected_components(self, name: str) -> int:
        """Connected components of a body under its alive constraints."""
        s, e = self.bodies[name]
        parent = list(range(e - s))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        def union(a, b):
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb

        for idx, c in enumerate(self.distance_constraints):
            if self._distance_alive[idx] and s <= c.i < e and s <= c.j < e:
                union(c.i - s, c.j - s)
        for idx, c in enumerate(self.bending_constraints):
            if self._bending_alive[idx] and s <= c.i < e and s <= c.k < e:
                union(c.i - s, c.k - s)
        return len({find(x) for x in range(e - s)})

    def max_constraint_violation(self, name: str | None = None) -> float:
        """Largest relative distance-constraint violation (|len-rest|/rest)."""
        worst = 0.0
        if name is not None:
            s, e = self.bodies[name]
        for idx, c in enumerate(self.distance_constraints):
            if not self._distance_alive[idx]:
                continue
            if name is not None and not (s <= c.i < e and s <= c.j < e):
                continue
            d = np.linalg.norm(self.positions[c.i] - self.positions[c.j])
            worst = max(worst, abs(d - c.rest_length) / c.rest_length)
        return worst

    # ------------------------------------------------------------------
    # solver
    # ------------------------------------------------------------------
    def _rebuild_groups(self):
        dist_pairs = [
            {c.i, c.j}
            for idx, c in enumerate(self.distance_constraints)
            if self._distance_alive[idx]
        ]
        dist_ids = [
            idx for idx, a in enumerate(self._distance_alive) if a
        ]
        self._dist_groups = [
            [dist_ids[i] for i in grp] for grp in _color_groups(dist_pairs)
        ]
        bend_pairs = [
            {c.i, c.k}
            for idx, c in enumerate(self.bending_constraints)
            if self._bending_alive[idx]
        ]
        bend_ids = [idx for idx, a in enumerate(self._bending_alive) if a]
        self._bend_groups = [
            [bend_ids[i] for i in grp] for grp in _color_groups(bend_pairs)
        ]
        # cache index arrays per group for the vectorized projection
        self._dist_cache = []
        for grp in self._dist_groups:
            cs = [self.distance_constraints[i] for i in grp]
            self._dist_cache.append(
                (
                    np.array([c.i for c in cs]),
                    np.array([c.j for c in cs]),
                    np.array([c.rest_length for c in cs]),
                    np.array([c.stiffness for c in cs]),
                )
            )
        self._bend_cache = []
        for grp in self._bend_groups:
            cs = [self.bending_constraints[i] for i in grp]
            self._bend_cache.append(
                (
                    np.array([c.i for c in cs]),
                    np.array([c.k for c in cs]),
                    np.array([c.rest_span for c in cs]),
                    np.array([c.stiffness for c in cs]),
                )
            )
        self._groups_dirty = False

    def _project_group(self, ii, jj, rest, stiffness):
        x = self.positions
        d = x[jj] - x[ii]
        dist = np.linalg.norm(d, axis=1)
        ok = dist > _MIN_SEPARATION
        dist_safe = np.where(ok, dist, 1.0)
        wi = self.inverse_mass[ii]
        wj = self.inverse_mass[jj]
        wsum = wi + wj
        movable = wsum > 0
        scale = np.where(ok & movable, stiffness * (dist - rest) / (dist_safe * np.where(movable, wsum, 1.0)), 0.0)
        corr = d * scale[:, None]
        x[ii] += corr * wi[:, None]
        x[jj] -= corr * wj[:, None]

    def _enforce_attachments(self):
        for p, (tool, offset) in self.attachments.items():
            self.positions[p] = tool.tip + tool.frame() @ offset

    def _resolve_collisions(self, tools):
        attached = set(self.attachments)
        for tool in tools:
            a, b = tool.endpoint_a, tool.endpoint_b
            ab = b - a
            ab2 = float(ab @ ab)
            x = self.positions
            if ab2 < 1e-18:
                t = np.zeros(len(x))
            else:
                t = np.clip((x - a) @ ab / ab2, 0.0, 1.0)
            closest = a + t[:, None] * ab
            delta = x - closest
            dist = np.linalg.norm(delta, axis=1)
            inside = (dist < tool.radius) & (self.inverse_mass > 0)
            if attached:
                inside[list(attached)] = False
            if not np.any(inside):
                continue
            idx = np.nonzero(inside)[0]
            for p in idx:
                d = dist[p]
                if d < 1e-12:
                    normal = tool.frame()[:, 0]  # on-axis fallback: capsule +x
                else:
                    normal = delta[p] / d
                self.positions[p] = closest[p] + normal * tool.radius

    def _check_stability(self, h):
        if not np.all(np.isfinite(self.positions)):
            raise UnstableSimulation("non-finite particle position")
        if len(self.velocities):
            vmax = float(np.max(np.linalg.norm(self.velocities, axis=1)))
            if vmax > self.speed_ceiling:
                raise UnstableSimulation(
                    f"particle speed {vmax:.3g} mm/s exceeds ceiling"
                )


def step_world(world: SoftWorld, tools, dt: float, substeps: int = 1,
               iterations: int = 10) -> SoftWorld:
    """Advance the world by dt seconds.  Mutates and returns the world."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if substeps < 1 or iterations < 1:
        raise ValueError("substeps and iterations must be >= 1")
    if world._groups_dirty:
        world._rebuild_groups()
    h = dt / substeps
    movable = world.inverse_mass > 0
    for _ in range(substeps):
        world.velocities[movable] += world.gravity * h
        world.velocities *= world.damping
        world.previous_positions = world.positions.copy()
        world.positions = world.positions + world.velocities * h
        world.positions[~movable] = world.previous_positions[~movable]
        for _ in range(iterations):
            for cache in world._dist_cache:
                world._project_group(*cache)
            for cache in world._bend_cache:
                world._project_group(*cache)
        world._enforce_attachments()
        world._resolve_collisions(tools)
        for collider in world.static_colliders:
            world.positions = collider(world.positions)
        world.velocities = (world.positions - world.previous_positions) / h
        world._check_stability(h)
    return world


def project_distance(p_i, p_j, w_i, w_j, c: DistanceConstraint):
    """Single-constraint projection; returns (delta_i, delta_j).

    Corrections act along the inter-particle axis, weighted by inverse
    masses and scaled by stiffness.  The mass-weighted sum of the
    corrections is zero.
    """
    p_i = np.asarray(p_i, dtype=float)
    p_j = np.asarray(p_j, dtype=float)
    d = p_j - p_i
    dist = float(np.linalg.norm(d))
    if dist < _MIN_SEPARATION:
        raise CoincidentParticles("separation below 1e-9 mm")
    wsum = w_i + w_j
    if wsum == 0:
        return np.zeros(3), np.zeros(3)
    corr = c.stiffness * (dist - c.rest_length) / (dist * wsum) * d
    return corr * w_i, -corr * w_j


def grasp(world: SoftWorld, tool: ToolCapsule, grasp_radius: float) -> int | None:
    """Attach the nearest graspable particle within reach of the tool tip.

    Returns the attached particle index, or None if nothing is in range.
    Ties break toward the lowest index.
    """
    if tool not in world.registered_tools:
        raise ValueError("tool is not registered with this world")
    if not tool.jaw_closed:
        return None
    candidates = np.nonzero(world.graspable & (world.inverse_mass > 0))[0]
    if len(candidates) == 0:
        return None
    dists = np.linalg.norm(world.positions[candidates] - tool.tip, axis=1)
    in_range = dists <= grasp_radius
    if not np.any(in_range):
        return None
    candidates = candidates[in_range]
    dists = dists[in_range]
    best = candidates[np.lexsort((candidates, dists))[0]]
    offset = tool.frame().T @ (world.positions[best] - tool.tip)
    world.attachments[int(best)] = (tool, offset)
    return int(best)


def release(world: SoftWorld, tool: ToolCapsule) -> list[int]:
    """Remove all attachments held by the tool; returns released indices."""
    released = [p for p, (t, _) in world.attachments.items() if t is tool]
    for p in released:
        del world.attachments[p]
    return released


def _segment_segment_distance(p1, q1, p2, q2) -> float:
    """Minimum distance between segments p1-q1 and p2-q2."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = d1 @ d1
    e = d2 @ d2
    f = d2 @ r
    if a <= 1e-18 and e <= 1e-18:
        return float(np.linalg.norm(r))
    if a <= 1e-18:
        s = 0.0
        t = np.clip(f / e, 0.0, 1.0)
    else:
        c = d1 @ r
        if e <= 1e-18:
            t = 0.0
            s = np.clip(-c / a, 0.0, 1.0)
        else:
            b = d1 @ d2
            denom = a * e - b * b
            s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom > 1e-18 else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = np.clip(-c / a, 0.0, 1.0)
            elif t > 1.0:
                t = 1.0
                s = np.clip((b - c) / a, 0.0, 1.0)
    c1 = p1 + d1 * s
    c2 = p2 + d2 * t
    return float(np.linalg.norm(c1 - c2))


def cut(world: SoftWorld, tool: ToolCapsule) -> list[tuple[str, int]]:
    """Remove every constraint whose segment intersects the active capsule.

    Returns the removed constraint ids.  Inactive tools remove nothing.
    Particles are never removed.
    """
    if not tool.active:
        return []
    removed = []
    a, b = tool.endpoint_a, tool.endpoint_b
    for idx, c in enumerate(world.distance_constraints):
        if not world._distance_alive[idx]:
            continue
        d = _segment_segment_distance(
            world.positions[c.i], world.positions[c.j], a, b
        )
        if d < tool.radius:
            world._distance_alive[idx] = False
            removed.append(("distance", idx))
    for idx, c in enumerate(world.bending_constraints):
        if not world._bending_alive[idx]:
            continue
        d1 = _segment_segment_distance(
            world.positions[c.i], world.positions[c.j], a, b
        )
        d2 = _segment_segment_distance(
            world.positions[c.j], world.positions[c.k], a, b
        )
        if min(d1, d2) < tool.radius:
            world._bending_alive[idx] = False
            removed.append(("bending", idx))
    if removed:
        world._groups_dirty = True
    return removed


def resolve_capsule_collision(position, capsule: ToolCapsule) -> np.ndarray:
    """Project a point strictly inside the capsule to its surface."""
    p = np.asarray(position, dtype=float)
    a, b = capsule.endpoint_a, capsule.endpoint_b
    ab = b - a
    ab2 = float(ab @ ab)
    t = 0.0 if ab2 < 1e-18 else float(np.clip((p - a) @ ab / ab2, 0.0, 1.0))
    closest = a + t * ab
    delta = p - closest
    d = float(np.linalg.norm(delta))
    if d >= capsule.radius:
        return p
    if d < 1e-12:
        normal = capsule.frame()[:, 0]
    else:
        normal = delta / d
    return closest + normal * capsule.radius


# ----------------------------------------------------------------------
# body factories
# ----------------------------------------------------------------------
def build_rope(world: SoftWorld, name: str, start, end, n_particles: int,
               mass_per_particle: float = 1.0, stiffness: float = 1.0,
               bending: bool = True, pin_ends=(False, False)) -> range:
    """Straight chain of particles with distance (and bending) constraints."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    ts = np.linspace(0.0, 1.0, n_particles)
    pts = start[None, :] + ts[:, None] * (end - start)[None, :]
    rng_idx = world.add_particles(pts, np.full(n_particles, mass_per_particle))
    world.register_body(name, rng_idx)
    for k in range(n_particles - 1):
        world.add_distance_constraint(rng_idx[k], rng_idx[k + 1], stiffness=stiffness)
    if bending:
        for k in range(n_particles - 2):
            world.add_bending_constraint(
                rng_idx[k], rng_idx[k + 1], rng_idx[k + 2], stiffness=0.5 * stiffness
            )
    if pin_ends[0]:
        world.pin([rng_idx[0]])
    if pin_ends[1]:
        world.pin([rng_idx[-1]])
    return rng_idx


def build_stalk(world: SoftWorld, name: str, base, height: float,
                n_particles: int = 4, mass_per_particle: float = 1.0,
                stiffness: float = 1.0) -> range:
    """Vertical chain with a pinned base; the free tip carries the sphere."""
    base = np.asarray(base, dtype=float)
    top = base + np.array([0.0, 0.0, height])
    rng_idx = build_rope(
        world, name, base, top, n_particles,
        mass_per_particle=mass_per_particle, stiffness=stiffness,
        pin_ends=(True, False),
    )
    return rng_idx


def build_tissue_patch(world: SoftWorld, name: str, origin, size: float,
                       n: int = 9, mass_per_particle: float = 1.0,
                       stiffness: float = 1.0, pinned_edge: str = "y0") -> range:
    """n x n particle grid with structural and shear constraints.

    pinned_edge selects which grid edge is fixed: one of x0, x1, y0, y1.
    The patch lies in the x-y plane at the origin's z.
    """
    origin = np.asarray(origin, dtype=float)
    step = size / (n - 1)
    pts = np.array(
        [origin + np.array([i * step, j * step, 0.0]) for j in range(n) for i in range(n)]
    )
    rng_idx = world.add_particles(pts, np.full(n * n, mass_per_particle))
    world.register_body(name, rng_idx)

    def pid(i, j):
        return rng_idx[j * n + i]

    for j in range(n):
        for i in range(n):
            if i + 1 < n:
                world.add_distance_constraint(pid(i, j), pid(i + 1, j), stiffness=stiffness)
            if j + 1 < n:
                world.add_distance_constraint(pid(i, j), pid(i, j + 1), stiffness=stiffness)
            if i + 1 < n and j + 1 < n:
                world.add_distance_constraint(pid(i, j), pid(i + 1, j + 1), stiffness=stiffness)
                world.add_distance_constraint(pid(i + 1, j), pid(i, j + 1), stiffness=stiffness)
    edges = {
        "x0": [pid(0, j) for j in range(n)],
        "x1": [pid(n - 1, j) for j in range(n)],
        "y0": [pid(i, 0) for i in range(n)],
        "y1": [pid(i, n - 1) for i in range(n)],
    }
    world.pin(edges[pinned_edge])
    return rng_idx
