"""RRT motion planning in Cartesian or TPSD space with smoothing."""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidConfig, PlanNotFound, StartInCollision
from .kinematics import InstrumentLimits, PTSDState, RcmFrame, ptsd_to_pose

# Weighted-Euclidean TPSD metric: angle coordinates count per degree, depth
# counts per 10 mm, so a 10 mm depth move costs as much as a 1 degree rotation.
DEFAULT_TPSD_WEIGHTS = (1.0, 1.0, 1.0, 0.1)


@dataclass(frozen=True)
class StaticCapsule:
    """Obstacle capsule from endpoint a to b."""

    endpoint_a: tuple
    endpoint_b: tuple
    radius: float


@dataclass(frozen=True)
class StaticBox:
    """Axis-aligned obstacle box."""

    low: tuple
    high: tuple


@dataclass
class CollisionWorld:
    """Static obstacle proxies checked against a point (the instrument tip)."""

    capsules: list = field(default_factory=list)
    boxes: list = field(default_factory=list)
    clearance: float = 0.0

    def point_free(self, point: np.ndarray) -> bool:
        p = np.asarray(point, dtype=float)
        for cap in self.capsules:
            a = np.asarray(cap.endpoint_a, dtype=float)
            b = np.asarray(cap.endpoint_b, dtype=float)
            ab = b - a
            denom = float(ab @ ab)
            t = 0.0 if denom < 1e-12 else float(np.clip((p - a) @ ab / denom, 0, 1))
            if np.linalg.norm(p - (a + t * ab)) <= cap.radius + self.clearance:
                return False
        for box in self.boxes:
            lo = np.asarray(box.low, dtype=float) - self.clearance
            hi = np.asarray(box.high, dtype=float) + self.clearance
            if np.all(p >= lo) and np.all(p <= hi):
                return False
        return True


@dataclass
class PlanRequest:
    space: str  # "cartesian" | "tpsd"
    start: np.ndarray
    goal: np.ndarray
    world: CollisionWorld
    limits: InstrumentLimits
    rcm: RcmFrame | None = None  # required for tpsd space
    step_size: float = 2.0
    goal_tolerance: float = 2.0
    goal_bias: float = 0.1
    max_iterations: int = 5000
    seed: int = 0
    tpsd_weights: tuple = DEFAULT_TPSD_WEIGHTS

    def __post_init__(self):
        if self.space not in ("cartesian", "tpsd"):
            raise InvalidConfig("space must be 'cartesian' or 'tpsd'")
        if self.step_size <= 0:
            raise InvalidConfig("step_size must be positive")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise InvalidConfig("goal_bias must be in [0, 1]")
        if self.space == "tpsd" and self.rcm is None:
            raise InvalidConfig("tpsd planning requires an rcm frame")
        self.start = np.asarray(self.start, dtype=float)
        self.goal = np.asarray(self.goal, dtype=float)
        dim = 3 if self.space == "cartesian" else 4
        if self.start.shape != (dim,) or self.goal.shape != (dim,):
            raise InvalidConfig(f"start/goal must have shape ({dim},)")
        lo, hi = self._bounds()
        for name, q in (("start", self.start), ("goal", self.goal)):
            if np.any(q < lo) or np.any(q > hi):
                raise InvalidConfig(f"{name} outside configuration limits")

    def _bounds(self):
        if self.space == "cartesian":
            return (
                np.asarray(self.limits.cartesian_low, dtype=float),
                np.asarray(self.limits.cartesian_high, dtype=float),
            )
        return (
            self.limits.ptsd_low.as_array(),
            self.limits.ptsd_high.as_array(),
        )

    def _metric_weights(self) -> np.ndarray:
        if self.space == "cartesian":
            return np.ones(3)
        return np.asarray(self.tpsd_weights, dtype=float)

    def distance(self, a: np.ndarray, b: np.ndarray) -> float:
        w = self._metric_weights()
        return float(np.linalg.norm((np.asarray(a) - np.asarray(b)) * w))

    def tip_of(self, q: np.ndarray) -> np.ndarray:
        if self.space == "cartesian":
            return np.asarray(q, dtype=float)
        pose = ptsd_to_pose(PTSDState.from_array(q), self.rcm)
        return pose.position

    def config_free(self, q: np.ndarray) -> bool:
        return self.world.point_free(self.tip_of(q))


@dataclass
class Path:
    space: str
    configurations: list  # list of np.ndarray

    def __len__(self):
        return len(self.configurations)


def _edge_free(request: PlanRequest, a: np.ndarray, b: np.ndarray,
               resolution: float) -> bool:
    d = request.distance(a, b)
    n = max(1, int(np.ceil(d / resolution)))
    for k in range(1, n + 1):
        q = a + (b - a) * (k / n)
        if not request.config_free(q):
            return False
    return True


def rrt_plan(request: PlanRequest) -> Path:
    """Plan a collision-free path; deterministic for a given seed."""
    if not request.config_free(request.start):
        raise StartInCollision("start configuration is in collision")
    eps = request.step_size / 4.0
    if request.distance(request.start, request.goal) <= request.goal_tolerance:
        return Path(request.space, [request.start.copy()])

    rng = np.random.default_rng(request.seed)
    lo, hi = request._bounds()
    nodes = [request.start.copy()]
    parents = [-1]
    weights = request._metric_weights()

    for _ in range(request.max_iterations):
        if rng.random() < request.goal_bias:
            sample = request.goal
        else:
            sample = rng.uniform(lo, hi)
        arr = np.asarray(nodes)
        dists = np.linalg.norm((arr - sample) * weights, axis=1)
        near = int(np.argmin(dists))
        d = float(dists[near])
        if d < 1e-12:
            continue
        step = min(1.0, request.step_size / d)
        candidate = nodes[near] + (sample - nodes[near]) * step
        if not request.config_free(candidate):
            continue
        if not _edge_free(request, nodes[near], candidate, eps):
            continue
        nodes.append(candidate)
        parents.append(near)
        if request.distance(candidate, request.goal) <= request.goal_tolerance:
            if request.config_free(request.goal) and _edge_free(
                request, candidate, request.goal, eps
            ):
                nodes.append(request.goal.copy())
                parents.append(len(nodes) - 2)
            chain = []
            k = len(nodes) - 1
            while k >= 0:
                chain.append(nodes[k])
                k = parents[k]
            chain.reverse()
            return Path(request.space, chain)
    raise PlanNotFound(
        f"no path within {request.max_iterations} iterations"
    )


def validate_path(path: Path, request: PlanRequest,
                  resolution: float | None = None) -> bool:
    """True iff spacing/endpoint invariants hold and the dense path is free."""
    if not path.configurations:
        return False
    res = resolution if resolution is not None else request.step_size / 4.0
    configs = [np.asarray(q, dtype=float) for q in path.configurations]
    if not np.allclose(configs[0], request.start):
        return False
    if request.distance(configs[-1], request.goal) > request.goal_tolerance + 1e-9:
        return False
    for q in configs:
        if not request.config_free(q):
            return False
    for a, b in zip(configs[:-1], configs[1:]):
        if request.distance(a, b) > request.step_size + 1e-9:
            return False
        if not _edge_free(request, a, b, res):
            return False
    return True


def shortcut_smooth(path: Path, request: PlanRequest, attempts: int = 100,
                    seed: int = 0) -> Path:
    """Replace random sub-segments with straight interpolations when free."""
    configs = [np.asarray(q, dtype=float) for q in path.configurations]
    rng = np.random.default_rng(seed)
    eps = request.step_size / 4.0
    for _ in range(attempts):
        if len(configs) < 3:
            break
        i = int(rng.integers(0, len(configs) - 2))
        j = int(rng.integers(i + 2, len(configs)))
        if not _edge_free(request, configs[i], configs[j], eps):
            continue
        # re-discretize the shortcut so spacing stays within step_size
        d = request.distance(configs[i], configs[j])
        n = max(1, int(np.ceil(d / request.step_size)))
        if n + 1 >= j - i + 1:
            continue  # not actually shorter in waypoint count
        segment = [
            configs[i] + (configs[j] - configs[i]) * (k / n) for k in range(1, n)
        ]
        configs = configs[: i + 1] + segment + configs[j:]
    return Path(path.space, configs)


def write_path(path: Path, request: PlanRequest, filename: str) -> None:
    """JSON Lines: header line, then one configuration per line."""
    header = {
        "space": path.space,
        "seed": request.seed,
        "step_size": request.step_size,
        "goal_tolerance": request.goal_tolerance,
        "limits": {
            "ptsd_low": request.limits.ptsd_low.as_array().tolist(),
            "ptsd_high": request.limits.ptsd_high.as_array().tolist(),
            "cartesian_low": list(request.limits.cartesian_low),
            "cartesian_high": list(request.limits.cartesian_high),
        },
    }
    with open(filename, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for q in path.configurations:
            fh.write(json.dumps([float(x) for x in q]) + "\n")


def read_path(filename: str) -> tuple[dict, Path]:
    with open(filename, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise InvalidConfig("empty path file")
    header = json.loads(lines[0])
    configs = [np.asarray(json.loads(line), dtype=float) for line in lines[1:]]
    return header, Path(header["space"], configs)
