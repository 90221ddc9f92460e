"""
Continuous labeled MDP: car-like robot kinematics, rectangular regions,
labeling and point-to-region distance.
"""
import math
from dataclasses import dataclass
from pathlib import Path
from typing import FrozenSet, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator

from src.ltl import ATOM_PATTERN

ACTION_LOW = -1.0
ACTION_HIGH = 1.0


@dataclass(frozen=True)
class CarState:
    """Planar pose: position in meters, heading in radians."""
    x: float
    y: float
    theta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta], dtype=float)


@dataclass(frozen=True)
class CarAction:
    """Velocity and steering commands, both in [-1, 1]."""
    v: float
    phi: float

    def clipped(self) -> 'CarAction':
        return CarAction(
            float(np.clip(self.v, ACTION_LOW, ACTION_HIGH)),
            float(np.clip(self.phi, ACTION_LOW, ACTION_HIGH))
        )

    @classmethod
    def from_array(cls, values: Sequence[float]) -> 'CarAction':
        return cls(float(values[0]), float(values[1])).clipped()


@dataclass(frozen=True)
class Bounds:
    x: Tuple[float, float]
    y: Tuple[float, float]
    theta: Tuple[float, float] = (-math.pi, math.pi)

    def __post_init__(self):
        for axis in ('x', 'y', 'theta'):
            lo, hi = getattr(self, axis)
            if not lo < hi:
                raise ValueError(f"Bounds on {axis} must satisfy lo < hi, got [{lo}, {hi}]")

    def clamp(self, x: float, y: float) -> Tuple[float, float]:
        return (min(max(x, self.x[0]), self.x[1]), min(max(y, self.y[0]), self.y[1]))

    @property
    def diagonal(self) -> float:
        return math.hypot(self.x[1] - self.x[0], self.y[1] - self.y[0])


@dataclass(frozen=True)
class Region:
    """Closed axis-aligned rectangle labeled with an atomic proposition."""
    name: str
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float

    def __post_init__(self):
        if not ATOM_PATTERN.match(self.name):
            raise ValueError(f"Region name {self.name!r} is not a valid proposition")
        if not (self.x_lo < self.x_hi and self.y_lo < self.y_hi):
            raise ValueError(
                f"Region {self.name} needs x_lo < x_hi and y_lo < y_hi, "
                f"got [{self.x_lo}, {self.x_hi}] x [{self.y_lo}, {self.y_hi}]"
            )

    def contains(self, x: float, y: float) -> bool:
        return self.x_lo <= x <= self.x_hi and self.y_lo <= y <= self.y_hi

    def distance(self, x: float, y: float) -> float:
        """Euclidean distance from (x, y) to the rectangle, 0 inside."""
        dx = max(self.x_lo - x, 0.0, x - self.x_hi)
        dy = max(self.y_lo - y, 0.0, y - self.y_hi)
        return math.hypot(dx, dy)

    def encloses(self, other: 'Region') -> bool:
        return (self.x_lo <= other.x_lo and other.x_hi <= self.x_hi
                and self.y_lo <= other.y_lo and other.y_hi <= self.y_hi)

    def intersects(self, other: 'Region') -> bool:
        return (self.x_lo <= other.x_hi and other.x_lo <= self.x_hi
                and self.y_lo <= other.y_hi and other.y_lo <= self.y_hi)

    @property
    def center(self) -> Tuple[float, float]:
        return ((self.x_lo + self.x_hi) / 2, (self.y_lo + self.y_hi) / 2)

    @property
    def rect(self) -> List[float]:
        return [self.x_lo, self.x_hi, self.y_lo, self.y_hi]


@dataclass(frozen=True)
class Workspace:
    """State-space box, labeled regions and simulation step."""
    bounds: Bounds
    regions: Tuple[Region, ...]
    dt: float = 0.1
    allow_overlap: bool = False
    noise_std: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'regions', tuple(self.regions))
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be non-negative, got {self.noise_std}")
        for r in self.regions:
            if not (self.bounds.x[0] <= r.x_lo and r.x_hi <= self.bounds.x[1]
                    and self.bounds.y[0] <= r.y_lo and r.y_hi <= self.bounds.y[1]):
                raise ValueError(f"Region {r.name} lies outside the workspace bounds")
        if not self.allow_overlap:
            for i, r in enumerate(self.regions):
                for other in self.regions[i + 1:]:
                    if r.name != other.name and r.intersects(other):
                        raise ValueError(
                            f"Regions {r.name} and {other.name} overlap; "
                            f"set allow_overlap to permit this"
                        )

    @property
    def region_names(self) -> List[str]:
        return sorted({r.name for r in self.regions})

    @property
    def d_max(self) -> float:
        """Largest planar distance inside the box."""
        return self.bounds.diagonal

    def label(self, s: CarState) -> FrozenSet[str]:
        return label(self, s)

    def region_symbol(self, region: Region) -> FrozenSet[str]:
        """Names of every region that contains `region` entirely."""
        return frozenset(r.name for r in self.regions if r.encloses(region))

    def regions_named(self, name: str) -> List[Region]:
        return [r for r in self.regions if r.name == name]

    def sample_state(self, rng: np.random.Generator) -> CarState:
        """Uniform pose over the box."""
        x = rng.uniform(*self.bounds.x)
        y = rng.uniform(*self.bounds.y)
        theta = rng.uniform(*self.bounds.theta)
        return CarState(float(x), float(y), float(theta))

    def step(self, s: CarState, a: CarAction, rng: Optional[np.random.Generator] = None) -> CarState:
        """Dynamics step with this workspace's dt, bounds and optional noise."""
        nxt = step_dynamics(s, a, self.dt)
        x, y, theta = nxt.x, nxt.y, nxt.theta
        if self.noise_std > 0:
            if rng is None:
                raise ValueError("A random generator is required when noise_std > 0")
            dx, dy, dtheta = rng.normal(0.0, self.noise_std, size=3)
            x, y, theta = x + dx, y + dy, wrap_angle(theta + dtheta)
        x, y = self.bounds.clamp(x, y)
        return CarState(x, y, theta)


def wrap_angle(theta: float) -> float:
    """Map an angle into [-π, π]."""
    return math.remainder(theta, 2 * math.pi)


def slip_angle(phi: float) -> float:
    return math.atan(math.tan(phi)) / 2


def car_derivatives(theta: float, v: float, phi: float) -> Tuple[float, float, float]:
    """(ẋ, ẏ, θ̇) of the car model; position does not enter."""
    slip_gamma = slip_angle(phi)
    x_dot = v * math.cos(slip_gamma + theta) / math.cos(slip_gamma)
    y_dot = v * math.sin(slip_gamma + theta) / math.cos(slip_gamma)
    theta_dot = v * math.tan(phi)
    return x_dot, y_dot, theta_dot


def step_dynamics(
    s: CarState,
    a: CarAction,
    dt: float,
    bounds: Optional[Bounds] = None
) -> CarState:
    """
    One forward-Euler step of the car model.

    Args:
        s: Current pose
        a: Command, clipped to [-1, 1]^2 before use
        dt: Step length in seconds
        bounds: When given, (x, y) is clamped into the box

    Returns:
        Next pose with theta wrapped into [-π, π]
    """
    a = a.clipped()
    x_dot, y_dot, theta_dot = car_derivatives(s.theta, a.v, a.phi)
    x = s.x + dt * x_dot
    y = s.y + dt * y_dot
    theta = wrap_angle(s.theta + dt * theta_dot)
    if bounds is not None:
        x, y = bounds.clamp(x, y)
    return CarState(x, y, theta)


def rk4_step(s: CarState, a: CarAction, dt: float, substeps: int = 1000) -> CarState:
    """Reference integration of the same model with classical RK4, unclamped."""
    a = a.clipped()
    h = dt / substeps

    def f(state: np.ndarray) -> np.ndarray:
        return np.array(car_derivatives(state[2], a.v, a.phi))

    state = s.as_array()
    for _ in range(substeps):
        k1 = f(state)
        k2 = f(state + h / 2 * k1)
        k3 = f(state + h / 2 * k2)
        k4 = f(state + h * k3)
        state = state + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
    return CarState(float(state[0]), float(state[1]), wrap_angle(float(state[2])))


def label(w: Workspace, s: CarState) -> FrozenSet[str]:
    """Names of the regions containing (x, y); boundaries count as inside."""
    return frozenset(r.name for r in w.regions if r.contains(s.x, s.y))


def distance_to_regions(s: CarState, regions: Sequence[Region]) -> float:
    """
    Planar distance from s to the nearest region.

    Raises:
        ValueError: if regions is empty
    """
    if not regions:
        raise ValueError("distance to an empty region set is undefined")
    return min(r.distance(s.x, s.y) for r in regions)


class BoundsSpec(BaseModel):
    x: Tuple[float, float]
    y: Tuple[float, float]
    theta: Tuple[float, float] = (-math.pi, math.pi)


class RegionSpec(BaseModel):
    name: str
    rect: Tuple[float, float, float, float]

    @field_validator('name')
    @classmethod
    def _name_is_atom(cls, value: str) -> str:
        if not ATOM_PATTERN.match(value):
            raise ValueError(f"region name {value!r} must match [a-z][a-z0-9_]*")
        return value


class WorkspaceSpec(BaseModel):
    """JSON schema of a workspace file."""
    bounds: BoundsSpec
    dt: float = Field(0.1, gt=0)
    regions: List[RegionSpec] = Field(default_factory=list)
    allow_overlap: bool = False
    noise_std: float = Field(0.0, ge=0)

    def to_workspace(self) -> Workspace:
        return Workspace(
            bounds=Bounds(x=self.bounds.x, y=self.bounds.y, theta=self.bounds.theta),
            regions=tuple(Region(r.name, *r.rect) for r in self.regions),
            dt=self.dt,
            allow_overlap=self.allow_overlap,
            noise_std=self.noise_std
        )


def load_workspace(path: Union[str, Path]) -> Workspace:
    """Read and validate a workspace JSON file."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Workspace file not found: {path}")
    return WorkspaceSpec.model_validate_json(path.read_text(encoding='utf-8')).to_workspace()

