"""
Deterministic 2D multi-lane driving environment for the overtaking and
on-ramp merging tasks.

Coordinates: x runs along the road, y is lateral and grows to the left, so a
positive heading turns left. Lane 0 is the leftmost lane. In the merging task
the rightmost lane is the on-ramp, which ends at the end of the merge zone.
"""

import logging
import math
from dataclasses import dataclass, field, asdict
from enum import Enum, IntEnum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from learningFlow.errors import ConfigurationError, SimulationUsageError

logger = logging.getLogger(__name__)

# Vehicle and control limits
WHEELBASE = 2.9
VEHICLE_LENGTH = 4.7
VEHICLE_WIDTH = 1.9
ACCEL_MIN = -6.0
ACCEL_MAX = 3.0
STEER_MAX = 0.5

# Observation layout
N_SV_MAX = 8
N_OBS_MAX = 4
OBS_FEATURES = 4
PADDING_ROW = (100.0, 0.0, 0.0, 0.0)
PADDING_DISTANCE = 100.0

# Curriculum axes
N_TD_MAX = 3
N_MM_MAX = 2

SUCCESS_LANE_TOLERANCE = 0.5
GOAL_DEPTH = 20.0
ROAD_END_MARGIN = 20.0

# Surrounding-vehicle behavior
IDM_MAX_ACCEL = 1.5
IDM_COMFORT_DECEL = 2.0
IDM_MIN_GAP = 2.0
IDM_DELTA = 4.0
MOBIL_ACCEL_THRESHOLD = 0.2
MOBIL_SAFE_DECEL = 4.0
SENSING_RANGE = 80.0
LANE_CHANGE_DURATION = 3.0
LANE_DECISION_COOLDOWN = 1.0
SPAWN_GAP = 8.0
MAX_SPAWN_ATTEMPTS = 200


class Task(str, Enum):
    OVERTAKING = "overtaking"
    MERGING = "merging"


class Density(IntEnum):
    EMPTY = 0
    LOW = 1
    MEDIUM = 2
    HIGH = 3


class MotionMode(IntEnum):
    STATIONARY = 0
    CONSTANT_VELOCITY = 1
    INTERACTIVE = 2


class OutcomeKind(str, Enum):
    SUCCESS = "success"
    COLLISION = "collision"
    TIMEOUT = "timeout"
    RUNNING = "running"


class LaneDecision(IntEnum):
    LEFT = -1
    KEEP = 0
    RIGHT = 1


# SV count per density level for each task
DENSITY_SV_COUNT = {
    Task.OVERTAKING: (0, 1, 2, 3),
    Task.MERGING: (0, 2, 4, 8),
}


def wrap_angle(angle: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    return math.pi - ((math.pi - angle) % (2.0 * math.pi))


@dataclass(frozen=True)
class VehicleState:
    """Kinematic state of one vehicle; (x, y) is the footprint center."""
    x: float
    y: float
    v: float
    psi: float
    length: float = VEHICLE_LENGTH
    width: float = VEHICLE_WIDTH

    def __post_init__(self):
        if self.v < 0:
            raise ValueError(f"speed must be non-negative, got {self.v}")
        if not (-math.pi < self.psi <= math.pi):
            raise ValueError(f"heading must lie in (-pi, pi], got {self.psi}")
        if self.length <= 0 or self.width <= 0:
            raise ValueError("vehicle extents must be positive")

    def footprint(self) -> "OrientedRect":
        return OrientedRect(self.x, self.y, self.length, self.width, self.psi)


@dataclass(frozen=True)
class StateMatrix:
    """Ego state plus surrounding vehicles in spawn order."""
    ego: VehicleState
    svs: Tuple[VehicleState, ...] = ()

    def __post_init__(self):
        if len(self.svs) > N_SV_MAX:
            raise ValueError(f"at most {N_SV_MAX} surrounding vehicles, got {len(self.svs)}")

    def as_array(self) -> np.ndarray:
        """Rows (x, y, v, psi); row 0 is the ego."""
        rows = [(s.x, s.y, s.v, s.psi) for s in (self.ego,) + tuple(self.svs)]
        return np.array(rows, dtype=np.float64)


@dataclass(frozen=True)
class OrientedRect:
    cx: float
    cy: float
    length: float
    width: float
    psi: float

    def corners(self) -> np.ndarray:
        c, s = math.cos(self.psi), math.sin(self.psi)
        hl, hw = self.length / 2.0, self.width / 2.0
        local = np.array([[hl, hw], [hl, -hw], [-hl, -hw], [-hl, hw]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.cx, self.cy])

    def axes(self) -> Tuple[Tuple[float, float], Tuple[float, float]]:
        c, s = math.cos(self.psi), math.sin(self.psi)
        return (c, s), (-s, c)


@dataclass(frozen=True)
class GoalRegion:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def contains(self, x: float, y: float) -> bool:
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


@dataclass(frozen=True)
class CurriculumId:
    """One member of the two-layer curriculum set (density level, motion mode)."""
    density: int
    motion_mode: int

    def __post_init__(self):
        if not (0 <= int(self.density) <= N_TD_MAX):
            raise ValueError(f"density must lie in [0, {N_TD_MAX}], got {self.density}")
        if not (0 <= int(self.motion_mode) <= N_MM_MAX):
            raise ValueError(f"motion_mode must lie in [0, {N_MM_MAX}], got {self.motion_mode}")
        object.__setattr__(self, 'density', Density(int(self.density)))
        object.__setattr__(self, 'motion_mode', MotionMode(int(self.motion_mode)))

    @property
    def label(self) -> str:
        return f"{self.density.name.lower()}/{self.motion_mode.name.lower()}"

    def to_dict(self) -> Dict[str, int]:
        return {'density': int(self.density), 'mode': int(self.motion_mode)}

    @classmethod
    def from_dict(cls, data: Dict[str, int]) -> "CurriculumId":
        return cls(int(data['density']), int(data['mode']))


@dataclass(frozen=True)
class EpisodeOutcome:
    kind: OutcomeKind
    step: int

    @property
    def terminal(self) -> bool:
        return self.kind != OutcomeKind.RUNNING


@dataclass(frozen=True)
class StepEvents:
    """Per-step flags and measurements consumed by the reward evaluator."""
    lane_change_event: bool
    lane_change_coerced: bool
    lane_change_times: int
    dist_to_goal: float
    lane_offset: float
    heading_error: float
    min_gap_sv: float
    n_sv: int
    step: int


@dataclass(frozen=True)
class DriverStyle:
    """Per-SV behavior parameters, drawn once at spawn."""
    desired_speed: float
    time_headway: float
    politeness: float
    spawn_speed: float


@dataclass(frozen=True)
class LaneNeighbors:
    leader: Optional[VehicleState] = None
    follower: Optional[VehicleState] = None
    follower_style: Optional[DriverStyle] = None


@dataclass(frozen=True)
class TrafficView:
    """What one SV sees: its own-lane leader/follower and the adjacent lanes it may enter."""
    leader: Optional[VehicleState] = None
    follower: Optional[VehicleState] = None
    left: Optional[LaneNeighbors] = None
    right: Optional[LaneNeighbors] = None
    follower_style: Optional[DriverStyle] = None


@dataclass
class ScenarioConfig:
    """
    Road and episode configuration of one task.

    merge_zone is (start_x, end_x) and only used for merging. goal_region is
    derived from the task when not given.
    """
    task: Task
    lane_count: int
    lane_width: float
    road_length: float
    v_limit: float
    dt: float
    max_steps: int
    merge_zone: Optional[Tuple[float, float]] = None
    goal_region: Optional[GoalRegion] = None

    def __post_init__(self):
        try:
            self.task = Task(self.task)
        except ValueError:
            raise ConfigurationError(f"unknown task '{self.task}'")
        if self.merge_zone is not None:
            self.merge_zone = (float(self.merge_zone[0]), float(self.merge_zone[1]))
        if isinstance(self.goal_region, dict):
            self.goal_region = GoalRegion(**self.goal_region)
        elif isinstance(self.goal_region, (list, tuple)):
            self.goal_region = GoalRegion(*self.goal_region)
        self._validate()
        if self.goal_region is None:
            self.goal_region = self._default_goal_region()

    def _validate(self):
        if self.lane_count < 2:
            raise ConfigurationError("lane_count must be at least 2")
        if self.task == Task.MERGING and self.lane_count < 3:
            raise ConfigurationError("merging needs at least two main-road lanes plus the ramp")
        if self.lane_width <= 0 or self.road_length <= 0 or self.v_limit <= 0:
            raise ConfigurationError("lane_width, road_length and v_limit must be positive")
        if self.dt <= 0:
            raise ConfigurationError("dt must be positive")
        if self.max_steps <= 0:
            raise ConfigurationError("max_steps must be positive")
        if self.task == Task.MERGING:
            if self.merge_zone is None:
                raise ConfigurationError("merging requires a merge_zone")
            start, end = self.merge_zone
            if not (0 <= start < end <= self.road_length):
                raise ConfigurationError("merge_zone must lie within the road")

    @property
    def road_width(self) -> float:
        return self.lane_count * self.lane_width

    @property
    def ramp_lane(self) -> Optional[int]:
        return self.lane_count - 1 if self.task == Task.MERGING else None

    @property
    def start_lane(self) -> int:
        if self.task == Task.MERGING:
            return self.ramp_lane
        return self.lane_count // 2

    @property
    def target_lane(self) -> int:
        # merging: second main-road lane from the left
        return 1 if self.task == Task.MERGING else self.start_lane

    @property
    def spawn_lanes(self) -> List[int]:
        if self.task == Task.MERGING:
            return [self.ramp_lane - 2, self.ramp_lane - 1]
        return list(range(self.lane_count))

    @property
    def goal_point(self) -> Tuple[float, float]:
        return (self.road_length - GOAL_DEPTH / 2.0, self.lane_center_y(self.target_lane))

    @property
    def goal_heading(self) -> float:
        return 0.0

    def _default_goal_region(self) -> GoalRegion:
        x_min = self.road_length - GOAL_DEPTH
        if self.task == Task.MERGING:
            center = self.lane_center_y(self.target_lane)
            half = self.lane_width / 2.0
            return GoalRegion(x_min, self.road_length, center - half, center + half)
        return GoalRegion(x_min, self.road_length, 0.0, self.road_width)

    def lane_center_y(self, lane: int) -> float:
        return (self.lane_count - 0.5 - lane) * self.lane_width

    def lane_index_at(self, y: float) -> int:
        lane = int(round(self.lane_count - 0.5 - y / self.lane_width))
        return min(max(lane, 0), self.lane_count - 1)

    def lane_offset(self, y: float) -> float:
        return y - self.lane_center_y(self.lane_index_at(y))

    def lane_end_x(self, lane: int) -> float:
        if lane == self.ramp_lane:
            return self.merge_zone[1]
        return self.road_length

    def lane_exists(self, lane: int, x: float) -> bool:
        return 0 <= lane < self.lane_count and x < self.lane_end_x(lane)

    def can_change_lane(self, from_lane: int, to_lane: int, x: float) -> bool:
        """Whether a lane change from from_lane into to_lane is feasible at longitudinal position x."""
        if not self.lane_exists(to_lane, x):
            return False
        if self.task == Task.MERGING:
            if to_lane == self.ramp_lane:
                return False
            if from_lane == self.ramp_lane:
                start, end = self.merge_zone
                return start <= x < end
        return True

    def barriers(self) -> List[OrientedRect]:
        """Static obstacles: both road edges, the road end and (merging) the ramp end."""
        span = self.road_length + 2 * ROAD_END_MARGIN
        mid_x = self.road_length / 2.0
        rects = [
            OrientedRect(mid_x, self.road_width + 0.5, span + 40.0, 1.0, 0.0),
            OrientedRect(mid_x, -0.5, span + 40.0, 1.0, 0.0),
            OrientedRect(self.road_length + ROAD_END_MARGIN + 0.5, self.road_width / 2.0,
                         1.0, self.road_width + 2.0, 0.0),
        ]
        if self.task == Task.MERGING:
            end = self.merge_zone[1]
            far = self.road_length + ROAD_END_MARGIN
            rects.append(OrientedRect((end + far) / 2.0, self.lane_center_y(self.ramp_lane),
                                      far - end, self.lane_width, 0.0))
        return rects

    @classmethod
    def from_dict(cls, data: Dict) -> "ScenarioConfig":
        """Build a scenario from a mapping whose keys mirror the dataclass fields."""
        known = {'task', 'lane_count', 'lane_width', 'road_length', 'v_limit', 'dt',
                 'max_steps', 'merge_zone', 'goal_region'}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown scenario keys: {', '.join(sorted(unknown))}")
        missing = known - set(data) - {'merge_zone', 'goal_region'}
        if missing:
            raise ConfigurationError(f"missing scenario keys: {', '.join(sorted(missing))}")
        try:
            return cls(
                task=data['task'],
                lane_count=int(data['lane_count']),
                lane_width=float(data['lane_width']),
                road_length=float(data['road_length']),
                v_limit=float(data['v_limit']),
                dt=float(data['dt']),
                max_steps=int(data['max_steps']),
                merge_zone=data.get('merge_zone'),
                goal_region=data.get('goal_region'),
            )
        except (TypeError, ValueError) as e:
            raise ConfigurationError(f"invalid scenario value: {e}")

    def to_dict(self) -> Dict:
        return {
            'task': self.task.value,
            'lane_count': self.lane_count,
            'lane_width': self.lane_width,
            'road_length': self.road_length,
            'v_limit': self.v_limit,
            'dt': self.dt,
            'max_steps': self.max_steps,
            'merge_zone': list(self.merge_zone) if self.merge_zone else None,
            'goal_region': asdict(self.goal_region),
        }


def default_scenario(task: str) -> ScenarioConfig:
    """Built-in scenario for a task (3-lane overtaking, 3+1-lane merging)."""
    task = Task(task)
    if task == Task.OVERTAKING:
        return ScenarioConfig(task=task, lane_count=3, lane_width=3.5, road_length=200.0,
                              v_limit=15.0, dt=0.1, max_steps=400)
    return ScenarioConfig(task=task, lane_count=4, lane_width=3.5, road_length=250.0,
                          v_limit=15.0, dt=0.1, max_steps=500, merge_zone=(60.0, 160.0))


def check_collision(a: OrientedRect, b: OrientedRect) -> bool:
    """
    Separating-axis test for two oriented rectangles.

    Returns:
        True iff the rectangles intersect (touching counts as intersecting)
    """
    corners_a = a.corners()
    corners_b = b.corners()
    for axis in a.axes() + b.axes():
        axis = np.asarray(axis)
        proj_a = corners_a @ axis
        proj_b = corners_b @ axis
        if proj_a.max() < proj_b.min() or proj_b.max() < proj_a.min():
            return False
    return True


def ego_reference_style(scenario: ScenarioConfig, ego: VehicleState) -> DriverStyle:
    """IDM parameters assumed for the ego when an SV weighs its effect on it."""
    return DriverStyle(desired_speed=scenario.v_limit, time_headway=1.5, politeness=0.0, spawn_speed=ego.v)


def idm_acceleration(vehicle: VehicleState, leader: Optional[VehicleState], style: DriverStyle) -> float:
    """Intelligent driver model acceleration for one vehicle behind an optional leader."""
    desired = max(style.desired_speed, 0.1)
    accel = IDM_MAX_ACCEL * (1.0 - (vehicle.v / desired) ** IDM_DELTA)
    if leader is not None:
        gap = leader.x - vehicle.x - (leader.length + vehicle.length) / 2.0
        gap = max(gap, 0.1)
        dv = vehicle.v - leader.v
        s_star = IDM_MIN_GAP + max(0.0, vehicle.v * style.time_headway
                                   + vehicle.v * dv / (2.0 * math.sqrt(IDM_MAX_ACCEL * IDM_COMFORT_DECEL)))
        accel -= IDM_MAX_ACCEL * (s_star / gap) ** 2
    return accel


def lane_change_gain(vehicle: VehicleState, view: TrafficView, target: LaneNeighbors,
                      style: DriverStyle) -> Optional[float]:
    """
    MOBIL incentive for moving into the target lane, or None if the move is unsafe.

    Followers are evaluated with their own IDM parameters; a view built
    without follower styles falls back to the deciding vehicle's style.
    """
    for other, ahead in ((target.leader, True), (target.follower, False)):
        if other is None:
            continue
        gap = (other.x - vehicle.x if ahead else vehicle.x - other.x) - (other.length + vehicle.length) / 2.0
        if gap < IDM_MIN_GAP:
            return None

    new_follower_gain = 0.0
    if target.follower is not None:
        follower_style = target.follower_style or style
        before = idm_acceleration(target.follower, target.leader, follower_style)
        after = idm_acceleration(target.follower, vehicle, follower_style)
        if after < -MOBIL_SAFE_DECEL:
            return None
        new_follower_gain = after - before

    own_before = idm_acceleration(vehicle, view.leader, style)
    own_after = idm_acceleration(vehicle, target.leader, style)

    old_follower_gain = 0.0
    if view.follower is not None:
        follower_style = view.follower_style or style
        before = idm_acceleration(view.follower, vehicle, follower_style)
        after = idm_acceleration(view.follower, view.leader, follower_style)
        old_follower_gain = after - before

    return own_after - own_before + style.politeness * (new_follower_gain + old_follower_gain)


def sv_policy(mode: MotionMode, vehicle: VehicleState, view: TrafficView,
              style: DriverStyle, dt: float) -> Tuple[float, LaneDecision]:
    """
    Acceleration and lane decision of one surrounding vehicle.

    Args:
        mode: Motion mode of the curriculum
        vehicle: The SV's own state
        view: Local traffic around the SV
        style: The SV's drawn behavior parameters
        dt: Simulation step (s)

    Returns:
        Tuple of (acceleration, lane decision)
    """
    mode = MotionMode(mode)
    if mode == MotionMode.STATIONARY:
        return float(np.clip(-vehicle.v / dt, ACCEL_MIN, 0.0)), LaneDecision.KEEP
    if mode == MotionMode.CONSTANT_VELOCITY:
        accel = (style.spawn_speed - vehicle.v) / dt
        return float(np.clip(accel, ACCEL_MIN, ACCEL_MAX)), LaneDecision.KEEP

    leader = view.leader
    if leader is not None and leader.x - vehicle.x > SENSING_RANGE:
        leader = None
    accel = float(np.clip(idm_acceleration(vehicle, leader, style), ACCEL_MIN, ACCEL_MAX))

    decision = LaneDecision.KEEP
    best_gain = MOBIL_ACCEL_THRESHOLD
    for candidate, neighbors in ((LaneDecision.LEFT, view.left), (LaneDecision.RIGHT, view.right)):
        if neighbors is None:
            continue
        gain = lane_change_gain(vehicle, view, neighbors, style)
        if gain is not None and gain > best_gain:
            best_gain = gain
            decision = candidate
    return accel, decision


def observe(state: StateMatrix, goal: Tuple[float, float], goal_heading: float = 0.0) -> np.ndarray:
    """
    Build the fixed-width observation matrix.

    Row 0 holds the destination deltas and the absolute ego speed; rows
    1..N_OBS_MAX hold the nearest SVs relative to the ego, nearest first,
    padded with PADDING_ROW.

    Returns:
        Array of shape (N_OBS_MAX + 1, 4)
    """
    ego = state.ego
    obs = np.tile(np.asarray(PADDING_ROW, dtype=np.float64), (N_OBS_MAX + 1, 1))
    obs[0] = (goal[0] - ego.x, goal[1] - ego.y, ego.v, wrap_angle(goal_heading - ego.psi))

    if state.svs:
        distances = [math.hypot(sv.x - ego.x, sv.y - ego.y) for sv in state.svs]
        order = sorted(range(len(state.svs)), key=lambda i: distances[i])
        for row, index in enumerate(order[:N_OBS_MAX], start=1):
            sv = state.svs[index]
            obs[row] = (sv.x - ego.x, sv.y - ego.y, sv.v - ego.v, wrap_angle(sv.psi - ego.psi))
    return obs


def bicycle_update(vehicle: VehicleState, accel: float, steer: float, dt: float) -> VehicleState:
    """Explicit-Euler kinematic bicycle step."""
    x = vehicle.x + vehicle.v * math.cos(vehicle.psi) * dt
    y = vehicle.y + vehicle.v * math.sin(vehicle.psi) * dt
    psi = wrap_angle(vehicle.psi + vehicle.v / WHEELBASE * math.tan(steer) * dt)
    v = max(0.0, vehicle.v + accel * dt)
    return VehicleState(x, y, v, psi, vehicle.length, vehicle.width)


@dataclass
class _SurroundingVehicle:
    state: VehicleState
    style: DriverStyle
    lane: int
    target_lane: int
    cooldown: float = 0.0


class DrivingSimulator:
    """
    One driving environment instance. Owns its state; not shared between workers.

    Usage:
        sim = DrivingSimulator(default_scenario("overtaking"))
        state = sim.reset(CurriculumId(1, 2), seed=7)
        state, outcome, events = sim.step((accel, steer))
    """

    def __init__(self, scenario: ScenarioConfig, record_trajectory: bool = False):
        self.scenario = scenario
        self.record_trajectory = record_trajectory
        self._barriers = scenario.barriers()
        self._ego: Optional[VehicleState] = None
        self._svs: List[_SurroundingVehicle] = []
        self._mode = MotionMode.STATIONARY
        self._step = 0
        self._outcome: Optional[EpisodeOutcome] = None
        self._ego_lane = scenario.start_lane
        self._lane_change_times = 0
        self.trajectory: List[Tuple[int, int, float, float, float, float]] = []

    # ------------------------------------------------------------------ reset

    def reset(self, curriculum: CurriculumId, seed: int) -> StateMatrix:
        """
        Spawn the ego and the surrounding vehicles of a curriculum.

        Args:
            curriculum: Member of the curriculum set
            seed: Any integer; identical inputs give identical states

        Returns:
            The initial StateMatrix
        """
        sc = self.scenario
        rng = np.random.default_rng(seed)
        ego_x = float(rng.uniform(5.0, 15.0))
        ego_v = float(rng.uniform(0.3, 0.5)) * sc.v_limit
        ego = VehicleState(ego_x, sc.lane_center_y(sc.start_lane), ego_v, 0.0)

        count = DENSITY_SV_COUNT[sc.task][int(curriculum.density)]
        occupied = [ego]
        svs = []
        for _ in range(count):
            sv = self._spawn_sv(rng, ego, occupied, curriculum.motion_mode)
            occupied.append(sv.state)
            svs.append(sv)

        self._begin(ego, svs, curriculum.motion_mode)
        return self.state

    def _spawn_sv(self, rng: np.random.Generator, ego: VehicleState,
                  occupied: Sequence[VehicleState], mode: MotionMode) -> _SurroundingVehicle:
        sc = self.scenario
        if sc.task == Task.OVERTAKING:
            x_lo, x_hi = ego.x + 25.0, max(ego.x + 30.0, sc.road_length * 0.6)
        else:
            x_lo, x_hi = 0.0, sc.merge_zone[1] + 30.0
        lanes = sc.spawn_lanes

        for _ in range(MAX_SPAWN_ATTEMPTS):
            lane = lanes[int(rng.integers(len(lanes)))]
            x = float(rng.uniform(x_lo, x_hi))
            spawn_speed = float(rng.uniform(0.3, 0.6)) * sc.v_limit
            style = DriverStyle(
                desired_speed=float(rng.uniform(0.6, 1.0)) * sc.v_limit,
                time_headway=float(rng.uniform(1.0, 2.0)),
                politeness=float(rng.uniform(0.2, 0.8)),
                spawn_speed=spawn_speed,
            )
            speed = 0.0 if mode == MotionMode.STATIONARY else spawn_speed
            candidate = VehicleState(x, sc.lane_center_y(lane), speed, 0.0)
            padded = OrientedRect(x, candidate.y, candidate.length + SPAWN_GAP, candidate.width, 0.0)
            if not any(check_collision(padded, other.footprint()) for other in occupied):
                return _SurroundingVehicle(candidate, style, lane, lane)

        raise ConfigurationError(
            f"could not place surrounding vehicle after {MAX_SPAWN_ATTEMPTS} attempts "
            f"(road too short for this density)")

    def place(self, state: StateMatrix, curriculum: CurriculumId,
              styles: Optional[Sequence[DriverStyle]] = None) -> StateMatrix:
        """Start an episode from an explicit state (scripted scenarios and tests)."""
        sc = self.scenario
        svs = []
        for index, sv in enumerate(state.svs):
            style = styles[index] if styles else DriverStyle(0.8 * sc.v_limit, 1.5, 0.5, sv.v)
            lane = sc.lane_index_at(sv.y)
            svs.append(_SurroundingVehicle(sv, style, lane, lane))
        self._begin(state.ego, svs, curriculum.motion_mode)
        return self.state

    def _begin(self, ego: VehicleState, svs: List[_SurroundingVehicle], mode: MotionMode):
        self._ego = ego
        self._svs = svs
        self._mode = MotionMode(mode)
        self._step = 0
        self._outcome = EpisodeOutcome(OutcomeKind.RUNNING, 0)
        self._ego_lane = self.scenario.lane_index_at(ego.y)
        self._lane_change_times = 0
        self.trajectory = []
        self._record()

    # ------------------------------------------------------------------ state

    @property
    def state(self) -> StateMatrix:
        if self._ego is None:
            raise SimulationUsageError("simulator not reset. Call reset first.")
        return StateMatrix(self._ego, tuple(sv.state for sv in self._svs))

    @property
    def outcome(self) -> EpisodeOutcome:
        return self._outcome

    @property
    def ego_lane(self) -> int:
        return self._ego_lane

    def observe(self) -> np.ndarray:
        return observe(self.state, self.scenario.goal_point, self.scenario.goal_heading)

    # ------------------------------------------------------------------ step

    def step(self, control: Tuple[float, float],
             lane_change_coerced: bool = False) -> Tuple[StateMatrix, EpisodeOutcome, StepEvents]:
        """
        Advance the episode by one dt.

        Args:
            control: (accel m/s^2, steer rad); clamped to the control limits
            lane_change_coerced: Passed through from the action decoder into StepEvents

        Returns:
            Tuple of (new state, outcome, step events)
        """
        if self._ego is None:
            raise SimulationUsageError("simulator not reset. Call reset first.")
        if self._outcome.terminal:
            raise SimulationUsageError(f"episode already ended with {self._outcome.kind.value}")

        sc = self.scenario
        accel = float(np.clip(control[0], ACCEL_MIN, ACCEL_MAX))
        steer = float(np.clip(control[1], -STEER_MAX, STEER_MAX))

        sv_commands = [self._sv_command(index) for index in range(len(self._svs))]
        self._ego = bicycle_update(self._ego, accel, steer, sc.dt)
        for sv, (sv_accel, decision) in zip(self._svs, sv_commands):
            self._advance_sv(sv, sv_accel, decision)
        self._step += 1

        lane = sc.lane_index_at(self._ego.y)
        lane_change_event = lane != self._ego_lane
        if lane_change_event:
            self._lane_change_times += 1
            self._ego_lane = lane

        self._outcome = EpisodeOutcome(self._classify(), self._step)
        self._record()
        return self.state, self._outcome, self._events(lane_change_event, lane_change_coerced)

    def _classify(self) -> OutcomeKind:
        sc = self.scenario
        ego_rect = self._ego.footprint()
        obstacles = [sv.state.footprint() for sv in self._svs] + self._barriers
        if any(check_collision(ego_rect, other) for other in obstacles):
            return OutcomeKind.COLLISION
        if sc.goal_region.contains(self._ego.x, self._ego.y) \
                and abs(sc.lane_offset(self._ego.y)) < SUCCESS_LANE_TOLERANCE:
            return OutcomeKind.SUCCESS
        if self._step >= sc.max_steps:
            return OutcomeKind.TIMEOUT
        return OutcomeKind.RUNNING

    def _events(self, lane_change_event: bool, coerced: bool) -> StepEvents:
        sc = self.scenario
        ego = self._ego
        goal_x, goal_y = sc.goal_point
        gaps = [math.hypot(sv.state.x - ego.x, sv.state.y - ego.y) for sv in self._svs]
        min_gap = min(gaps) if gaps else PADDING_DISTANCE
        return StepEvents(
            lane_change_event=lane_change_event,
            lane_change_coerced=coerced,
            lane_change_times=self._lane_change_times,
            dist_to_goal=math.hypot(goal_x - ego.x, goal_y - ego.y),
            lane_offset=sc.lane_offset(ego.y),
            heading_error=wrap_angle(ego.psi - sc.goal_heading),
            min_gap_sv=float(np.clip(min_gap, 0.01, PADDING_DISTANCE)),
            n_sv=len(self._svs),
            step=self._step,
        )

    # ------------------------------------------------------------------ SVs

    def _sv_command(self, index: int) -> Tuple[float, LaneDecision]:
        sv = self._svs[index]
        view = self._traffic_view(index)
        accel, decision = sv_policy(self._mode, sv.state, view, sv.style, self.scenario.dt)
        if sv.lane != sv.target_lane or sv.cooldown > 0:
            decision = LaneDecision.KEEP
        return accel, decision

    def _traffic_view(self, index: int) -> TrafficView:
        sc = self.scenario
        me = self._svs[index]
        others = [(self._ego, ego_reference_style(sc, self._ego))]
        others += [(sv.state, sv.style) for i, sv in enumerate(self._svs) if i != index]

        def neighbors(lane: int) -> LaneNeighbors:
            leader, follower, follower_style = None, None, None
            for other, style in others:
                if sc.lane_index_at(other.y) != lane:
                    continue
                if other.x >= me.state.x:
                    if leader is None or other.x < leader.x:
                        leader = other
                elif follower is None or other.x > follower.x:
                    follower, follower_style = other, style
            return LaneNeighbors(leader, follower, follower_style)

        own = neighbors(me.lane)
        left = right = None
        if sc.can_change_lane(me.lane, me.lane - 1, me.state.x):
            left = neighbors(me.lane - 1)
        if sc.can_change_lane(me.lane, me.lane + 1, me.state.x):
            right = neighbors(me.lane + 1)
        return TrafficView(own.leader, own.follower, left, right, own.follower_style)

    def _advance_sv(self, sv: _SurroundingVehicle, accel: float, decision: LaneDecision):
        sc = self.scenario
        if decision != LaneDecision.KEEP:
            sv.target_lane = sv.lane + int(decision)
            sv.cooldown = LANE_DECISION_COOLDOWN
        sv.cooldown = max(0.0, sv.cooldown - sc.dt)

        s = sv.state
        x = s.x + s.v * sc.dt
        y = s.y
        psi = 0.0
        target_y = sc.lane_center_y(sv.target_lane)
        if abs(target_y - y) > 1e-9:
            lateral_speed = sc.lane_width / LANE_CHANGE_DURATION
            step = math.copysign(min(lateral_speed * sc.dt, abs(target_y - y)), target_y - y)
            y += step
            if s.v > 0:
                psi = math.atan2(step / sc.dt, s.v)
            if abs(target_y - y) <= 1e-9:
                y = target_y
                sv.lane = sv.target_lane
                psi = 0.0
        v = max(0.0, s.v + accel * sc.dt)
        sv.state = VehicleState(x, y, v, psi, s.length, s.width)

    # ------------------------------------------------------------------ output

    def _record(self):
        if not self.record_trajectory:
            return
        rows = [(self._step, 0, self._ego)] + [(self._step, i + 1, sv.state) for i, sv in enumerate(self._svs)]
        for step, vehicle_id, s in rows:
            self.trajectory.append((step, vehicle_id, s.x, s.y, s.v, s.psi))

    def trajectory_frame(self) -> pd.DataFrame:
        """Recorded trajectory as a DataFrame (step, vehicle_id, x, y, v, psi); vehicle 0 is the ego."""
        return pd.DataFrame(self.trajectory, columns=['step', 'vehicle_id', 'x', 'y', 'v', 'psi'])
