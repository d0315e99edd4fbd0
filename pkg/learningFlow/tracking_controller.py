"""
Action decoding and waypoint tracking for the ego vehicle.

The RL agent picks a multi-discrete action (i1, i2, i3): i1 selects one of the
five nearest route waypoints, i2 one of five reference speeds and i3 the lane
decision. The tracker turns the decoded target into (accel, steer) with a
pure-pursuit steering law and a proportional speed law.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from learningFlow.driving_sim import (
    ACCEL_MAX, ACCEL_MIN, STEER_MAX, WHEELBASE,
    LaneDecision, ScenarioConfig, StateMatrix, VehicleState,
)
from learningFlow.errors import ControllerUsageError

logger = logging.getLogger(__name__)

WAYPOINT_SPACING = 5.0
N_WAYPOINTS = 5
N_SPEED_LEVELS = 5
N_LANE_ACTIONS = 3
ACTION_DIMS = (N_WAYPOINTS, N_SPEED_LEVELS, N_LANE_ACTIONS)
MIN_LOOKAHEAD = 5.0
LOOKAHEAD_GAIN = 0.5
SPEED_GAIN = 1.0

# i3 index -> lane change (0 keep, 1 left, 2 right)
LANE_ACTION_MAP = (LaneDecision.KEEP, LaneDecision.LEFT, LaneDecision.RIGHT)


@dataclass(frozen=True)
class Waypoint:
    x: float
    y: float
    psi_ref: float


@dataclass(frozen=True)
class Route:
    """Lane-centerline polyline sampled every WAYPOINT_SPACING metres."""
    lane: int
    points: Tuple[Waypoint, ...]

    def __post_init__(self):
        if not self.points:
            raise ControllerUsageError("route must contain at least one point")


@dataclass(frozen=True)
class DecodedAction:
    waypoint: Waypoint
    v_ref: float
    lane_change: LaneDecision
    target_lane: int
    coerced: bool = False


def build_route(scenario: ScenarioConfig, lane: int, spacing: float = WAYPOINT_SPACING) -> Route:
    """
    Sample the centerline of one lane from x = 0 to the lane end.

    Args:
        scenario: Active scenario
        lane: Lane index (0 is leftmost)
        spacing: Distance between consecutive points (m)

    Returns:
        Route whose points share the lane-center y and heading 0
    """
    if not 0 <= lane < scenario.lane_count:
        raise ControllerUsageError(f"lane {lane} does not exist")
    end = scenario.lane_end_x(lane)
    xs = np.arange(0.0, end + 1e-9, spacing)
    y = scenario.lane_center_y(lane)
    return Route(lane, tuple(Waypoint(float(x), y, 0.0) for x in xs))


def speed_levels(v_limit: float) -> Tuple[float, ...]:
    """The five reference speeds 0, v/4, v/2, 3v/4, v."""
    return tuple(v_limit * k / (N_SPEED_LEVELS - 1) for k in range(N_SPEED_LEVELS))


def candidate_waypoints(state: StateMatrix, route: Route) -> List[Waypoint]:
    """
    The five route points strictly ahead of the ego, nearest first.

    Missing slots near the end of the route repeat the final route point.
    """
    ego_x = state.ego.x
    ahead = [wp for wp in route.points if wp.x > ego_x][:N_WAYPOINTS]
    last = ahead[-1] if ahead else route.points[-1]
    return ahead + [last] * (N_WAYPOINTS - len(ahead))


def decode(action: Sequence[int], state: StateMatrix, route: Route,
           scenario: ScenarioConfig) -> DecodedAction:
    """
    Decode an action triple against the ego's current lane route.

    Args:
        action: (i1 in 0..4, i2 in 0..4, i3 in 0..2)
        state: Current state matrix
        route: Centerline route of the ego's current lane
        scenario: Active scenario

    Returns:
        DecodedAction; lane changes into a missing or closed lane are coerced to keep
    """
    if len(action) != len(ACTION_DIMS):
        raise ControllerUsageError(f"expected an action triple, got {tuple(action)}")
    for index, (value, size) in enumerate(zip(action, ACTION_DIMS)):
        if not 0 <= int(value) < size:
            raise ControllerUsageError(f"sub-action {index + 1} index {value} outside 0..{size - 1}")
    i1, i2, i3 = (int(a) for a in action)

    lane_change = LANE_ACTION_MAP[i3]
    target_lane = route.lane + int(lane_change)
    coerced = False
    if lane_change != LaneDecision.KEEP and \
            not scenario.can_change_lane(route.lane, target_lane, state.ego.x):
        coerced = True
        lane_change = LaneDecision.KEEP
        target_lane = route.lane

    if target_lane != route.lane:
        route = build_route(scenario, target_lane)
    waypoint = candidate_waypoints(state, route)[i1]
    return DecodedAction(waypoint, speed_levels(scenario.v_limit)[i2], lane_change, target_lane, coerced)


def pure_pursuit_steer(ego: VehicleState, target: Waypoint) -> float:
    """
    Pure-pursuit steering angle toward a target point.

    A target closer than the lookahead max(5, 0.5 v) is pushed forward along
    its reference heading until it sits on the lookahead circle.
    """
    lookahead = max(MIN_LOOKAHEAD, LOOKAHEAD_GAIN * ego.v)
    dx, dy = target.x - ego.x, target.y - ego.y
    dist = math.hypot(dx, dy)
    if dist < lookahead:
        ux, uy = math.cos(target.psi_ref), math.sin(target.psi_ref)
        along = dx * ux + dy * uy
        t = -along + math.sqrt(along * along - dist * dist + lookahead * lookahead)
        dx, dy = dx + t * ux, dy + t * uy

    c, s = math.cos(ego.psi), math.sin(ego.psi)
    x_local = c * dx + s * dy
    y_local = -s * dx + c * dy
    curvature = 2.0 * y_local / (x_local * x_local + y_local * y_local)
    return float(np.clip(math.atan(WHEELBASE * curvature), -STEER_MAX, STEER_MAX))


def track(decoded: DecodedAction, ego: VehicleState) -> Tuple[float, float]:
    """
    Control inputs that steer the ego toward the decoded waypoint and speed.

    Returns:
        Tuple of (accel, steer), both within the simulator's control limits
    """
    accel = float(np.clip(SPEED_GAIN * (decoded.v_ref - ego.v), ACCEL_MIN, ACCEL_MAX))
    return accel, pure_pursuit_steer(ego, decoded.waypoint)


class WaypointTracker:
    """
    Decode-and-track pipeline bound to one scenario.

    Usage:
        tracker = WaypointTracker(scenario)
        decoded, control = tracker.control((2, 4, 0), state)
    """

    def __init__(self, scenario: ScenarioConfig):
        self.scenario = scenario
        self._routes = {}

    def route(self, lane: int) -> Route:
        if lane not in self._routes:
            self._routes[lane] = build_route(self.scenario, lane)
        return self._routes[lane]

    def decode(self, action: Sequence[int], state: StateMatrix) -> DecodedAction:
        lane = self.scenario.lane_index_at(state.ego.y)
        return decode(action, state, self.route(lane), self.scenario)

    def control(self, action: Sequence[int], state: StateMatrix) -> Tuple[DecodedAction, Tuple[float, float]]:
        decoded = self.decode(action, state)
        return decoded, track(decoded, state.ego)
