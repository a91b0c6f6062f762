"""Scenario-level collision queries built on the shape engine.

The robot body is a set of convex shapes placed by forward kinematics: one
capsule per arm link, or a zero-radius disc for a point robot.  Clearance
queries sweep all (link, obstacle) pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Capsule, Circle, ConvexShape, SignedDistanceResult, signed_distance
from .kinematics import forward_kinematics, point_jacobian
from .model import PlanarArm, Point2D, RobotState, Scenario, Trajectory

# Pairs farther apart than this are dropped from a convexification round;
# generous enough that anything able to collide within a trust step is kept.
ACTIVATION_OFFSET = 0.2
ACTIVATION_FACTOR = 3.0


def activation_distance(safety_margin: float) -> float:
    """Distance below which a collision pair enters the convex subproblem."""
    return ACTIVATION_FACTOR * safety_margin + ACTIVATION_OFFSET


def robot_body_shapes(scenario: Scenario, q) -> list[ConvexShape]:
    """Collision shapes of the robot at configuration ``q``."""
    model = scenario.robot
    if isinstance(model, Point2D):
        return [Circle(center=np.asarray(q, dtype=float), radius=0.0)]
    assert isinstance(model, PlanarArm)
    poses = forward_kinematics(model, q)
    return [
        Capsule(point_a=p.origin, point_b=p.endpoint, radius=model.link_radius)
        for p in poses
    ]


def pair_distance(scenario: Scenario, q, link_index: int, obstacle_index: int) -> SignedDistanceResult:
    """Signed distance between one robot link and one obstacle."""
    body = robot_body_shapes(scenario, q)
    return signed_distance(body[link_index], scenario.obstacles[obstacle_index])


def min_scenario_clearance(scenario: Scenario, state: RobotState) -> float:
    """Smallest signed distance over all (link, obstacle) pairs.

    +inf for an obstacle-free scenario.  Negative values mean penetration.
    """
    if not scenario.obstacles:
        return math.inf
    body = robot_body_shapes(scenario, state.position)
    worst = math.inf
    for link_shape in body:
        for obstacle in scenario.obstacles:
            worst = min(worst, signed_distance(link_shape, obstacle).value)
    return worst


@dataclass(frozen=True)
class CollisionLinearization:
    """Affine surrogate of one pair's signed distance around q0.

    sd(q) is approximated by value + gradient @ (q - q0); the gradient is the
    contact normal pulled back through the witness point Jacobian.
    """

    value: float
    gradient: np.ndarray = field(repr=False)
    link_index: int
    obstacle_index: int

    def __post_init__(self) -> None:
        g = np.asarray(self.gradient, dtype=float).copy()
        g.flags.writeable = False
        object.__setattr__(self, "gradient", g)


def linearize_collision_constraint(
    scenario: Scenario, state: RobotState, pair: tuple[int, int]
) -> CollisionLinearization:
    """Linearize the signed distance of (link, obstacle) at ``state``.

    The witness point on the robot is treated as rigidly attached to its
    link; for separated shapes this gives the exact first-order expansion.
    """
    link_index, obstacle_index = pair
    q0 = state.position
    result = pair_distance(scenario, q0, link_index, obstacle_index)
    jac = point_jacobian(scenario.robot, q0, link_index, result.point_a)
    gradient = result.normal @ jac
    return CollisionLinearization(
        value=result.value,
        gradient=gradient,
        link_index=link_index,
        obstacle_index=obstacle_index,
    )


def all_pairs(scenario: Scenario) -> list[tuple[int, int]]:
    """Every (link_index, obstacle_index) combination of a scenario."""
    n_links = 1 if isinstance(scenario.robot, Point2D) else scenario.robot.dim
    return [(k, j) for k in range(n_links) for j in range(len(scenario.obstacles))]


def active_pairs(scenario: Scenario, q, activation: float | None = None) -> list[tuple[int, int]]:
    """Pairs whose signed distance at ``q`` is within the activation band."""
    if not scenario.obstacles:
        return []
    if activation is None:
        activation = activation_distance(scenario.safety_margin)
    body = robot_body_shapes(scenario, q)
    pairs = []
    for k, link_shape in enumerate(body):
        for j, obstacle in enumerate(scenario.obstacles):
            if signed_distance(link_shape, obstacle).value <= activation:
                pairs.append((k, j))
    return pairs


def trajectory_collision_free(
    scenario: Scenario, trajectory: Trajectory, samples_per_edge: int = 5
) -> bool:
    """Whether clearance exceeds the safety margin along the whole path.

    Checks every waypoint plus ``samples_per_edge`` linearly interpolated
    configurations strictly inside each edge, so a pair of waypoints
    straddling a thin obstacle is still caught.
    """
    margin = scenario.safety_margin
    pos = trajectory.positions()
    zeros = np.zeros(trajectory.dim)
    for i in range(len(trajectory)):
        state = RobotState(pos[i], zeros, zeros)
        if min_scenario_clearance(scenario, state) <= margin:
            return False
        if i + 1 < len(trajectory):
            for k in range(1, samples_per_edge + 1):
                t = k / (samples_per_edge + 1)
                q = (1.0 - t) * pos[i] + t * pos[i + 1]
                state = RobotState(q, zeros, zeros)
                if min_scenario_clearance(scenario, state) <= margin:
                    return False
    return True
