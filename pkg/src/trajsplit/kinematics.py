"""Forward kinematics, point Jacobians, and discrete dynamics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ScenarioError
from .model import PlanarArm, Point2D, RobotModel, RobotState, Trajectory


@dataclass(frozen=True)
class LinkPose:
    """World-frame pose of one link: its segment and absolute angle."""

    origin: np.ndarray
    angle: float
    endpoint: np.ndarray

    def __post_init__(self) -> None:
        for name in ("origin", "endpoint"):
            a = np.asarray(getattr(self, name), dtype=float).copy()
            a.flags.writeable = False
            object.__setattr__(self, name, a)


def _check_config(model: RobotModel, q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (model.dim,):
        raise ScenarioError(f"configuration must have shape ({model.dim},), got {q.shape}")
    return q


def forward_kinematics(model: RobotModel, q) -> list[LinkPose]:
    """Link poses at configuration ``q``.

    Planar arm: joint angles accumulate along the chain and each link runs
    from the previous endpoint.  Point robot: one degenerate zero-length
    link at the point's position.
    """
    q = _check_config(model, q)
    if isinstance(model, Point2D):
        return [LinkPose(origin=q, angle=0.0, endpoint=q)]
    assert isinstance(model, PlanarArm)
    origin = np.array([model.base.x, model.base.y])
    angle = model.base.angle
    poses: list[LinkPose] = []
    for length, theta in zip(model.link_lengths, q):
        angle += float(theta)
        endpoint = origin + length * np.array([np.cos(angle), np.sin(angle)])
        poses.append(LinkPose(origin=origin, angle=angle, endpoint=endpoint))
        origin = endpoint
    return poses


def point_jacobian(model: RobotModel, q, link_index: int, point) -> np.ndarray:
    """Jacobian of a world point rigidly attached to link ``link_index``.

    Returns a (2, n) matrix mapping configuration velocities to the point's
    planar velocity.  Columns for joints beyond ``link_index`` are zero: a
    point cannot move with joints farther down the chain.
    """
    q = _check_config(model, q)
    point = np.asarray(point, dtype=float)
    if isinstance(model, Point2D):
        if link_index != 0:
            raise ScenarioError(f"point robot has a single link, got link_index {link_index}")
        return np.eye(2)
    assert isinstance(model, PlanarArm)
    n = model.dim
    if not 0 <= link_index < n:
        raise ScenarioError(f"link_index must be in [0, {n}), got {link_index}")
    poses = forward_kinematics(model, q)
    jac = np.zeros((2, n))
    for j in range(link_index + 1):
        r = point - poses[j].origin
        jac[:, j] = (-r[1], r[0])
    return jac


def dynamics_step(state: RobotState, dt: float) -> tuple[np.ndarray, np.ndarray]:
    """One explicit-Euler double-integrator step: next (position, velocity)."""
    next_position = state.position + dt * state.velocity
    next_velocity = state.velocity + dt * state.acceleration
    return next_position, next_velocity


def dynamics_residual(trajectory: Trajectory) -> float:
    """Worst dynamics violation along a trajectory.

    Max over consecutive waypoint pairs of the infinity norm of the gap
    between the stored next state and ``dynamics_step`` of the current one.
    Zero for a single-waypoint trajectory.
    """
    worst = 0.0
    for i in range(len(trajectory) - 1):
        pred_pos, pred_vel = dynamics_step(trajectory.states[i], trajectory.dt)
        nxt = trajectory.states[i + 1]
        gap = max(
            float(np.max(np.abs(nxt.position - pred_pos))),
            float(np.max(np.abs(nxt.velocity - pred_vel))),
        )
        worst = max(worst, gap)
    return worst
