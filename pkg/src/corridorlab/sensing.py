"""Egocentric observation assembly: planar range scan, heading, goal bearing.

The range scan is the depth-sensor proxy: 72 beams spanning 180 degrees
centered on the robot heading, max range 5 m, analytic intersections
against walls, obstacles, and pedestrian discs. Ranges are kept in meters
here; policies normalize by MAX_RANGE at their input layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._kernels import ray_ranges

N_BEAMS = 72
FOV = np.pi
MAX_RANGE = 5.0
BEAM_ANGLES = np.linspace(-FOV / 2.0, FOV / 2.0, N_BEAMS)


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = float(np.arctan2(np.sin(a), np.cos(a)))
    if w == -np.pi:
        w = np.pi
    return w


@dataclass
class Observation:
    ranges: np.ndarray  # (N_BEAMS,) meters, in (0, MAX_RANGE]
    heading: float  # radians relative to corridor axis, (-pi, pi]
    goal_bearing: float  # radians, robot frame
    forward_speed: float  # m/s
    yaw_rate: float  # rad/s

    def mirrored(self) -> "Observation":
        return Observation(self.ranges[::-1].copy(), -self.heading, -self.goal_bearing, self.forward_speed, -self.yaw_rate)


def raycast(scene, pose, beam_angles: np.ndarray = BEAM_ANGLES) -> np.ndarray:
    """Ranges to the nearest wall/obstacle/pedestrian along each beam.

    `pose` is (x, y, theta); beam angles are relative to theta. Pedestrians
    enter as discs at their current positions.
    """
    x, y, theta = float(pose[0]), float(pose[1]), float(pose[2])
    circles = scene.circle_arr
    peds = scene.ped_arr()
    if peds.shape[0]:
        circles = np.vstack([circles, np.column_stack([peds[:, 0], peds[:, 1], np.full(peds.shape[0], scene.pedestrians[0].radius)])])
    angles = theta + np.asarray(beam_angles, dtype=np.float64)
    return ray_ranges(x, y, angles, circles, scene.box_arr, scene.corridor_width, MAX_RANGE)


def observe(scene, robot_state) -> Observation:
    """Observation for the navigator at the current tick.

    Goal bearing points at the center of the goal line; at the spawn pose
    (start of corridor, centered, facing +x) it is exactly zero.
    """
    ranges = raycast(scene, (robot_state.x, robot_state.y, robot_state.theta))
    heading = wrap_angle(robot_state.theta)
    gdx = scene.goal_x - robot_state.x
    gdy = scene.corridor_width / 2.0 - robot_state.y
    goal_bearing = wrap_angle(np.arctan2(gdy, gdx) - robot_state.theta)
    return Observation(ranges, heading, goal_bearing, float(robot_state.v), float(robot_state.omega))


def nav_features(obs: Observation) -> np.ndarray:
    """Flat feature vector fed to navigation policies (scan normalized to [0,1])."""
    f = np.empty(N_BEAMS + 4, dtype=np.float64)
    f[:N_BEAMS] = obs.ranges / MAX_RANGE
    f[N_BEAMS] = obs.heading
    f[N_BEAMS + 1] = obs.goal_bearing
    f[N_BEAMS + 2] = obs.forward_speed
    f[N_BEAMS + 3] = obs.yaw_rate
    return f
