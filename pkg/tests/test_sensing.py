import numpy as np

from corridorlab import sensing, world
from corridorlab.plant import RobotState


def _scene(obstacles=(), peds=()):
    return world.Scene(seed=0, difficulty="easy", obstacles=list(obstacles), pedestrians=list(peds))


def test_beam_geometry():
    assert sensing.BEAM_ANGLES.shape == (72,)
    assert np.isclose(sensing.BEAM_ANGLES[0], -np.pi / 2)
    assert np.isclose(sensing.BEAM_ANGLES[-1], np.pi / 2)


def test_wall_perpendicular():
    sc = _scene()
    ranges = sensing.raycast(sc, (10.0, 1.5, 0.0))
    assert np.isclose(ranges[0], 1.5, atol=1e-9)  # -90 degrees: wall y=0
    assert np.isclose(ranges[-1], 1.5, atol=1e-9)  # +90 degrees: wall y=3


def test_max_range_clip():
    sc = _scene()
    ranges = sensing.raycast(sc, (10.0, 1.5, 0.0))
    mid = len(ranges) // 2
    assert ranges[mid] == sensing.MAX_RANGE


def test_circle_dead_ahead():
    sc = _scene([world.Obstacle("circle", 12.0, 1.5, radius=0.4)])
    r = sensing.raycast(sc, (10.0, 1.5, 0.0), beam_angles=np.array([0.0]))
    assert np.isclose(r[0], 2.0 - 0.4, atol=1e-12)


def test_pedestrian_visible():
    ped = world.Pedestrian(x=12.0, y=1.5)
    sc = _scene(peds=[ped])
    r = sensing.raycast(sc, (10.0, 1.5, 0.0), beam_angles=np.array([0.0]))
    assert np.isclose(r[0], 2.0 - ped.radius, atol=1e-12)


def _mirror_scene(sc):
    obs = [
        world.Obstacle(o.shape, o.cx, sc.corridor_width - o.cy, radius=o.radius, hx=o.hx, hy=o.hy, oid=o.oid)
        for o in sc.obstacles
    ]
    return world.Scene(seed=sc.seed, difficulty=sc.difficulty, obstacles=obs, pedestrians=[])


def test_mirror_symmetry():
    for seed in range(5):
        sc = world.generate_scene(seed, "medium")
        sc.pedestrians = []
        msc = _mirror_scene(sc)
        pose = (2.0, 1.1, 0.3)
        mpose = (2.0, sc.corridor_width - 1.1, -0.3)
        a = sensing.raycast(sc, pose)
        b = sensing.raycast(msc, mpose)
        assert np.allclose(a, b[::-1], atol=1e-9)


def _march_oracle(sc, pose, angles, step=0.001):
    x0, y0, th = pose
    out = np.empty(len(angles))
    ts = np.arange(step, sensing.MAX_RANGE + step, step)
    for i, ang in enumerate(angles):
        a = th + ang
        px = x0 + ts * np.cos(a)
        py = y0 + ts * np.sin(a)
        hit = (py <= 0.0) | (py >= sc.corridor_width)
        for row in sc.circle_arr:
            hit |= (px - row[0]) ** 2 + (py - row[1]) ** 2 <= row[2] ** 2
        for row in sc.box_arr:
            hit |= (np.abs(px - row[0]) <= row[2]) & (np.abs(py - row[1]) <= row[3])
        idx = np.argmax(hit)
        out[i] = ts[idx] if hit[idx] else sensing.MAX_RANGE
    return out


def test_raycast_against_march_oracle():
    r = np.random.default_rng(42)
    for trial in range(100):
        sc = world.generate_scene(trial, ["easy", "medium", "hard"][trial % 3])
        x = r.uniform(0.5, 3.3)  # obstacles spawn at cx >= 4, so the pose is never inside one
        y = r.uniform(0.4, sc.corridor_width - 0.4)
        th = r.uniform(-np.pi, np.pi)
        angles = r.uniform(-np.pi / 2, np.pi / 2, size=8)
        analytic = sensing.raycast(sc, (x, y, th), beam_angles=angles)
        brute = _march_oracle(sc, (x, y, th), angles)
        assert np.all(np.abs(analytic - brute) < 0.002), f"trial {trial}"


def test_observe_frame_conventions(empty_scene):
    sc = empty_scene()
    obs = sensing.observe(sc, RobotState(x=0.0, y=1.5, theta=0.0))
    assert obs.heading == 0.0
    assert obs.goal_bearing == 0.0
    assert obs.forward_speed == 0.0 and obs.yaw_rate == 0.0
    assert obs.ranges.shape == (72,)
    assert np.all(obs.ranges > 0) and np.all(obs.ranges <= sensing.MAX_RANGE)


def test_heading_wraps():
    assert np.isclose(abs(sensing.wrap_angle(3 * np.pi)), np.pi)
    assert np.isclose(abs(sensing.wrap_angle(-3 * np.pi)), np.pi)
    assert np.isclose(sensing.wrap_angle(np.pi + 0.1), -np.pi + 0.1)
    assert np.isclose(sensing.wrap_angle(-np.pi - 0.1), np.pi - 0.1)
    assert sensing.wrap_angle(np.pi) == np.pi


def test_nav_features_layout(empty_scene):
    sc = empty_scene()
    obs = sensing.observe(sc, RobotState(x=1.0, y=1.5, theta=0.1, v=0.5, omega=-0.2))
    f = sensing.nav_features(obs)
    assert f.shape == (76,)
    assert np.all(f[:72] <= 1.0)
    assert f[74] == 0.5 and f[75] == -0.2
