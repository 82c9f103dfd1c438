import numpy as np
import pytest

from corridorlab import world
from corridorlab.plant import RobotState


def test_scene_counts_easy():
    for seed in range(10):
        sc = world.generate_scene(seed, "easy")
        assert 2 <= len(sc.obstacles) <= 8
        assert len(sc.pedestrians) in (0, 1)


def test_scene_counts_hard():
    for seed in range(5):
        sc = world.generate_scene(seed, "hard")
        assert 12 <= len(sc.obstacles) <= 18
        assert len(sc.pedestrians) == 4


def test_scene_determinism():
    a = world.scene_to_json(world.generate_scene(7, "easy"))
    b = world.scene_to_json(world.generate_scene(7, "easy"))
    assert a == b


def test_obstacles_inside_walls_and_disjoint():
    for seed in range(5):
        sc = world.generate_scene(seed, "medium")
        for o in sc.obstacles:
            if o.shape == "circle":
                assert o.cy - o.radius > 0 and o.cy + o.radius < sc.corridor_width
                assert 0.15 <= o.radius <= 0.6
            else:
                assert o.cy - o.hy > 0 and o.cy + o.hy < sc.corridor_width
                assert 0.15 <= o.hx <= 0.6 and 0.15 <= o.hy <= 0.6
        for i, a in enumerate(sc.obstacles):
            for b in sc.obstacles[i + 1 :]:
                assert not world._obstacles_overlap(a, b)


def test_feasibility_clearance_corridor():
    # the generator's own check must pass on what it emits
    for seed in range(5):
        sc = world.generate_scene(seed, "hard")
        assert world._layout_feasible(sc.obstacles)


def test_gp_zero_variance():
    track = world.sample_gp_track(3, duration=10.0, dt=0.1, variance=0.0)
    assert np.all(track == 0.0)


def test_gp_bad_args():
    with pytest.raises(ValueError):
        world.sample_gp_track(0, duration=-1.0, dt=0.1)
    with pytest.raises(ValueError):
        world.sample_gp_track(0, duration=1.0, dt=0.1, lengthscale=0.0)


def test_gp_kernel_statistics():
    # Monte-Carlo against the analytic SE kernel: lag-0 variance and the
    # correlation at lag = lengthscale (exp(-0.5) = 0.607) and lag = 2*l.
    dt, ell, var = 0.1, 2.0, 0.09
    draws = np.stack([world.sample_gp_track(s, 60.0, dt, ell, var) for s in range(1000)])
    x = draws[:, :, 0]
    v0 = x.var(axis=0).mean()
    assert abs(v0 - var) < 0.15 * var
    lag = int(ell / dt)
    c1 = np.mean([np.corrcoef(x[:, t], x[:, t + lag])[0, 1] for t in range(0, x.shape[1] - lag, 40)])
    assert abs(c1 - np.exp(-0.5)) < 0.08
    lag2 = 2 * lag
    c2 = np.mean([np.corrcoef(x[:, t], x[:, t + lag2])[0, 1] for t in range(0, x.shape[1] - lag2, 40)])
    assert abs(c2 - np.exp(-2.0)) < 0.08


def test_step_world_goal(empty_scene):
    sc = empty_scene()
    _, st = world.step_world(sc, RobotState(x=50.0, y=1.5))
    assert st.state == world.SUCCESS


def test_step_world_collision():
    sc = world.Scene(seed=0, difficulty="easy", obstacles=[world.Obstacle("circle", 10.0, 1.5, radius=0.4)], pedestrians=[])
    _, st = world.step_world(sc, RobotState(x=10.5, y=1.5))
    assert st.state == world.FAIL_COLLISION


def test_step_world_timeout(empty_scene):
    sc = empty_scene(time_limit=2.0)
    r = RobotState(x=0.0, y=1.5)
    st = sc.status()
    while not st.terminal:
        _, st = world.step_world(sc, r)
    assert st.state == world.FAIL_TIMEOUT
    assert st.elapsed > 2.0
    assert st.elapsed <= 2.0 + 2 * world.DT


def test_terminal_is_absorbing(empty_scene):
    sc = empty_scene()
    world.step_world(sc, RobotState(x=50.0, y=1.5))
    with pytest.raises(RuntimeError):
        world.step_world(sc, RobotState(x=50.0, y=1.5))


def test_pedestrian_containment_and_speed():
    sc = world.generate_scene(1, "hard")
    r = RobotState(x=0.0, y=1.5)
    for _ in range(38 * 30):
        world.step_world(sc, r)
        if sc.state != world.RUNNING:
            break
        for p in sc.pedestrians:
            assert p.radius - 1e-9 <= p.y <= sc.corridor_width - p.radius + 1e-9
            assert np.hypot(p.vx, p.vy) <= world.PED_SPEED_MAX + 1e-9


def test_travel_distance_monotone(empty_scene):
    sc = empty_scene()
    xs = [0.0, 5.0, 3.0, 7.0, 6.0]
    prev = -1.0
    for x in xs:
        _, st = world.step_world(sc, RobotState(x=x, y=1.5))
        assert st.travel_distance >= prev
        prev = st.travel_distance
    assert prev == 7.0


def test_scene_json_roundtrip():
    sc = world.generate_scene(9, "hard")
    js = world.scene_to_json(sc)
    sc2 = world.scene_from_json(js)
    assert world.scene_to_json(sc2) == js
    # regenerated GP tracks are identical
    for p, q in zip(sc.pedestrians, sc2.pedestrians):
        assert np.array_equal(p.gp_track, q.gp_track)
