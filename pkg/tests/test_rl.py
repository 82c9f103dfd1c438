import filecmp

import numpy as np
import pytest

from corridorlab import rng
from corridorlab.nn import Adam, MLP
from corridorlab.nn.autodiff import Tensor
from corridorlab.rl import (
    Critic,
    GaitActor,
    GaitTrainConfig,
    PpoConfig,
    VecGaitEnv,
    collect_rollout,
    compute_gae,
    compute_gae_reference,
    gait_reward,
    gait_reward_batch,
    ppo_losses,
    ppo_update,
    train_gait,
)


def test_reward_perfect_tracking():
    q = np.array([0.7, 0.3, 0.0, 0.0, 0.0, 1.0])
    assert gait_reward(q, (0.7, 0.3), (0.0, 0.0)) == pytest.approx(0.05)


def test_reward_velocity_error():
    q = np.array([0.5, 0.0, 0.0, 0.0, 0.0, 1.0])
    assert gait_reward(q, (1.0, 0.0), (0.0, 0.0)) == pytest.approx(0.05 - 0.25)


def test_reward_terms():
    q = np.array([0.7, 0.3, 0.1, 0.2, 0.0, 1.0])
    r = gait_reward(q, (0.7, 0.3), (0.5, -0.5))
    expect = -0.005 * 0.5 - 0.5 * 0.01 - 0.1 * 0.2 + 0.05
    assert r == pytest.approx(expect)
    states = np.array([[0, 0, 0, 0.7, 0.3, 0.1, 0.2]])
    rb = gait_reward_batch(states, np.array([[0.7, 0.3]]), np.array([[0.5, -0.5]]))
    assert rb[0] == pytest.approx(expect)


def test_gae_suffix_sum():
    r = np.array([1.0, 2.0, 3.0])
    adv, ret = compute_gae(r, np.zeros(3), np.zeros(3), gamma=1.0, lam=1.0, bootstrap=0.0)
    assert np.allclose(adv, [6.0, 5.0, 3.0])
    assert np.allclose(ret, adv)


def test_gae_single_done_step():
    adv, ret = compute_gae([1.0], [0.5], [1.0])
    assert np.isclose(adv[0], 0.5)
    assert np.isclose(ret[0], 1.0)


def test_gae_matches_bruteforce_oracle():
    r = np.random.default_rng(1)
    for trial in range(5):
        rew = r.normal(size=100)
        val = r.normal(size=100)
        dn = (r.random(100) < 0.15).astype(float)
        boot = float(r.normal())
        a1, r1 = compute_gae(rew, val, dn, bootstrap=boot)
        a2, r2 = compute_gae_reference(rew, val, dn, bootstrap=boot)
        assert np.abs(a1 - a2).max() < 1e-6
        assert np.abs(r1 - r2).max() < 1e-6


def test_gae_vectorized_matches_per_worker():
    r = np.random.default_rng(2)
    rew = r.normal(size=(50, 4))
    val = r.normal(size=(50, 4))
    dn = (r.random((50, 4)) < 0.1).astype(float)
    boot = r.normal(size=4)
    a, _ = compute_gae(rew, val, dn, bootstrap=boot)
    for i in range(4):
        ai, _ = compute_gae(rew[:, i], val[:, i], dn[:, i], bootstrap=float(boot[i]))
        assert np.allclose(a[:, i], ai)


def _tiny_batch(actor, critic, M=64, seed=0):
    r = np.random.default_rng(seed)
    obs = r.standard_normal((M, 160)).astype(np.float32)
    actions, logp = actor.sample(obs, r)
    adv = r.standard_normal(M)
    ret = r.standard_normal(M)
    return {"obs": obs, "actions": actions, "logp": logp, "adv": adv, "ret": ret}


def test_ppo_identity_ratio_zero_surrogate():
    actor = GaitActor(seed=1)
    critic = Critic(seed=1)
    b = _tiny_batch(actor, critic)
    adv = (b["adv"] - b["adv"].mean()) / (b["adv"].std() + 1e-8)
    loss, m = ppo_losses(actor, critic, b["obs"], b["actions"], b["logp"], adv, b["ret"], 0.2, 0.0, 0.0)
    # logp_old was computed in f64 at sample time, graph recomputes in f32,
    # so the ratio is 1 +- O(1e-6) rather than exactly 1
    assert abs(m["pg_loss"]) < 1e-4
    assert m["clip_frac"] == 0.0
    assert abs(m["approx_kl"]) < 1e-4


def test_ppo_clipped_positive_advantage_has_zero_gradient():
    actor = GaitActor(seed=2)
    critic = Critic(seed=2)
    b = _tiny_batch(actor, critic, seed=3)
    adv = np.abs(b["adv"]) + 0.1  # all positive
    logp_old = b["logp"] - np.log(2.0)  # ratio = 2 > 1 + clip everywhere
    for mod in actor.modules():
        mod.zero_grad()
    loss, m = ppo_losses(actor, critic, b["obs"], b["actions"], logp_old, adv, b["ret"], 0.2, 0.0, 0.0)
    loss.backward()
    g = np.concatenate([mod.grad_flat() for mod in actor.modules()])
    assert m["clip_frac"] == 1.0
    assert np.abs(g).max() == 0.0


def test_ppo_equals_vanilla_pg_without_clipping():
    # with clip -> inf, one pass, at theta = theta_old the surrogate gradient
    # equals the vanilla policy-gradient estimator -mean(A * grad logp)
    actor = GaitActor(seed=3)
    critic = Critic(seed=3)
    b = _tiny_batch(actor, critic, seed=4)
    adv = b["adv"]

    for mod in actor.modules():
        mod.zero_grad()
    loss, _ = ppo_losses(actor, critic, b["obs"], b["actions"], b["logp"], adv, b["ret"], 1e9, 0.0, 0.0)
    loss.backward()
    g_ppo = np.concatenate([mod.grad_flat() for mod in actor.modules()])

    for mod in actor.modules():
        mod.zero_grad()
    logp = actor.log_prob_tensor(b["obs"], b["actions"])
    pg = -(logp * Tensor(adv.astype(np.float32))).mean()
    pg.backward()
    g_pg = np.concatenate([mod.grad_flat() for mod in actor.modules()])

    denom = max(np.abs(g_pg).max(), 1e-8)
    assert np.abs(g_ppo - g_pg).max() / denom < 1e-5


class _BanditActor:
    """2-action categorical policy on a single state, for the PPO sanity oracle."""

    def __init__(self):
        self.logits = Tensor(np.zeros(2, dtype=np.float32), requires_grad=True)

    def modules(self):
        class _M:
            def __init__(s, t):
                s.t = t

            def zero_grad(s):
                s.t.grad = None

            def grad_flat(s):
                return np.zeros(2) if s.t.grad is None else np.asarray(s.t.grad)

        return [_M(self.logits)]

    def parameters(self):
        return [self.logits]

    def probs(self) -> np.ndarray:
        z = self.logits.data.astype(np.float64)
        e = np.exp(z - z.max())
        return e / e.sum()

    def log_prob_tensor(self, obs, actions):
        B = len(actions)
        lse = self.logits.reshape(1, 2).logsumexp(axis=1)
        logsm = self.logits.reshape(1, 2) - lse.reshape(1, 1)
        onehot = np.zeros((B, 2), dtype=np.float32)
        onehot[np.arange(B), actions[:, 0].astype(int)] = 1.0
        return (logsm * Tensor(onehot)).sum(axis=1)

    def entropy_tensor(self):
        lse = self.logits.reshape(1, 2).logsumexp(axis=1)
        logsm = self.logits.reshape(1, 2) - lse.reshape(1, 1)
        return -(logsm.exp() * logsm).sum()

    def sample(self, n, r):
        return r.choice(2, size=n, p=self.probs())


def test_ppo_bandit_reaches_greedy():
    # rewards: action 0 pays 1.0, action 1 pays 0.0
    actor = _BanditActor()
    critic = Critic(seed=5)
    opt = Adam(actor.parameters() + critic.parameters(), lr=0.02)
    r = np.random.default_rng(0)
    cfg = PpoConfig(epochs=2, minibatches=2, entropy_coef=0.0, value_coef=0.5, lr=0.02)
    obs = np.zeros((64, 160), dtype=np.float32)
    for update in range(200):
        acts = actor.sample(64, r)
        rewards = (acts == 0).astype(np.float64)
        logp = np.log(actor.probs()[acts])
        vals = critic.value(obs)
        adv, ret = compute_gae(rewards[None], vals[None], np.ones((1, 64)))
        batch = {
            "obs": obs,
            "actions": acts[:, None].astype(np.float64),
            "logp": logp,
            "adv": adv[0],
            "ret": ret[0],
        }
        ppo_update(actor, critic, opt, batch, cfg, np.random.default_rng(update))
        if actor.probs()[0] > 0.95:
            break
    assert actor.probs()[0] > 0.95, f"p(best action) = {actor.probs()[0]:.3f} after 200 updates"


def test_vec_env_matches_reward_and_falls():
    env = VecGaitEnv(4, 7, randomize=True)
    o, cmds = env.observe()
    assert o.shape == (4, 160)
    a = np.full((4, 2), 0.3, dtype=np.float32)
    rew, done = env.step(a, cmds)
    assert rew.shape == (4,) and done.shape == (4,)
    expect = gait_reward_batch(env.states, cmds, a)
    fell = (env.states[:, 6] > 1.5) | (np.abs(env.states[:, 5]) > 0.6)
    assert np.allclose(rew, np.where(fell, expect - 5.0, expect))


def test_vec_env_episode_truncation_resets():
    env = VecGaitEnv(2, 3, randomize=False, episode_seconds=0.5)
    ticks = env.ep_ticks
    done_seen = False
    for t in range(ticks + 1):
        o, cmds = env.observe()
        _, done = env.step(np.full((2, 2), 0.2, dtype=np.float32), cmds)
        done_seen = done_seen or bool(done.any())
    assert done_seen
    assert env.tick_in_ep.max() <= ticks


def test_train_gait_determinism(tmp_path):
    def run(d):
        cfg = GaitTrainConfig(
            seed=11, workers=4, horizon=64, total_steps=2048, randomize=True, eval_every=4, out_dir=str(d)
        )
        return train_gait(cfg)

    p1 = run(tmp_path / "a")
    p2 = run(tmp_path / "b")
    assert filecmp.cmp(p1, p2, shallow=False)
    assert filecmp.cmp(tmp_path / "a" / "final.ckpt", tmp_path / "b" / "final.ckpt", shallow=False)
    assert filecmp.cmp(tmp_path / "a" / "curve.csv", tmp_path / "b" / "curve.csv", shallow=False)


@pytest.mark.slow
def test_short_training_improves_return():
    actor = GaitActor(seed=0)
    critic = Critic(seed=0)
    opt = Adam(actor.parameters() + critic.parameters(), lr=3e-4)
    env = VecGaitEnv(16, 0, randomize=False)
    roll = rng.stream(0, rng.TRAIN, 0)
    upd = rng.stream(0, rng.TRAIN, 1)
    first, last = [], []
    for k in range(25):
        b = collect_rollout(env, actor, critic, 256, roll)
        ppo_update(actor, critic, opt, b, PpoConfig(), upd)
        (first if k < 5 else last).append(b["mean_reward"])
    assert np.mean(last[-5:]) > np.mean(first) + 0.1
