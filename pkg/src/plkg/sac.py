"""Multi-agent soft actor-critic trainer.

Two actors (Alice, Bob) act on the same observation; two critics (with
target copies) score the joint action. The bootstrap always takes the
elementwise minimum of the two target critics, the temperature adapts by
gradient on log alpha, and every update is deterministic given the run
seed. Episodes end by time limit; the bootstrap is still masked at done,
an accepted small bias at this scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import EveMode
from .env import BeamEnv
from .numerics import (
    STREAM_CHANNEL,
    STREAM_NET_INIT,
    STREAM_POLICY,
    STREAM_REPLAY,
    STREAM_WARMUP,
    RngStream,
)
from .nncore import (
    Adam,
    Dense,
    LayerNorm,
    MLP,
    ReLU,
    soft_update,
    squashed_gaussian_backward,
    squashed_gaussian_sample,
)


class TrainingDivergedError(RuntimeError):
    """A loss went non-finite; carries a summary of the offending batch."""


@dataclass
class SACConfig:
    gamma: float = 0.99
    tau_target: float = 0.005
    lr_actor: float = 1e-4
    lr_critic: float = 1e-4
    lr_alpha: float = 1e-4
    alpha_init: float = 0.02
    target_entropy: float | None = None  # defaults to -(joint action dim)
    batch_size: int = 256
    buffer_capacity: int = 100_000
    warmup_steps: int = 1000
    updates_per_step: int = 1
    hidden: int = 512

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must be in (0, 1), got {self.gamma}")
        if not 0.0 < self.tau_target <= 1.0:
            raise ValueError(f"tau_target must be in (0, 1], got {self.tau_target}")
        if self.alpha_init <= 0:
            raise ValueError("alpha_init must be positive")
        for name in ("lr_actor", "lr_critic", "lr_alpha"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if min(self.batch_size, self.buffer_capacity, self.hidden) < 1:
            raise ValueError("batch_size, buffer_capacity and hidden must be >= 1")
        if self.warmup_steps < 0 or self.updates_per_step < 0:
            raise ValueError("warmup_steps and updates_per_step must be >= 0")


class ReplayBuffer:
    """Uniform-sampling ring buffer; overwrites oldest records first."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.action = np.zeros((capacity, act_dim))
        self.reward = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.size = 0
        self.cursor = 0

    def __len__(self):
        return self.size

    def push(self, obs, action, reward, next_obs, done):
        i = self.cursor
        self.obs[i] = obs
        self.action[i] = action
        self.reward[i] = reward
        self.next_obs[i] = next_obs
        self.done[i] = float(done)
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample_indices(self, batch: int, rng: RngStream) -> np.ndarray:
        if self.size == 0:
            raise ValueError("cannot sample from an empty buffer")
        return rng.integers(0, self.size, size=batch)

    def sample(self, batch: int, rng: RngStream) -> dict:
        idx = self.sample_indices(batch, rng)
        return {
            "obs": self.obs[idx],
            "action": self.action[idx],
            "reward": self.reward[idx],
            "next_obs": self.next_obs[idx],
            "done": self.done[idx],
        }


class GaussianActor:
    """Squashed-Gaussian policy: shared trunk, mean and log-std heads."""

    def __init__(self, obs_dim: int, act_dim: int, hidden: int, rng: RngStream):
        self.act_dim = act_dim
        self.trunk = [
            Dense(obs_dim, hidden, rng), LayerNorm(hidden), ReLU(),
            Dense(hidden, hidden, rng), LayerNorm(hidden), ReLU(),
        ]
        self.mean_head = Dense(hidden, act_dim, rng)
        self.log_std_head = Dense(hidden, act_dim, rng)
        self._modules = self.trunk + [self.mean_head, self.log_std_head]

    def _forward_trunk(self, obs):
        x = obs
        for layer in self.trunk:
            x = layer.forward(x)
        return x

    def heads(self, obs):
        feat = self._forward_trunk(obs)
        return self.mean_head.forward(feat), self.log_std_head.forward(feat)

    def sample(self, obs, noise):
        mean, log_std = self.heads(obs)
        return squashed_gaussian_sample(mean, log_std, noise)

    def mean_action(self, obs):
        mean, _ = self.heads(obs)
        return np.tanh(mean)

    def backward(self, g_mean, g_log_std, accumulate: bool = True):
        g = self.mean_head.backward(g_mean, accumulate)
        g = g + self.log_std_head.backward(g_log_std, accumulate)
        for layer in reversed(self.trunk):
            g = layer.backward(g, accumulate)
        return g

    def zero_grad(self):
        for m in self._modules:
            m.zero_grad()

    def param_list(self):
        return [p for m in self._modules for p in m.param_list()]

    def grad_list(self):
        return [g for m in self._modules for g in m.grad_list()]

    def named_params(self, prefix: str):
        out = {}
        for i, m in enumerate(self._modules):
            for k in sorted(m.params):
                out[f"{prefix}.{i}.{k}"] = m.params[k]
        return out


class QCritic:
    """State-joint-action value network."""

    def __init__(self, obs_dim: int, act_dim: int, hidden: int, rng: RngStream):
        self.obs_dim = obs_dim
        self.net = MLP(obs_dim + act_dim, [hidden, hidden], 1, rng)

    def forward(self, obs, action):
        return self.net.forward(np.concatenate([obs, action], axis=1))[:, 0]

    def backward(self, gq, accumulate: bool = True):
        """Returns (g_obs, g_action) for upstream per-sample dL/dq."""
        gin = self.net.backward(np.asarray(gq)[:, None], accumulate=accumulate)
        return gin[:, : self.obs_dim], gin[:, self.obs_dim:]

    def zero_grad(self):
        self.net.zero_grad()

    def param_list(self):
        return self.net.param_list()

    def grad_list(self):
        return self.net.grad_list()

    def named_params(self, prefix: str):
        return self.net.named_params(prefix)


def bootstrap_target(reward, done, gamma, q1, q2, log_prob, alpha):
    """y = r + gamma (1 - done) (min(q1, q2) - alpha log pi); no grads flow."""
    return reward + gamma * (1.0 - done) * (np.minimum(q1, q2) - alpha * log_prob)


def critic_loss_value(q, y):
    """Mean over the batch of half squared TD error."""
    d = q - y
    return float(0.5 * np.mean(d * d))


def alpha_grad(mean_log_prob: float, target_entropy: float, alpha: float) -> float:
    """dL/d(log alpha) for L = E[-alpha log pi - alpha H0]."""
    return -alpha * (mean_log_prob + target_entropy)


@dataclass
class EpisodeRow:
    episode: int
    mean_reward: float
    mean_rk: float
    mean_rd: float
    eavesdrop_frac: float
    alpha: float
    critic_loss: float
    actor_loss: float
    alpha_loss: float
    clamp_count: int


CSV_COLUMNS = ("episode", "mean_reward", "mean_rk", "mean_rd",
               "eavesdrop_frac", "alpha", "critic_loss", "actor_loss",
               "alpha_loss", "clamp_count")


class MASACTrainer:
    """Owns both actors, the shared twin critics and their targets."""

    def __init__(self, env: BeamEnv, config: SACConfig, seed: int):
        self.env = env
        self.config = config
        self.seed = seed
        self.obs_dim = 5
        self.agent_act_dim = 2 * env.n
        self.joint_dim = 2 * self.agent_act_dim
        self.target_entropy = (
            config.target_entropy if config.target_entropy is not None
            else -float(self.joint_dim)
        )
        root = RngStream(seed)
        h = config.hidden
        self.actor_a = GaussianActor(self.obs_dim, self.agent_act_dim, h,
                                     root.child(STREAM_NET_INIT, 0))
        self.actor_b = GaussianActor(self.obs_dim, self.agent_act_dim, h,
                                     root.child(STREAM_NET_INIT, 1))
        self.critic_1 = QCritic(self.obs_dim, self.joint_dim, h,
                                root.child(STREAM_NET_INIT, 2))
        self.critic_2 = QCritic(self.obs_dim, self.joint_dim, h,
                                root.child(STREAM_NET_INIT, 3))
        self.target_1 = QCritic(self.obs_dim, self.joint_dim, h,
                                root.child(STREAM_NET_INIT, 2))
        self.target_2 = QCritic(self.obs_dim, self.joint_dim, h,
                                root.child(STREAM_NET_INIT, 3))
        self.log_alpha = np.array(math.log(config.alpha_init))
        self.opt_actor_a = Adam(self.actor_a.param_list(), config.lr_actor)
        self.opt_actor_b = Adam(self.actor_b.param_list(), config.lr_actor)
        self.opt_critic_1 = Adam(self.critic_1.param_list(), config.lr_critic)
        self.opt_critic_2 = Adam(self.critic_2.param_list(), config.lr_critic)
        self.opt_alpha = Adam([self.log_alpha], config.lr_alpha)
        self._policy_rng = root.child(STREAM_POLICY)
        self._warmup_rng = root.child(STREAM_WARMUP)
        self._replay_rng = root.child(STREAM_REPLAY)
        self._root = root
        self.buffer = ReplayBuffer(config.buffer_capacity, self.obs_dim,
                                   self.joint_dim)
        self.total_steps = 0

    # -- acting ---------------------------------------------------------

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha))

    def act(self, obs_vec: np.ndarray, deterministic: bool = False) -> np.ndarray:
        obs = obs_vec[None, :]
        if deterministic:
            a = self.actor_a.mean_action(obs)[0]
            b = self.actor_b.mean_action(obs)[0]
        else:
            na = self._policy_rng.normal((1, self.agent_act_dim))
            nb = self._policy_rng.normal((1, self.agent_act_dim))
            a = self.actor_a.sample(obs, na)[0][0]
            b = self.actor_b.sample(obs, nb)[0][0]
        return np.concatenate([a, b])

    # -- losses / updates -------------------------------------------------

    def _joint_sample(self, obs):
        """Fresh reparameterized joint action at obs; returns pieces for backprop."""
        na = self._policy_rng.normal(obs.shape[:1] + (self.agent_act_dim,))
        nb = self._policy_rng.normal(obs.shape[:1] + (self.agent_act_dim,))
        act_a, logp_a, cache_a = self.actor_a.sample(obs, na)
        act_b, logp_b, cache_b = self.actor_b.sample(obs, nb)
        joint = np.concatenate([act_a, act_b], axis=1)
        return joint, logp_a, logp_b, cache_a, cache_b

    def critic_target(self, batch) -> np.ndarray:
        """Bootstrap values; nothing here affects gradients."""
        joint, logp_a, logp_b, _, _ = self._joint_sample(batch["next_obs"])
        q1 = self.target_1.forward(batch["next_obs"], joint)
        q2 = self.target_2.forward(batch["next_obs"], joint)
        return bootstrap_target(batch["reward"], batch["done"],
                                self.config.gamma, q1, q2,
                                logp_a + logp_b, self.alpha)

    def update_critics(self, batch, y) -> float:
        total = 0.0
        n = y.shape[0]
        for critic, opt in ((self.critic_1, self.opt_critic_1),
                            (self.critic_2, self.opt_critic_2)):
            q = critic.forward(batch["obs"], batch["action"])
            total += critic_loss_value(q, y)
            critic.zero_grad()
            critic.backward((q - y) / n, accumulate=True)
            opt.step(critic.grad_list())
        return total / 2.0

    def actor_pass(self, obs, noise_a, noise_b):
        """Both actors' losses and parameter gradients on one batch.

        Each actor minimizes mean(alpha log pi_i - min_j Q_j(s, a)), where
        the joint action pairs its own reparameterized sample with the
        partner's; critics contribute input gradients only (their parameters
        stay frozen here). Gradients are left accumulated on the actors.
        Returns (loss_a, loss_b, mean joint log pi).
        """
        n = obs.shape[0]
        act_a, logp_a, cache_a = self.actor_a.sample(obs, noise_a)
        act_b, logp_b, cache_b = self.actor_b.sample(obs, noise_b)
        joint = np.concatenate([act_a, act_b], axis=1)
        q1 = self.critic_1.forward(obs, joint)
        q2 = self.critic_2.forward(obs, joint)
        qmin = np.minimum(q1, q2)
        alpha = self.alpha
        loss_a = float(np.mean(alpha * logp_a - qmin))
        loss_b = float(np.mean(alpha * logp_b - qmin))
        mask1 = (q1 <= q2).astype(float)
        _, ga1 = self.critic_1.backward(-mask1 / n, accumulate=False)
        _, ga2 = self.critic_2.backward(-(1.0 - mask1) / n, accumulate=False)
        g_joint = ga1 + ga2
        g_logp = np.full(n, alpha / n)
        half = self.agent_act_dim
        for actor, cache, g_act in (
            (self.actor_a, cache_a, g_joint[:, :half]),
            (self.actor_b, cache_b, g_joint[:, half:]),
        ):
            g_mean, g_log_std = squashed_gaussian_backward(cache, g_act, g_logp)
            actor.zero_grad()
            actor.backward(g_mean, g_log_std, accumulate=True)
        return loss_a, loss_b, float(np.mean(logp_a + logp_b))

    def update_actors(self, batch) -> tuple[float, float]:
        """One gradient step on each actor; returns (mean actor loss, mean log pi)."""
        obs = batch["obs"]
        shape = obs.shape[:1] + (self.agent_act_dim,)
        noise_a = self._policy_rng.normal(shape)
        noise_b = self._policy_rng.normal(shape)
        loss_a, loss_b, mean_logp = self.actor_pass(obs, noise_a, noise_b)
        self.opt_actor_a.step(self.actor_a.grad_list())
        self.opt_actor_b.step(self.actor_b.grad_list())
        return (loss_a + loss_b) / 2.0, mean_logp

    def update_alpha(self, mean_log_prob: float) -> float:
        alpha = self.alpha
        loss = -alpha * (mean_log_prob + self.target_entropy)
        grad = alpha_grad(mean_log_prob, self.target_entropy, alpha)
        self.opt_alpha.step([np.array(grad)])
        return loss

    def soft_update_targets(self):
        tau = self.config.tau_target
        for target, online in ((self.target_1, self.critic_1),
                               (self.target_2, self.critic_2)):
            soft_update(target.named_params("q"), online.named_params("q"), tau)

    def update(self) -> tuple[float, float, float]:
        """One full gradient cycle; returns (critic, actor, alpha) losses."""
        batch = self.buffer.sample(self.config.batch_size, self._replay_rng)
        y = self.critic_target(batch)
        critic_loss = self.update_critics(batch, y)
        actor_loss, mean_logp = self.update_actors(batch)
        alpha_loss = self.update_alpha(mean_logp)
        self.soft_update_targets()
        if not (math.isfinite(critic_loss) and math.isfinite(actor_loss)
                and math.isfinite(alpha_loss)):
            raise TrainingDivergedError(
                f"non-finite loss at step {self.total_steps}: "
                f"critic={critic_loss}, actor={actor_loss}, alpha={alpha_loss}; "
                f"batch reward range [{batch['reward'].min()}, {batch['reward'].max()}]"
            )
        return critic_loss, actor_loss, alpha_loss

    # -- training loop ----------------------------------------------------

    def train(self, episodes: int, episode_offset: int = 0,
              log_cb=None) -> list[EpisodeRow]:
        """Interleave environment steps and gradient updates.

        Episode k draws its channel stream from (seed, k), so baseline
        replays under the same seed see identical channels.
        """
        cfg = self.config
        env = self.env
        rows = []
        for ep in range(episode_offset, episode_offset + episodes):
            ch_stream = self._root.child(STREAM_CHANNEL, ep)
            obs = env.reset(ch_stream)
            obs_vec = obs.as_array()
            ep_r = ep_rk = ep_rd = 0.0
            eaves = 0
            losses = np.zeros(3)
            n_updates = 0
            clamp_before = self.env.diagnostics.total
            for _ in range(env.config.episode_len):
                if self.total_steps < cfg.warmup_steps:
                    action = self._warmup_rng.uniform(-1.0, 1.0, self.joint_dim)
                else:
                    action = self.act(obs_vec)
                nobs, r, done, report = env.step(action)
                nobs_vec = nobs.as_array()
                self.buffer.push(obs_vec, action, r, nobs_vec, done)
                obs_vec = nobs_vec
                ep_r += r
                ep_rd += report.rd
                if report.xi is EveMode.EAVESDROPPING:
                    eaves += 1
                    ep_rk += report.rke if report.rke is not None else 0.0
                else:
                    ep_rk += report.rks
                self.total_steps += 1
                if (self.total_steps >= cfg.warmup_steps
                        and self.buffer.size >= cfg.batch_size):
                    for _ in range(cfg.updates_per_step):
                        losses += self.update()
                        n_updates += 1
            steps = env.config.episode_len
            mean_losses = losses / max(n_updates, 1)
            row = EpisodeRow(
                episode=ep,
                mean_reward=ep_r / steps,
                mean_rk=ep_rk / steps,
                mean_rd=ep_rd / steps,
                eavesdrop_frac=eaves / steps,
                alpha=self.alpha,
                critic_loss=mean_losses[0],
                actor_loss=mean_losses[1],
                alpha_loss=mean_losses[2],
                clamp_count=self.env.diagnostics.total - clamp_before,
            )
            rows.append(row)
            if log_cb is not None:
                log_cb(row)
        return rows

    # -- persistence -------------------------------------------------------

    def named_params(self) -> dict[str, np.ndarray]:
        out = {}
        out.update(self.actor_a.named_params("actor_a"))
        out.update(self.actor_b.named_params("actor_b"))
        out.update(self.critic_1.named_params("critic_1"))
        out.update(self.critic_2.named_params("critic_2"))
        out.update(self.target_1.named_params("target_1"))
        out.update(self.target_2.named_params("target_2"))
        out["log_alpha"] = self.log_alpha.reshape(())
        return out

    def load_named_params(self, named: dict[str, np.ndarray]):
        current = self.named_params()
        if set(named) != set(current):
            raise ValueError("checkpoint does not match this trainer's networks")
        for key, arr in current.items():
            if key == "log_alpha":
                self.log_alpha[...] = named[key]
            else:
                arr[...] = named[key]


def rollout_policy(env: BeamEnv, trainer: MASACTrainer,
                   channel_stream: RngStream, deterministic: bool = True):
    """Roll one episode under the trained policy; returns per-slot reports."""
    obs = env.reset(channel_stream)
    obs_vec = obs.as_array()
    reports = []
    for _ in range(env.config.episode_len):
        action = trainer.act(obs_vec, deterministic=deterministic)
        nobs, _, done, report = env.step(action)
        obs_vec = nobs.as_array()
        reports.append(report)
        if done:
            break
    return reports
