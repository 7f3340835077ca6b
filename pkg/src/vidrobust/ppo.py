"""Clipped-surrogate policy optimization for the two selection agents.

Each agent is trained on its own trajectory: per-step state features,
the action taken, its sampling-time log-prob and value estimate, and the
scalar reward.  Advantages come from generalized advantage estimation;
a step marked done is treated as the end of its episode, so a trajectory
of independent single-step episodes reduces to A = r - V per step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonFiniteGradientError, ShapeMismatchError
from .nn import Adam, as_tensor, clip, exp, minimum, stack, tmean
from .policy import PolicyBundle


@dataclass(frozen=True)
class PPOConfig:
    clip_ratio: float = 0.2
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    epochs: int = 4
    gamma: float = 0.99
    lam: float = 0.95

    def __post_init__(self):
        if not 0.0 < self.clip_ratio < 1.0:
            raise ConfigError("clip_ratio must be in (0, 1), got %r" % (self.clip_ratio,))
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1, got %r" % (self.epochs,))
        if not 0.0 < self.gamma <= 1.0:
            raise ConfigError("gamma must be in (0, 1], got %r" % (self.gamma,))
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError("lam must be in [0, 1], got %r" % (self.lam,))
        if self.value_coef < 0.0 or self.entropy_coef < 0.0:
            raise ConfigError("loss coefficients must be non-negative")


def gae_advantages(rewards, values, gamma: float = 0.99, lam: float = 0.95,
                   dones=None, bootstrap: float = 0.0):
    """Generalized advantage estimates and value targets for one rollout.

    ``dones[t]`` marks step t as terminal, cutting the recursion there;
    by default only the final step is terminal.  ``bootstrap`` is the
    value of the state after the last step when that step is not
    terminal.  Returns (advantages, returns) with returns = adv + values.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.ndim != 1 or rewards.shape != values.shape:
        raise ShapeMismatchError(
            "rewards %s and values %s must be equal-length 1-D"
            % (rewards.shape, values.shape))
    n = rewards.shape[0]
    if dones is None:
        dones = np.zeros(n, dtype=bool)
        dones[-1] = True
    else:
        dones = np.asarray(dones, dtype=bool)
        if dones.shape != rewards.shape:
            raise ShapeMismatchError("dones shape %s does not match rewards %s"
                                     % (dones.shape, rewards.shape))
    advantages = np.zeros(n, dtype=np.float64)
    carry = 0.0
    for t in range(n - 1, -1, -1):
        next_value = bootstrap if t == n - 1 else values[t + 1]
        if dones[t]:
            next_value = 0.0
            carry = 0.0
        delta = rewards[t] + gamma * next_value - values[t]
        carry = delta + gamma * lam * carry
        advantages[t] = carry
    return advantages, advantages + values


@dataclass
class AgentTrajectory:
    """Per-step records for one agent, appended during an episode."""

    states: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    log_probs: list = field(default_factory=list)
    values: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    dones: list = field(default_factory=list)

    def append(self, state, action, log_prob: float, value: float,
               reward: float, done: bool = True) -> None:
        self.states.append(state)
        self.actions.append(action)
        self.log_probs.append(float(log_prob))
        self.values.append(float(value))
        self.rewards.append(float(reward))
        self.dones.append(bool(done))

    def __len__(self) -> int:
        return len(self.rewards)


@dataclass
class TrajectoryBatch:
    """Aligned temporal and spatial trajectories; either may be empty
    when the matching agent is disabled (ablation runs)."""

    temporal: AgentTrajectory = field(default_factory=AgentTrajectory)
    spatial: AgentTrajectory = field(default_factory=AgentTrajectory)


def _agent_loss(traj: AgentTrajectory, policy, advantages: np.ndarray,
                returns: np.ndarray, config: PPOConfig):
    log_probs, values, entropies = [], [], []
    for state, action in zip(traj.states, traj.actions):
        lp, v, ent = policy.evaluate(state, action)
        log_probs.append(lp)
        values.append(v)
        entropies.append(ent)
    log_prob_new = stack(log_probs)
    ratio = exp(log_prob_new - as_tensor(np.asarray(traj.log_probs)))
    adv = as_tensor(advantages)
    clipped = clip(ratio, 1.0 - config.clip_ratio, 1.0 + config.clip_ratio)
    surrogate = -tmean(minimum(ratio * adv, clipped * adv))
    value_loss = tmean((stack(values) - as_tensor(returns)) ** 2)
    entropy = tmean(stack(entropies))
    loss = surrogate + config.value_coef * value_loss - config.entropy_coef * entropy
    return loss, surrogate, value_loss, entropy, log_prob_new


def _update_agent(name: str, traj: AgentTrajectory, policy, opt: Adam,
                  config: PPOConfig) -> dict:
    advantages, returns = gae_advantages(
        traj.rewards, traj.values, config.gamma, config.lam, dones=traj.dones)
    log_prob_old = np.asarray(traj.log_probs)
    stats = {}
    for epoch in range(config.epochs):
        loss, surrogate, value_loss, entropy, log_prob_new = _agent_loss(
            traj, policy, advantages, returns, config)
        if not np.isfinite(loss.data):
            raise NonFiniteGradientError(
                "%s agent: non-finite loss at epoch %d "
                "(surrogate=%r value=%r entropy=%r rewards=%r values=%r advantages=%r)"
                % (name, epoch, surrogate.data, value_loss.data, entropy.data,
                   traj.rewards, traj.values, advantages.tolist()))
        loss.backward()
        opt.step()
        stats = {
            "surrogate_loss": float(surrogate.data),
            "value_loss": float(value_loss.data),
            "entropy": float(entropy.data),
            "approx_kl": float(np.mean(log_prob_old - log_prob_new.data)),
            "steps": len(traj),
        }
    return stats


def ppo_update(batch: TrajectoryBatch, bundle: PolicyBundle,
               temporal_opt: Adam | None, spatial_opt: Adam | None,
               config: PPOConfig | None = None) -> dict:
    """Run clipped-surrogate updates for both agents on their own data.

    Each non-empty trajectory gets ``config.epochs`` passes; the returned
    stats come from the final epoch of each agent.
    """
    config = config if config is not None else PPOConfig()
    if len(batch.temporal) == 0 and len(batch.spatial) == 0:
        raise ValueError("both trajectories are empty")
    stats: dict = {}
    if len(batch.temporal) > 0:
        if temporal_opt is None:
            raise ValueError("temporal trajectory present but no optimizer")
        stats["temporal"] = _update_agent(
            "temporal", batch.temporal, bundle.temporal, temporal_opt, config)
    if len(batch.spatial) > 0:
        if spatial_opt is None:
            raise ValueError("spatial trajectory present but no optimizer")
        stats["spatial"] = _update_agent(
            "spatial", batch.spatial, bundle.spatial, spatial_opt, config)
    return stats
