"""
Multi-discrete PPO executor.

The policy has a tanh trunk (256 -> 128) and three categorical heads, one per
sub-action space (waypoint, speed level, lane decision). The critic is a
separate network of the same shape with a scalar output. Everything runs in
float64 on the CPU.
"""

import copy
import io
import logging
import struct
from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch
import torch.nn as nn

from learningFlow.driving_sim import N_OBS_MAX, OBS_FEATURES
from learningFlow.errors import NumericalError
from learningFlow.tracking_controller import ACTION_DIMS

logger = logging.getLogger(__name__)

OBS_DIM = (N_OBS_MAX + 1) * OBS_FEATURES
HIDDEN_SIZES = (256, 128)
NORMALIZER_CLIP = 10.0

CHECKPOINT_MAGIC = b"LFPP"
CHECKPOINT_VERSION = 1


def configure_determinism():
    """Single-threaded float64 torch, so seeded runs reproduce bit for bit."""
    torch.set_num_threads(1)
    torch.set_default_dtype(torch.float64)


@dataclass
class Hyperparams:
    lr_actor: float = 5e-4
    lr_critic: float = 1e-3
    gamma: float = 0.99
    clip_eps: float = 0.2
    epochs: int = 50
    gae_lambda: float = 0.95
    entropy_coef: float = 0.01
    max_grad_norm: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.clip_eps <= 0:
            raise ValueError(f"clip_eps must be positive, got {self.clip_eps}")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def _trunk(in_dim: int) -> nn.Sequential:
    layers = []
    for size in HIDDEN_SIZES:
        layers += [nn.Linear(in_dim, size), nn.Tanh()]
        in_dim = size
    return nn.Sequential(*layers)


class PolicyNetwork(nn.Module):
    """Actor: shared trunk plus one logit head per sub-action space."""

    def __init__(self, obs_dim: int = OBS_DIM, action_dims: Sequence[int] = ACTION_DIMS):
        super().__init__()
        self.action_dims = tuple(action_dims)
        self.trunk = _trunk(obs_dim)
        self.heads = nn.ModuleList([nn.Linear(HIDDEN_SIZES[-1], dim) for dim in self.action_dims])

    def forward(self, obs: torch.Tensor) -> List[torch.Tensor]:
        features = self.trunk(obs)
        return [head(features) for head in self.heads]


class ValueNetwork(nn.Module):
    """Critic: 256/128 tanh trunk with a scalar output."""

    def __init__(self, obs_dim: int = OBS_DIM):
        super().__init__()
        self.trunk = _trunk(obs_dim)
        self.out = nn.Linear(HIDDEN_SIZES[-1], 1)

    def forward(self, obs: torch.Tensor) -> torch.Tensor:
        return self.out(self.trunk(obs)).squeeze(-1)


class RunningNormalizer:
    """Per-feature running mean/variance (parallel-variance update); frozen at evaluation."""

    def __init__(self, dim: int = OBS_DIM):
        self.mean = np.zeros(dim, dtype=np.float64)
        self.var = np.ones(dim, dtype=np.float64)
        self.count = 1e-4
        self.frozen = False

    def update(self, batch: np.ndarray):
        if self.frozen:
            return
        batch = np.atleast_2d(batch)
        batch_mean = batch.mean(axis=0)
        batch_var = batch.var(axis=0)
        batch_count = batch.shape[0]
        delta = batch_mean - self.mean
        total = self.count + batch_count
        self.mean = self.mean + delta * batch_count / total
        m2 = self.var * self.count + batch_var * batch_count + delta ** 2 * self.count * batch_count / total
        self.var = m2 / total
        self.count = total

    def normalize(self, batch: np.ndarray) -> np.ndarray:
        scaled = (batch - self.mean) / np.sqrt(self.var + 1e-8)
        return np.clip(scaled, -NORMALIZER_CLIP, NORMALIZER_CLIP)

    def state_dict(self) -> Dict[str, np.ndarray]:
        return {'mean': self.mean.copy(), 'var': self.var.copy(), 'count': np.array([self.count])}

    def load_state_dict(self, state: Dict[str, np.ndarray]):
        self.mean = np.asarray(state['mean'], dtype=np.float64).copy()
        self.var = np.asarray(state['var'], dtype=np.float64).copy()
        self.count = float(np.asarray(state['count']).reshape(-1)[0])


@dataclass
class RolloutBuffer:
    """Per-step records of the episodes collected since the last policy update."""
    observations: List[np.ndarray] = field(default_factory=list)
    actions: List[Tuple[int, int, int]] = field(default_factory=list)
    log_probs: List[float] = field(default_factory=list)
    rewards: List[float] = field(default_factory=list)
    values: List[float] = field(default_factory=list)
    dones: List[bool] = field(default_factory=list)
    episodes: int = 0

    def add(self, observation: np.ndarray, action: Sequence[int], log_prob: float,
            reward: float, value: float, done: bool):
        self.observations.append(np.asarray(observation, dtype=np.float64))
        self.actions.append(tuple(int(a) for a in action))
        self.log_probs.append(float(log_prob))
        self.rewards.append(float(reward))
        self.values.append(float(value))
        self.dones.append(bool(done))
        if done:
            self.episodes += 1

    def discard_open_episode(self):
        """Drop steps of an episode that did not reach a terminal outcome."""
        while self.dones and not self.dones[-1]:
            for seq in (self.observations, self.actions, self.log_probs, self.rewards, self.values, self.dones):
                seq.pop()

    def clear(self):
        for seq in (self.observations, self.actions, self.log_probs, self.rewards, self.values, self.dones):
            seq.clear()
        self.episodes = 0

    def __len__(self):
        return len(self.rewards)


@dataclass
class PPODiagnostics:
    mean_ratio: float = 1.0
    clip_fraction: float = 0.0
    entropy: float = 0.0
    policy_loss: float = 0.0
    value_loss: float = 0.0
    surrogate: float = 0.0
    epochs_run: int = 0
    samples: int = 0
    aborted: bool = False
    epoch_stats: List[Dict[str, float]] = field(default_factory=list)

    def summary(self) -> Dict[str, float]:
        data = asdict(self)
        data.pop('epoch_stats')
        return data


def compute_gae(rewards: Sequence[float], values: Sequence[float], dones: Sequence[bool],
                gamma: float, lam: float, last_value: float = 0.0) -> Tuple[np.ndarray, np.ndarray]:
    """
    Generalized advantage estimation over aligned step sequences.

    The value after a done step is taken as 0; last_value bootstraps the step
    after the final one when the sequence ends mid-episode.

    Returns:
        Tuple of (advantages, returns)
    """
    if not (len(rewards) == len(values) == len(dones)):
        raise ValueError(f"sequence lengths differ: rewards={len(rewards)}, "
                         f"values={len(values)}, dones={len(dones)}")
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)

    advantages = np.zeros_like(rewards)
    gae = 0.0
    for t in reversed(range(len(rewards))):
        next_value = values[t + 1] if t + 1 < len(rewards) else last_value
        not_done = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * not_done - values[t]
        gae = delta + gamma * lam * not_done * gae
        advantages[t] = gae
    return advantages, advantages + values


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance; only centred when the batch has no spread."""
    centred = advantages - advantages.mean()
    std = advantages.std()
    if std < 1e-8:
        return centred
    return centred / std


def joint_log_prob(logits: Sequence[torch.Tensor], actions: torch.Tensor) -> torch.Tensor:
    """Sum of the per-head categorical log-probabilities of an action batch (B, 3)."""
    total = 0.0
    for index, head_logits in enumerate(logits):
        log_p = torch.log_softmax(head_logits, dim=-1)
        total = total + log_p.gather(-1, actions[..., index:index + 1]).squeeze(-1)
    return total


def joint_entropy(logits: Sequence[torch.Tensor]) -> torch.Tensor:
    total = 0.0
    for head_logits in logits:
        log_p = torch.log_softmax(head_logits, dim=-1)
        total = total - (log_p.exp() * log_p).sum(-1)
    return total


def sample_actions(logits: Sequence[torch.Tensor], generator: torch.Generator) -> torch.Tensor:
    """Draw each head independently from its categorical distribution."""
    picks = [torch.multinomial(torch.softmax(head_logits, dim=-1), 1, generator=generator)
             for head_logits in logits]
    return torch.cat(picks, dim=-1)


def greedy_actions(logits: Sequence[torch.Tensor]) -> torch.Tensor:
    return torch.stack([head_logits.argmax(dim=-1) for head_logits in logits], dim=-1)


def clipped_surrogate(new_log_prob: torch.Tensor, old_log_prob: torch.Tensor,
                      advantages: torch.Tensor, clip_eps: float) -> torch.Tensor:
    """Mean clipped PPO surrogate (to be maximized)."""
    ratio = torch.exp(new_log_prob - old_log_prob)
    unclipped = ratio * advantages
    clipped = torch.clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantages
    return torch.min(unclipped, clipped).mean()


class PPOAgent:
    """
    Actor-critic pair with its optimizers, observation normalizer and sampling RNG.

    Usage:
        agent = PPOAgent(seed=0)
        action, log_prob, value = agent.act(obs)
        diagnostics = agent.update(buffer)
    """

    def __init__(self, hyper: Optional[Hyperparams] = None, seed: int = 0,
                 obs_dim: int = OBS_DIM, action_dims: Sequence[int] = ACTION_DIMS):
        self.hyper = hyper or Hyperparams()
        self.obs_dim = obs_dim
        self.action_dims = tuple(action_dims)
        with torch.random.fork_rng():
            torch.manual_seed(seed)
            self.policy = PolicyNetwork(obs_dim, action_dims).double()
            self.value = ValueNetwork(obs_dim).double()
        self.generator = torch.Generator().manual_seed(seed)
        self.actor_optimizer = torch.optim.Adam(self.policy.parameters(), lr=self.hyper.lr_actor)
        self.critic_optimizer = torch.optim.Adam(self.value.parameters(), lr=self.hyper.lr_critic)
        self.normalizer = RunningNormalizer(obs_dim)
        self.updates = 0

    def _prepare(self, obs: np.ndarray, update_stats: bool) -> Tuple[np.ndarray, bool]:
        arr = np.asarray(obs, dtype=np.float64)
        single = arr.ndim == 1 or arr.shape == (N_OBS_MAX + 1, OBS_FEATURES)
        flat = arr.reshape(1, -1) if single else arr.reshape(arr.shape[0], -1)
        if flat.shape[1] != self.obs_dim:
            raise ValueError(f"observation width {flat.shape[1]} does not match {self.obs_dim}")
        if update_stats:
            self.normalizer.update(flat)
        return self.normalizer.normalize(flat), single

    def act(self, obs: np.ndarray, mode: str = "sample", update_normalizer: bool = True):
        """
        Choose actions for one observation or a batch.

        Args:
            obs: Observation matrix (5, 4), flat vector, or a batch of either
            mode: "sample" or "greedy"
            update_normalizer: Fold the observation into the running statistics

        Returns:
            Tuple of (action triple, joint log-prob, value, normalized observation)
            for a single observation; arrays with a leading batch axis otherwise
        """
        if mode not in ("sample", "greedy"):
            raise ValueError(f"unknown act mode '{mode}'")
        normed, single = self._prepare(obs, update_normalizer and mode == "sample")
        x = torch.from_numpy(normed)
        with torch.no_grad():
            logits = self.policy(x)
            value = self.value(x)
            if not all(torch.isfinite(head).all() for head in logits) or not torch.isfinite(value).all():
                raise NumericalError("policy or value network produced a non-finite output")
            if mode == "sample":
                actions = sample_actions(logits, self.generator)
            else:
                actions = greedy_actions(logits)
            log_prob = joint_log_prob(logits, actions)

        actions_np = actions.numpy()
        if single:
            return (tuple(int(a) for a in actions_np[0]), float(log_prob[0]), float(value[0]), normed[0])
        return actions_np, log_prob.numpy(), value.numpy(), normed

    def greedy(self, obs: np.ndarray) -> Tuple[int, int, int]:
        return self.act(obs, mode="greedy", update_normalizer=False)[0]

    def update(self, buffer: RolloutBuffer) -> PPODiagnostics:
        return ppo_update(self, buffer, self.hyper)

    # ------------------------------------------------------------- state

    def named_tensors(self) -> Dict[str, np.ndarray]:
        """All learnable parameters plus normalizer statistics, in a stable order."""
        tensors = {}
        for prefix, module in (("policy", self.policy), ("value", self.value)):
            for name, tensor in module.state_dict().items():
                tensors[f"{prefix}.{name}"] = tensor.detach().cpu().numpy()
        for name, array in self.normalizer.state_dict().items():
            tensors[f"normalizer.{name}"] = array
        return tensors

    def load_named_tensors(self, tensors: Dict[str, np.ndarray]):
        for prefix, module in (("policy", self.policy), ("value", self.value)):
            state = {name[len(prefix) + 1:]: torch.from_numpy(np.array(array))
                     for name, array in tensors.items() if name.startswith(prefix + ".")}
            module.load_state_dict(state)
        self.normalizer.load_state_dict({name.split(".", 1)[1]: array for name, array in tensors.items()
                                         if name.startswith("normalizer.")})

    def trainer_state(self) -> Dict:
        return {
            'actor_optimizer': self.actor_optimizer.state_dict(),
            'critic_optimizer': self.critic_optimizer.state_dict(),
            'generator': self.generator.get_state(),
            'updates': self.updates,
        }

    def load_trainer_state(self, state: Dict):
        self.actor_optimizer.load_state_dict(state['actor_optimizer'])
        self.critic_optimizer.load_state_dict(state['critic_optimizer'])
        self.generator.set_state(state['generator'])
        self.updates = int(state['updates'])


def ppo_update(agent: PPOAgent, buffer: RolloutBuffer, hyper: Hyperparams) -> PPODiagnostics:
    """
    Clipped-objective PPO update over the whole buffer.

    Runs hyper.epochs full-batch gradient steps on actor and critic. A
    non-finite loss aborts the update and restores the pre-update networks
    and optimizers. The buffer is cleared in every case.

    Returns:
        PPODiagnostics with per-epoch statistics
    """
    diagnostics = PPODiagnostics(samples=len(buffer))
    if len(buffer) == 0:
        logger.warning("PPO update skipped: empty rollout buffer")
        return diagnostics

    advantages, returns = compute_gae(buffer.rewards, buffer.values, buffer.dones,
                                      hyper.gamma, hyper.gae_lambda)
    obs = torch.from_numpy(np.stack(buffer.observations).reshape(len(buffer), -1))
    actions = torch.tensor(buffer.actions, dtype=torch.long)
    old_log_prob = torch.tensor(buffer.log_probs, dtype=torch.float64)
    adv = torch.from_numpy(normalize_advantages(advantages))
    ret = torch.from_numpy(returns)

    snapshot = {
        'policy': copy.deepcopy(agent.policy.state_dict()),
        'value': copy.deepcopy(agent.value.state_dict()),
        'actor_optimizer': copy.deepcopy(agent.actor_optimizer.state_dict()),
        'critic_optimizer': copy.deepcopy(agent.critic_optimizer.state_dict()),
    }

    for epoch in range(hyper.epochs):
        logits = agent.policy(obs)
        new_log_prob = joint_log_prob(logits, actions)
        entropy = joint_entropy(logits).mean()
        surrogate = clipped_surrogate(new_log_prob, old_log_prob, adv, hyper.clip_eps)
        policy_loss = -surrogate - hyper.entropy_coef * entropy
        value_loss = torch.mean((agent.value(obs) - ret) ** 2)

        if not (torch.isfinite(policy_loss) and torch.isfinite(value_loss)):
            agent.policy.load_state_dict(snapshot['policy'])
            agent.value.load_state_dict(snapshot['value'])
            agent.actor_optimizer.load_state_dict(snapshot['actor_optimizer'])
            agent.critic_optimizer.load_state_dict(snapshot['critic_optimizer'])
            logger.warning("PPO update aborted at epoch %d: non-finite loss; parameters restored", epoch)
            diagnostics.aborted = True
            break

        with torch.no_grad():
            ratio = torch.exp(new_log_prob - old_log_prob)
            clipped = ((ratio - 1.0).abs() > hyper.clip_eps).double().mean()
        diagnostics.epoch_stats.append({
            'epoch': epoch,
            'mean_ratio': float(ratio.mean()),
            'clip_fraction': float(clipped),
            'surrogate': float(surrogate.detach()),
            'policy_loss': float(policy_loss.detach()),
            'value_loss': float(value_loss.detach()),
            'entropy': float(entropy.detach()),
        })

        agent.actor_optimizer.zero_grad()
        policy_loss.backward()
        nn.utils.clip_grad_norm_(agent.policy.parameters(), hyper.max_grad_norm)
        agent.actor_optimizer.step()

        agent.critic_optimizer.zero_grad()
        value_loss.backward()
        nn.utils.clip_grad_norm_(agent.value.parameters(), hyper.max_grad_norm)
        agent.critic_optimizer.step()

    if diagnostics.epoch_stats and not diagnostics.aborted:
        last = diagnostics.epoch_stats[-1]
        diagnostics.mean_ratio = last['mean_ratio']
        diagnostics.clip_fraction = last['clip_fraction']
        diagnostics.entropy = last['entropy']
        diagnostics.policy_loss = last['policy_loss']
        diagnostics.value_loss = last['value_loss']
        diagnostics.surrogate = last['surrogate']
        diagnostics.epochs_run = len(diagnostics.epoch_stats)
        agent.updates += 1
    buffer.clear()
    return diagnostics


# ---------------------------------------------------------------------- checkpoints

def encode_tensors(tensors: Dict[str, np.ndarray]) -> bytes:
    """
    Flat binary checkpoint layout (all integers little-endian):

        magic "LFPP" | u32 version | u32 tensor count
        per tensor:  u16 name length | UTF-8 name | u32 ndim | u64 dim * ndim
        body:        every tensor as row-major float64, in header order
    """
    header = io.BytesIO()
    header.write(CHECKPOINT_MAGIC)
    header.write(struct.pack("<II", CHECKPOINT_VERSION, len(tensors)))
    body = io.BytesIO()
    for name, array in tensors.items():
        array = np.ascontiguousarray(array, dtype="<f8")
        encoded = name.encode("utf-8")
        header.write(struct.pack("<H", len(encoded)))
        header.write(encoded)
        header.write(struct.pack("<I", array.ndim))
        header.write(struct.pack(f"<{array.ndim}Q", *array.shape))
        body.write(array.tobytes(order="C"))
    return header.getvalue() + body.getvalue()


def decode_tensors(data: bytes) -> Dict[str, np.ndarray]:
    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a policy checkpoint (bad magic)")
    version, count = struct.unpack_from("<II", data, 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    offset = 12
    table = []
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", data, offset)
        offset += 2
        name = data[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (ndim,) = struct.unpack_from("<I", data, offset)
        offset += 4
        shape = struct.unpack_from(f"<{ndim}Q", data, offset)
        offset += 8 * ndim
        table.append((name, shape))
    tensors = {}
    for name, shape in table:
        size = int(np.prod(shape)) if shape else 1
        array = np.frombuffer(data, dtype="<f8", count=size, offset=offset).reshape(shape)
        tensors[name] = array.astype(np.float64)
        offset += 8 * size
    if offset != len(data):
        raise ValueError("checkpoint body length does not match its header")
    return tensors


def save_policy(agent: PPOAgent, filepath: str) -> bool:
    try:
        with open(filepath, "wb") as f:
            f.write(encode_tensors(agent.named_tensors()))
        return True
    except Exception as e:
        raise IOError(f"Error saving {filepath}: {e}")


def load_policy(filepath: str, hyper: Optional[Hyperparams] = None) -> PPOAgent:
    """Rebuild an agent (networks and normalizer) from a policy.bin checkpoint."""
    try:
        with open(filepath, "rb") as f:
            tensors = decode_tensors(f.read())
    except Exception as e:
        raise IOError(f"Error loading {filepath}: {e}")
    agent = PPOAgent(hyper)
    agent.load_named_tensors(tensors)
    agent.normalizer.frozen = True
    return agent
