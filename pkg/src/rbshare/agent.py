"""Deep-Q agent (numpy MLP + replay memory + target network) and the greedy
baseline policies MT, mL, random, and their fixed-split variants.

The network is trained with plain stochastic gradient descent on the sum of
squared errors over the minibatch, with gradient flowing only through the
taken action's output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from rbshare.environment import SchedulingEnv


class TrainingDiverged(RuntimeError):
    """Raised when the training loss stops being finite."""


# -- value network -------------------------------------------------------------


class MLP:
    """Fully connected rectifier network, identity output layer."""

    def __init__(self, layer_sizes: list[int], rng: np.random.Generator | None = None,
                 init_std: float = 0.05, dtype=np.float64):
        self.layer_sizes = list(layer_sizes)
        self.dtype = dtype
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []
        for fan_in, fan_out in zip(layer_sizes, layer_sizes[1:]):
            if rng is None:
                w = np.zeros((fan_in, fan_out), dtype=dtype)
            else:
                w = rng.normal(0.0, init_std, size=(fan_in, fan_out)).astype(dtype)
            self.weights.append(w)
            self.biases.append(np.zeros(fan_out, dtype=dtype))

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Q-values for a single state or a batch (last layer is linear)."""
        a = np.asarray(x, dtype=self.dtype)
        if a.shape[-1] != self.layer_sizes[0]:
            raise ValueError(
                f"input dim {a.shape[-1]} != network input {self.layer_sizes[0]}"
            )
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            a = a @ w + b
            if i != last:
                np.maximum(a, 0.0, out=a)
        return a

    def _forward_cached(self, x: np.ndarray):
        activations = [np.asarray(x, dtype=self.dtype)]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = activations[-1] @ w + b
            if i != last:
                z = np.maximum(z, 0.0)
            activations.append(z)
        return activations

    def gradients(self, states: np.ndarray, actions: np.ndarray, targets: np.ndarray):
        """Gradients of sum_j (y_j - Q(s_j, a_j))^2 w.r.t. weights and biases."""
        states = np.atleast_2d(np.asarray(states, dtype=self.dtype))
        actions = np.asarray(actions, dtype=np.int64)
        targets = np.asarray(targets, dtype=self.dtype)
        acts = self._forward_cached(states)
        q = acts[-1][np.arange(len(actions)), actions]
        loss = float(np.sum((targets - q) ** 2))

        # dL/d(output) is nonzero only at the taken actions.
        delta = np.zeros_like(acts[-1])
        delta[np.arange(len(actions)), actions] = -2.0 * (targets - q)

        grads_w = [np.empty(0)] * len(self.weights)
        grads_b = [np.empty(0)] * len(self.biases)
        for i in range(len(self.weights) - 1, -1, -1):
            grads_w[i] = acts[i].T @ delta
            grads_b[i] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (acts[i] > 0)
        return loss, grads_w, grads_b

    def train_minibatch(self, states, actions, targets, learning_rate: float) -> float:
        """One SGD step; returns the (pre-update) loss."""
        loss, grads_w, grads_b = self.gradients(states, actions, targets)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite training loss: {loss}")
        for w, b, gw, gb in zip(self.weights, self.biases, grads_w, grads_b):
            w -= learning_rate * gw
            b -= learning_rate * gb
        return loss

    def copy_from(self, other: "MLP"):
        if self.layer_sizes != other.layer_sizes:
            raise ValueError("network shapes differ")
        for w, ow in zip(self.weights, other.weights):
            w[...] = ow
        for b, ob in zip(self.biases, other.biases):
            b[...] = ob

    def clone(self) -> "MLP":
        net = MLP(self.layer_sizes, rng=None, dtype=self.dtype)
        net.copy_from(self)
        return net

    def save(self, path):
        """Checkpoint format v1: npz with layer sizes + row-major arrays."""
        arrays = {"format_version": np.array([1]),
                  "layer_sizes": np.array(self.layer_sizes)}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"w{i}"] = w
            arrays[f"b{i}"] = b
        np.savez(path, **arrays)

    @classmethod
    def load(cls, path) -> "MLP":
        data = np.load(path)
        if int(data["format_version"][0]) != 1:
            raise ValueError("unsupported checkpoint version")
        sizes = [int(s) for s in data["layer_sizes"]]
        net = cls(sizes, rng=None)
        for i in range(len(sizes) - 1):
            net.weights[i] = data[f"w{i}"].astype(net.dtype)
            net.biases[i] = data[f"b{i}"].astype(net.dtype)
        return net


def sync_target(main: MLP, target: MLP):
    target.copy_from(main)


# -- replay memory ---------------------------------------------------------------


@dataclass
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool


class ReplayMemory:
    """Fixed-capacity ring buffer with uniform minibatch sampling."""

    def __init__(self, capacity: int = 100_000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._buf: list[Transition] = []
        self._head = 0

    def push(self, transition: Transition):
        if len(self._buf) < self.capacity:
            self._buf.append(transition)
        else:
            self._buf[self._head] = transition
            self._head = (self._head + 1) % self.capacity

    def __len__(self) -> int:
        return len(self._buf)

    def __contains__(self, transition: Transition) -> bool:
        return any(t is transition for t in self._buf)

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Transition]:
        if batch_size > len(self._buf):
            raise ValueError("not enough transitions to sample a minibatch")
        idx = rng.integers(0, len(self._buf), size=batch_size)
        return [self._buf[i] for i in idx]


# -- schedules / action selection -----------------------------------------------


def epsilon_value(i: int, eps0: float = 1.0, eps_inf: float = 0.01,
                  decay_steps: int = 80_000) -> float:
    """Linear decay from eps0 to eps_inf over `decay_steps` RL steps."""
    if i >= decay_steps:
        return eps_inf
    return max(eps_inf, eps0 - i * (eps0 - eps_inf) / decay_steps)


def select_action(net: MLP, state: np.ndarray, epsilon: float,
                  rng: np.random.Generator) -> int:
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    n_actions = net.layer_sizes[-1]
    if rng.random() < epsilon:
        return int(rng.integers(0, n_actions))
    return int(np.argmax(net.forward(state)))  # argmax ties -> lowest index


def dqn_targets(batch: list[Transition], target_net: MLP, gamma: float) -> np.ndarray:
    """y_j = r_j (+ gamma * max_a Qhat(s', a) when non-terminal)."""
    rewards = np.array([t.reward for t in batch], dtype=np.float64)
    terminal = np.array([t.terminal for t in batch], dtype=bool)
    next_states = np.stack([t.next_state for t in batch])
    boot = target_net.forward(next_states).max(axis=1)
    return rewards + gamma * np.where(terminal, 0.0, boot)


# -- agents / policies ------------------------------------------------------------


@dataclass
class AgentConfig:
    gamma: float = 0.9
    learning_rate: float = 1e-4
    minibatch: int = 32
    target_sync: int = 100          # RL steps between target-network copies
    min_observations: int = 1_000
    replay_capacity: int = 100_000
    hidden: tuple = (512, 512, 512)
    init_std: float = 0.05
    eps0: float = 1.0
    eps_inf: float = 0.01
    eps_decay_steps: int = 80_000

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


class DQNPolicy:
    """ε-greedy DQN with replay memory and a periodically synced target net."""

    def __init__(self, state_dim: int, n_actions: int, config: AgentConfig,
                 init_rng: np.random.Generator, explore_rng: np.random.Generator,
                 dtype=np.float32):
        sizes = [state_dim, *config.hidden, n_actions]
        self.config = config
        self.net = MLP(sizes, rng=init_rng, init_std=config.init_std, dtype=dtype)
        self.target = self.net.clone()
        self.memory = ReplayMemory(config.replay_capacity)
        self.explore_rng = explore_rng
        self.global_step = 0            # drives the ε schedule
        self.train_steps = 0
        self.frozen = False             # eval-time learning freeze
        self.eps_override: float | None = None

    @property
    def epsilon(self) -> float:
        if self.eps_override is not None:
            return self.eps_override
        c = self.config
        return epsilon_value(self.global_step, c.eps0, c.eps_inf, c.eps_decay_steps)

    def act(self, env: SchedulingEnv) -> int:
        return select_action(self.net, env.encode(), self.epsilon, self.explore_rng)

    def observe(self, state, action, reward, next_state, terminal):
        self.memory.push(Transition(
            np.asarray(state, dtype=self.net.dtype), action, reward,
            np.asarray(next_state, dtype=self.net.dtype), terminal,
        ))
        self.global_step += 1
        if self.frozen or len(self.memory) < self.config.min_observations:
            return
        batch = self.memory.sample(self.config.minibatch, self.explore_rng)
        targets = dqn_targets(batch, self.target, self.config.gamma)
        states = np.stack([t.state for t in batch])
        actions = np.array([t.action for t in batch])
        self.net.train_minibatch(states, actions, targets, self.config.learning_rate)
        self.train_steps += 1
        if self.train_steps % self.config.target_sync == 0:
            sync_target(self.net, self.target)


def mt_action(env: SchedulingEnv) -> int:
    """Max-throughput: slot with the most deliverable bits on the current RB."""
    best, best_bits = 0, -1
    for j in env.occupied_slots():
        bits = env.deliverable_now(j)
        if bits > best_bits:
            best, best_bits = j + 1, bits
    return best if best_bits >= 0 else 0


def ml_action(env: SchedulingEnv) -> int:
    """Min-latency: slot with the smallest normalized TTL."""
    best, best_ttl = 0, None
    for j in env.occupied_slots():
        entry = env.buffer[j]
        norm = entry.ttl / entry.service.max_latency
        if best_ttl is None or norm < best_ttl:
            best, best_ttl = j + 1, norm
    return best


class CallablePolicy:
    """Adapter giving function policies the act/observe interface."""

    def __init__(self, fn):
        self._fn = fn

    def act(self, env: SchedulingEnv) -> int:
        return self._fn(env)

    def observe(self, *args):
        pass


def random_policy(rng: np.random.Generator) -> CallablePolicy:
    return CallablePolicy(lambda env: int(rng.integers(0, env.L + 1)))


def fixed_split(policy, licensed_rbs: int):
    """Reserve RBs above `licensed_rbs` permanently for unlicensed use."""

    class _Split:
        def act(self, env: SchedulingEnv) -> int:
            if not 1 <= licensed_rbs <= env.R:
                raise ValueError("licensed_rbs must be in 1..R")
            return policy.act(env) if env.psi <= licensed_rbs else 0

        def observe(self, *args):
            policy.observe(*args)

    return _Split()
