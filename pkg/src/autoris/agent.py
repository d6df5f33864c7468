"""DQN decision loop for the autonomous RIS.

The agent sees two states, the spatial spectrum of the combined RIS
observation per user and the spatial spectrum of its own phase vector, picks
one column of a DFT action matrix, and nudges its phases along that column
with a step size driven by the last rate change.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .nn import Network, default_architecture, read_container, write_container

log = logging.getLogger(__name__)


@dataclass
class AgentConfig:
    gamma: float = 0.9
    eps_start: float = 1.0
    eps_decay: float = 0.99
    eps_floor: float = 0.05
    replay_capacity: int = 2048
    batch_size: int = 64
    train_period: int = 32
    train_passes: int = 2
    learning_rate: float = 1e-3
    recompute_q: bool = True
    offset_init: bool = True
    rate_floor: float = 1e-9
    action_scale: str = "unit_modulus"  # or "unitary"
    width1: int = 128
    width2: int = 64
    head_width: int = 128
    leaky_slope: float = 0.01
    dropout: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        for name in ("replay_capacity", "batch_size", "train_period", "train_passes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not 0.0 <= self.eps_floor <= self.eps_start <= 1.0 or not 0.0 < self.eps_decay <= 1.0:
            raise ValueError("invalid epsilon schedule")
        if self.action_scale not in ("unitary", "unit_modulus"):
            raise ValueError(f"unknown action scale {self.action_scale!r}")


@dataclass
class AgentState:
    s1: np.ndarray  # (N K,)
    s2: np.ndarray  # (N,)


@dataclass
class Transition:
    state: AgentState
    action: int
    reward: float
    next_state: AgentState
    q: np.ndarray
    q_next: np.ndarray
    eta: float


def dft(x, axis=0):
    """Unitary DFT along ``axis``."""
    return np.fft.fft(x, axis=axis, norm="ortho")


def dft_action_set(n: int, scale: str = "unitary") -> np.ndarray:
    """DFT matrix whose columns are the candidate update directions.

    ``unitary`` columns have unit norm; ``unit_modulus`` columns have unit
    modulus entries.
    """
    idx = np.arange(n)
    V = np.exp(-2j * np.pi * np.outer(idx, idx) / n)
    return V / np.sqrt(n) if scale == "unitary" else V


def build_state(y_R, y_ue, v) -> AgentState:
    """Raw DQN inputs.

    ``s1`` concatenates ``|DFT(conj(y_R) * v * y_k)|`` over users and
    ``s2 = |DFT(v)|``. With ``(N, T)`` signals the modulus spectrum is
    averaged over the ``T`` snapshots.
    """
    y_R = np.asarray(y_R)
    blocks = []
    for y_k in y_ue:
        prod = y_R.conj() * (v[:, None] if y_R.ndim == 2 else v) * np.asarray(y_k)
        spec = np.abs(dft(prod, axis=0))
        blocks.append(spec.mean(axis=1) if spec.ndim == 2 else spec)
    return AgentState(np.concatenate(blocks), np.abs(dft(v)))


def scale_state(state: AgentState) -> AgentState:
    """Rescale ``s1`` to unit RMS so the network sees O(1) inputs."""
    rms = np.sqrt(np.mean(state.s1 ** 2))
    s1 = state.s1 / rms if rms > 0 else state.s1
    return AgentState(s1, state.s2)


def one_hot_indicator(q) -> np.ndarray:
    q = np.asarray(q)
    out = np.zeros(q.shape)
    out[int(np.argmax(q))] = 1.0  # argmax returns the lowest index on ties
    return out


def select_action(q, eps: float, rng) -> int:
    """Epsilon-greedy over ``q``. Always consumes two draws from ``rng``."""
    if not 0.0 <= eps <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    explore = rng.random() < eps
    random_action = int(rng.integers(len(q)))
    return random_action if explore else int(np.argmax(q))


def adaptive_eta(delta_rate: float) -> float:
    return 0.1 * abs(delta_rate) + 0.01


def update_phase(v, action: int, eta: float, V) -> np.ndarray:
    """``exp(j angle(v + eta V[:, action]))``; zero sums keep their old phase."""
    return _kernels.phase_update(v, V[:, action], eta)


def reward(rate_next: float, rate_now: float, floor: float = 1e-9) -> float:
    if rate_now <= 0:
        log.warning("zero estimated rate; using floor %g in the reward ratio", floor)
        rate_now = floor
    return rate_next / rate_now


def target_q(q, q_next, action: int, r: float, gamma: float) -> np.ndarray:
    out = np.array(q, dtype=float, copy=True)
    q_next = np.asarray(q_next, dtype=float)
    out[action] = r + gamma * (q_next @ one_hot_indicator(q_next))
    return out


def normalize_target(q_tilde, eta: float, gamma: float) -> np.ndarray:
    """Standardise to mean ``1/(1-gamma)`` and (population) std ``eta``."""
    q_tilde = np.asarray(q_tilde, dtype=float)
    offset = 1.0 / (1.0 - gamma)
    sigma = q_tilde.std()
    if sigma == 0:
        return np.full(q_tilde.shape, offset)
    return (eta / sigma) * (q_tilde - q_tilde.mean()) + offset


def td_loss(q_check, q_pred, action: int) -> float:
    return float((q_check[action] - q_pred[action]) ** 2)


@dataclass
class TrainStats:
    updates: int = 0
    mean_loss: float = float("nan")


def train_cycle(buffer, net: Network, config: AgentConfig, rng) -> TrainStats:
    """Shuffle the buffer and take one optimizer step per minibatch, for
    ``config.train_passes`` passes."""
    items = list(buffer)
    if not items:
        return TrainStats()
    losses = []
    for _ in range(config.train_passes):
        order = rng.permutation(len(items))
        for start in range(0, len(items), config.batch_size):
            batch = [items[i] for i in order[start:start + config.batch_size]]
            s1 = np.stack([tr.state.s1 for tr in batch])
            s2 = np.stack([tr.state.s2 for tr in batch])
            if config.recompute_q:
                q_old = net.forward(s1, s2)
                q_next = net.forward(np.stack([tr.next_state.s1 for tr in batch]),
                                     np.stack([tr.next_state.s2 for tr in batch]))
                q_old, q_next = np.atleast_2d(q_old), np.atleast_2d(q_next)
            else:
                q_old = np.stack([tr.q for tr in batch])
                q_next = np.stack([tr.q_next for tr in batch])
            actions = np.array([tr.action for tr in batch])
            targets = np.array([
                normalize_target(target_q(q_old[i], q_next[i], tr.action, tr.reward, config.gamma),
                                 tr.eta, config.gamma)[tr.action]
                for i, tr in enumerate(batch)
            ])
            q_pred, cache = net.forward(s1, s2, "train", rng=rng)
            q_pred = np.atleast_2d(q_pred)
            rows = np.arange(len(batch))
            err = q_pred[rows, actions] - targets
            dq = np.zeros_like(q_pred)
            dq[rows, actions] = 2.0 * err / len(batch)
            net.optimizer_step(net.backward(cache, dq))
            losses.append(float(np.mean(err ** 2)))
    return TrainStats(len(losses), float(np.mean(losses)))


@dataclass
class StepInfo:
    action: int
    eta: float
    epsilon: float
    reward: float
    trained: TrainStats | None = None


@dataclass
class _Pending:
    state: AgentState
    action: int
    q: np.ndarray
    rate: float


class DQNAgent:
    """Sequential act/learn loop; one call to :meth:`step` per RIS decision."""

    def __init__(self, num_elements: int, num_users: int, config: AgentConfig | None = None,
                 rng: np.random.Generator | None = None):
        self.config = config or AgentConfig()
        self.rng = rng if rng is not None else np.random.default_rng()
        c = self.config
        arch = default_architecture(num_elements * num_users, num_elements, num_elements,
                                    c.width1, c.width2, c.head_width, c.leaky_slope, c.dropout)
        self.net = Network(arch, rng=self.rng)
        self.net.optimizer.lr = c.learning_rate
        if c.offset_init:
            # start every Q value at the normalised-target centre
            self.net.init_output(1.0 / (1.0 - c.gamma))
        self.V = dft_action_set(num_elements, c.action_scale)
        self.buffer: deque[Transition] = deque(maxlen=c.replay_capacity)
        self.epsilon = c.eps_start
        self.steps = 0
        self.anomalies: list[str] = []
        self._pending: _Pending | None = None

    def step(self, state: AgentState, rate: float, v) -> tuple[np.ndarray, StepInfo]:
        """Record the transition closed by ``rate``, choose an action and
        return the updated phase vector."""
        c = self.config
        state = scale_state(state)
        q = self.net.forward(state.s1, state.s2)
        r_hat = float("nan")
        eta = adaptive_eta(0.0)
        if self._pending is not None:
            prev = self._pending
            eta = adaptive_eta(rate - prev.rate)
            if prev.rate <= 0:
                self.anomalies.append(f"step {self.steps}: zero rate in reward ratio")
            r_hat = reward(rate, prev.rate, c.rate_floor)
            self.buffer.append(Transition(prev.state, prev.action, r_hat, state, prev.q, q, eta))
        eps = self.epsilon
        action = select_action(q, eps, self.rng)
        v_next = update_phase(v, action, eta, self.V)
        self._pending = _Pending(state, action, q, rate)
        self.epsilon = max(c.eps_floor, self.epsilon * c.eps_decay)
        self.steps += 1
        trained = None
        if self.steps % c.train_period == 0 and self.buffer:
            trained = train_cycle(self.buffer, self.net, c, self.rng)
        return v_next, StepInfo(action, eta, eps, r_hat, trained)


def save_transitions(transitions, path) -> None:
    """Serialise transitions in the parameter-file container."""
    transitions = list(transitions)
    arrays = {}
    for i, tr in enumerate(transitions):
        arrays[f"{i}:s1"] = tr.state.s1
        arrays[f"{i}:s2"] = tr.state.s2
        arrays[f"{i}:next_s1"] = tr.next_state.s1
        arrays[f"{i}:next_s2"] = tr.next_state.s2
        arrays[f"{i}:q"] = tr.q
        arrays[f"{i}:q_next"] = tr.q_next
    meta = {"scalars": [[tr.action, tr.reward, tr.eta] for tr in transitions]}
    write_container(path, "transitions", meta, arrays)


def load_transitions(path) -> list[Transition]:
    meta, arrays = read_container(path, "transitions")
    out = []
    for i, (action, r, eta) in enumerate(meta["scalars"]):
        out.append(Transition(
            AgentState(arrays[f"{i}:s1"], arrays[f"{i}:s2"]), int(action), float(r),
            AgentState(arrays[f"{i}:next_s1"], arrays[f"{i}:next_s2"]),
            arrays[f"{i}:q"], arrays[f"{i}:q_next"], float(eta),
        ))
    return out
