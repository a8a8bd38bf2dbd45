"""Value-function learner built directly on numpy.

One hidden layer of rectified units feeding either a plain action-value head
or dueling value/advantage heads, trained with Adam on mean squared TD
error. Backprop is written out by hand; the test suite checks it against
central finite differences. Also home to the replay buffer, epsilon-greedy
action selection with masking, and the rule policy used to warm-start the
buffer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import DialogueAct, Experience, TICKET
from .env import EnvState
from .kb import KbTable, match_entries


class RescueExhausted(RuntimeError):
    """Every catalogue action is masked; nothing left to re-select."""


class TrainingDiverged(RuntimeError):
    """Loss went non-finite; training must stop."""


class QNetwork:
    """MLP approximation of action values, optionally with dueling heads."""

    def __init__(self, params: dict[str, np.ndarray], dueling: bool):
        self.params = params
        self.dueling = dueling

    @property
    def input_dim(self) -> int:
        return self.params["W1"].shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.params["W1"].shape[1]

    @property
    def output_dim(self) -> int:
        key = "Wa" if self.dueling else "W2"
        return self.params[key].shape[1]

    @classmethod
    def init(cls, input_dim: int, output_dim: int, hidden_dim: int = 80,
             dueling: bool = False,
             rng: np.random.Generator | None = None) -> "QNetwork":
        rng = rng if rng is not None else np.random.default_rng(0)

        def layer(fan_in, fan_out):
            scale = np.sqrt(2.0 / fan_in)
            return rng.normal(0.0, scale, size=(fan_in, fan_out))

        params = {"W1": layer(input_dim, hidden_dim), "b1": np.zeros(hidden_dim)}
        if dueling:
            params["Wv"] = layer(hidden_dim, 1)
            params["bv"] = np.zeros(1)
            params["Wa"] = layer(hidden_dim, output_dim)
            params["ba"] = np.zeros(output_dim)
        else:
            params["W2"] = layer(hidden_dim, output_dim)
            params["b2"] = np.zeros(output_dim)
        return cls(params, dueling)

    def copy(self) -> "QNetwork":
        return QNetwork({k: v.copy() for k, v in self.params.items()}, self.dueling)

    def forward(self, states: np.ndarray) -> np.ndarray:
        """Action values for a batch of state vectors, shape (B, |A|)."""
        states = np.atleast_2d(states)
        if states.shape[1] != self.input_dim:
            raise ValueError(
                f"state width {states.shape[1]} != input_dim {self.input_dim}")
        hidden = np.maximum(states @ self.params["W1"] + self.params["b1"], 0.0)
        if not self.dueling:
            return hidden @ self.params["W2"] + self.params["b2"]
        value = hidden @ self.params["Wv"] + self.params["bv"]
        adv = hidden @ self.params["Wa"] + self.params["ba"]
        return value + adv - adv.mean(axis=1, keepdims=True)

    def q_values(self, state_vec: np.ndarray) -> np.ndarray:
        return self.forward(state_vec.reshape(1, -1))[0]

    def loss_and_grads(self, states: np.ndarray, actions: np.ndarray,
                       targets: np.ndarray) -> tuple[float, dict[str, np.ndarray]]:
        """Mean squared TD error on the chosen actions, plus its gradient."""
        batch = states.shape[0]
        pre = states @ self.params["W1"] + self.params["b1"]
        hidden = np.maximum(pre, 0.0)
        if self.dueling:
            value = hidden @ self.params["Wv"] + self.params["bv"]
            adv = hidden @ self.params["Wa"] + self.params["ba"]
            q = value + adv - adv.mean(axis=1, keepdims=True)
        else:
            q = hidden @ self.params["W2"] + self.params["b2"]

        picked = q[np.arange(batch), actions]
        err = picked - targets
        loss = float(np.mean(err ** 2))

        dq = np.zeros_like(q)
        dq[np.arange(batch), actions] = 2.0 * err / batch
        grads: dict[str, np.ndarray] = {}
        if self.dueling:
            dv = dq.sum(axis=1, keepdims=True)
            da = dq - dq.sum(axis=1, keepdims=True) / self.output_dim
            grads["Wv"] = hidden.T @ dv
            grads["bv"] = dv.sum(axis=0)
            grads["Wa"] = hidden.T @ da
            grads["ba"] = da.sum(axis=0)
            dhidden = dv @ self.params["Wv"].T + da @ self.params["Wa"].T
        else:
            grads["W2"] = hidden.T @ dq
            grads["b2"] = dq.sum(axis=0)
            dhidden = dq @ self.params["W2"].T
        dpre = dhidden * (pre > 0.0)
        grads["W1"] = states.T @ dpre
        grads["b1"] = dpre.sum(axis=0)
        return loss, grads


def sync_target(net: QNetwork) -> QNetwork:
    """A frozen deep copy of the online network."""
    return net.copy()


@dataclass
class AdamState:
    """Adam moments for one parameter set."""

    learning_rate: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def update(self, params: dict[str, np.ndarray],
               grads: dict[str, np.ndarray]) -> None:
        if not self.m:
            self.m = {k: np.zeros_like(p) for k, p in params.items()}
            self.v = {k: np.zeros_like(p) for k, p in params.items()}
        self.step_count += 1
        t = self.step_count
        for key, grad in grads.items():
            self.m[key] = self.beta1 * self.m[key] + (1 - self.beta1) * grad
            self.v[key] = self.beta2 * self.v[key] + (1 - self.beta2) * grad ** 2
            m_hat = self.m[key] / (1 - self.beta1 ** t)
            v_hat = self.v[key] / (1 - self.beta2 ** t)
            params[key] -= self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def select_action(net: QNetwork, state_vec: np.ndarray, epsilon: float,
                  mask: set[int], rng: np.random.Generator) -> int:
    """Epsilon-greedy over the unmasked actions; greedy ties go to the
    lowest id. Raises :class:`RescueExhausted` when everything is masked."""
    allowed = [a for a in range(net.output_dim) if a not in mask]
    if not allowed:
        raise RescueExhausted("all catalogue actions are masked")
    if rng.random() < epsilon:
        return allowed[int(rng.integers(len(allowed)))]
    q = net.q_values(state_vec)
    return allowed[int(np.argmax(q[allowed]))]


def train_step(net: QNetwork, target_net: QNetwork, batch: list[Experience],
               gamma: float, variant: str, opt: AdamState) -> float:
    """One Adam update on a batch; returns the pre-update loss."""
    states = np.stack([e.state_vec for e in batch])
    actions = np.array([e.action_id for e in batch], dtype=int)
    next_states = np.stack([e.next_state_vec for e in batch])
    rewards = np.array([e.reward for e in batch], dtype=float)
    done = np.array([e.done for e in batch], dtype=bool)

    q_next_target = target_net.forward(next_states)
    if variant == "double":
        greedy = np.argmax(net.forward(next_states), axis=1)
        bootstrap = q_next_target[np.arange(len(batch)), greedy]
    else:
        bootstrap = q_next_target.max(axis=1)
    targets = rewards + gamma * bootstrap * (~done)

    loss, grads = net.loss_and_grads(states, actions, targets)
    if not np.isfinite(loss):
        raise TrainingDiverged(
            f"non-finite loss {loss!r} (rewards {rewards.min()}..{rewards.max()}, "
            f"bootstrap {bootstrap.min()}..{bootstrap.max()})")
    opt.update(net.params, grads)
    return loss


class ReplayBuffer:
    """Fixed-capacity ring buffer with strict FIFO eviction."""

    def __init__(self, capacity: int = 10000):
        self.capacity = capacity
        self._storage: list[Experience] = []
        self._cursor = 0

    def __len__(self) -> int:
        return len(self._storage)

    def push(self, experience: Experience) -> None:
        if len(self._storage) < self.capacity:
            self._storage.append(experience)
        else:
            self._storage[self._cursor] = experience
        self._cursor = (self._cursor + 1) % self.capacity

    def items(self) -> list[Experience]:
        """Contents in insertion order, oldest first."""
        if len(self._storage) < self.capacity:
            return list(self._storage)
        return self._storage[self._cursor:] + self._storage[:self._cursor]

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Experience]:
        """Uniform sample without replacement within the batch."""
        size = min(batch_size, len(self._storage))
        idx = rng.choice(len(self._storage), size=size, replace=False)
        return [self._storage[i] for i in idx]

    def epoch_batches(self, batch_size: int, rng: np.random.Generator):
        """One shuffled full sweep of the buffer, in batches."""
        order = rng.permutation(len(self._storage))
        for start in range(0, len(order), batch_size):
            yield [self._storage[i] for i in order[start:start + batch_size]]


def warm_start_act(table: KbTable, state: EnvState) -> DialogueAct:
    """Deterministic rule policy used to pre-fill the replay buffer.

    Ask unanswered slots in schema order while several entries still match;
    once the matches are pinned down (or every slot has been asked), answer
    the user's pending request, book on a ticket request, and mirror the
    common acts otherwise.
    """
    if state.current_n > 1:
        for slot in table.schema:
            if slot not in state.constraints_so_far:
                return DialogueAct.of("request", {slot: None})

    last = state.last_user_act
    if last is not None and last.intent == "request":
        slot = last.first_slot
        if state.current_n == 0:
            return DialogueAct.of("bye")
        if slot == TICKET:
            return DialogueAct.of("booking")
        rows = match_entries(table, state.query_constraints())
        return DialogueAct.of("inform", {slot: table.row(rows[0])[slot]})
    if last is not None and last.intent in ("bye", "thanks"):
        return DialogueAct.of("bye")
    return DialogueAct.of("greet")


def save_checkpoint(path, net: QNetwork, opt: AdamState | None = None,
                    meta: dict | None = None) -> None:
    """Write a bit-exact reloadable snapshot of network and optimizer."""
    arrays = {f"param__{k}": v for k, v in net.params.items()}
    header = {
        "version": 1,
        "dueling": net.dueling,
        "meta": meta or {},
    }
    if opt is not None:
        header["opt"] = {
            "learning_rate": opt.learning_rate, "beta1": opt.beta1,
            "beta2": opt.beta2, "eps": opt.eps, "step_count": opt.step_count,
        }
        arrays.update({f"adam_m__{k}": v for k, v in opt.m.items()})
        arrays.update({f"adam_v__{k}": v for k, v in opt.v.items()})
    np.savez(path, __header__=np.frombuffer(
        json.dumps(header).encode(), dtype=np.uint8), **arrays)


def load_checkpoint(path) -> tuple[QNetwork, AdamState | None, dict]:
    with np.load(path) as data:
        header = json.loads(bytes(data["__header__"]).decode())
        params = {k.removeprefix("param__"): data[k]
                  for k in data.files if k.startswith("param__")}
        net = QNetwork(params, header["dueling"])
        opt = None
        if "opt" in header:
            opt = AdamState(**header["opt"])
            opt.m = {k.removeprefix("adam_m__"): data[k]
                     for k in data.files if k.startswith("adam_m__")}
            opt.v = {k.removeprefix("adam_v__"): data[k]
                     for k in data.files if k.startswith("adam_v__")}
    return net, opt, header.get("meta", {})
