"""Learned skipping decisions: a double-DQN agent built from scratch.

The agent observes the system state plus the r most recent perturbations
and outputs Q-values for the two actions (0 skip, 1 actuate). Training
runs inside the shielded monitor loop: outside X' the applied action is
forced to 1, but the transition is stored with the agent's proposed
action so the penalty for leaving X' is learned.
"""

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from oic import geometry, system
from oic.runtime import SkipPolicy, SafetyViolationError, BundleError
from oic.rmpc import RmpcInfeasibleError

logger = logging.getLogger(__name__)

DEFAULT_REWARD_WEIGHTS = (0.01, 0.0001)


# ---------------------------------------------------------------------------
# agent state

@dataclass(frozen=True)
class AgentState:
    """Observation: current state and the r most recent perturbations."""

    x: np.ndarray
    w_hist: np.ndarray  # shape (r, n), zero-padded before t=0

    def flatten(self):
        return np.concatenate([self.x, self.w_hist.ravel()])


def make_state(x, w_hist, r, n):
    """Build an AgentState from the full perturbation history so far."""
    x = np.asarray(x, dtype=float).ravel()
    buf = np.zeros((r, n))
    tail = list(w_hist)[-r:] if r > 0 else []
    for i, w in enumerate(tail):
        buf[r - len(tail) + i] = np.asarray(w, dtype=float).ravel()
    return AgentState(x=x, w_hist=buf)


# ---------------------------------------------------------------------------
# normalization

@dataclass(frozen=True)
class Normalizer:
    """Per-coordinate affine map of flattened observations into [-1, 1].

    Degenerate coordinates (zero-width box) map to 0.
    """

    offset: np.ndarray
    scale: np.ndarray

    def __call__(self, v):
        return (np.asarray(v, dtype=float) - self.offset) * self.scale


def normalizer_from_sets(X_I, W, r):
    lo_x, hi_x = geometry.bounding_box(X_I)
    lo_w, hi_w = geometry.bounding_box(W)
    lo = np.concatenate([lo_x] + [lo_w] * r)
    hi = np.concatenate([hi_x] + [hi_w] * r)
    offset = (lo + hi) / 2.0
    width = hi - lo
    scale = np.where(width > 0, 2.0 / np.where(width > 0, width, 1.0), 0.0)
    return Normalizer(offset=offset, scale=scale)


# ---------------------------------------------------------------------------
# multilayer perceptron

class Mlp:
    """Fully connected net, rectified-linear hidden layers, linear head.

    Weights are (fan_in, fan_out) matrices; forward accepts a single
    flattened observation or a batch.
    """

    def __init__(self, dims, rng=None, weights=None):
        self.dims = list(int(d) for d in dims)
        if weights is not None:
            self.W = [w.copy() for w, _ in weights]
            self.b = [b.copy() for _, b in weights]
        else:
            if rng is None:
                raise ValueError("need an rng or explicit weights")
            self.W, self.b = [], []
            for fan_in, fan_out in zip(self.dims[:-1], self.dims[1:]):
                std = np.sqrt(2.0 / fan_in)
                self.W.append(rng.normal(0.0, std, size=(fan_in, fan_out)))
                self.b.append(np.zeros(fan_out))

    def copy(self):
        return Mlp(self.dims, weights=list(zip(self.W, self.b)))

    def copy_from(self, other):
        for i in range(len(self.W)):
            self.W[i][...] = other.W[i]
            self.b[i][...] = other.b[i]

    def forward(self, x):
        a = np.atleast_2d(np.asarray(x, dtype=float))
        last = len(self.W) - 1
        for i, (W, b) in enumerate(zip(self.W, self.b)):
            a = a @ W + b
            if i < last:
                a = np.maximum(a, 0.0)
        return a[0] if np.asarray(x).ndim == 1 else a

    def forward_cached(self, X):
        """Batch forward pass keeping pre-activations for backprop."""
        a = np.atleast_2d(np.asarray(X, dtype=float))
        acts = [a]          # post-activation per layer (input first)
        pre = []            # pre-activation per layer
        last = len(self.W) - 1
        for i, (W, b) in enumerate(zip(self.W, self.b)):
            z = acts[-1] @ W + b
            pre.append(z)
            acts.append(np.maximum(z, 0.0) if i < last else z)
        return acts, pre

    def check_finite(self):
        for W, b in zip(self.W, self.b):
            if not (np.isfinite(W).all() and np.isfinite(b).all()):
                raise FloatingPointError("network parameters became non-finite")


def backprop(net, X, actions, targets):
    """Gradients of mean squared TD error w.r.t. all parameters.

    Only the Q-output of the taken action carries error. Returns
    (grads_W, grads_b, loss).
    """
    acts, pre = net.forward_cached(X)
    q_all = acts[-1]
    B = q_all.shape[0]
    idx = np.arange(B)
    q = q_all[idx, actions]
    err = q - targets
    loss = float(np.mean(err ** 2))
    dZ = np.zeros_like(q_all)
    dZ[idx, actions] = 2.0 * err / B
    grads_W, grads_b = [], []
    for i in reversed(range(len(net.W))):
        grads_W.append(acts[i].T @ dZ)
        grads_b.append(dZ.sum(axis=0))
        if i > 0:
            dZ = (dZ @ net.W[i].T) * (pre[i - 1] > 0)
    grads_W.reverse()
    grads_b.reverse()
    return grads_W, grads_b, loss


def clip_gradients(grads_W, grads_b, max_norm):
    total = np.sqrt(sum(float((g ** 2).sum()) for g in grads_W)
                    + sum(float((g ** 2).sum()) for g in grads_b))
    if total > max_norm > 0:
        factor = max_norm / total
        grads_W = [g * factor for g in grads_W]
        grads_b = [g * factor for g in grads_b]
    return grads_W, grads_b


# ---------------------------------------------------------------------------
# reward, action selection, updates

def reward_fn(s1, z, s2, bundle, kappa, weights=DEFAULT_REWARD_WEIGHTS):
    """R = -w1*R1 - w2*R2.

    R1 penalizes the successor leaving X'; R2 charges the controller's
    input 1-norm except when a skip was actually possible (z=0 with the
    current state inside X').
    """
    w1, w2 = weights
    r1 = 0.0 if bundle.X_prime.contains(s2.x, tol=-geometry.EPS_FEAS) else 1.0
    if z == 0 and bundle.X_prime.contains(s1.x, tol=-geometry.EPS_FEAS):
        r2 = 0.0
    else:
        r2 = float(np.abs(np.asarray(kappa(s1.x), dtype=float)).sum())
    return -w1 * r1 - w2 * r2


def act(net, obs, eps, rng):
    """Epsilon-greedy action on a normalized observation; ties pick 0."""
    if eps > 0 and rng.random() < eps:
        return int(rng.integers(0, 2))
    q = net.forward(obs)
    return 0 if q[0] >= q[1] else 1


@dataclass
class Transition:
    s: AgentState
    z: int
    reward: float
    s_next: AgentState
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity ring buffer of transitions."""

    def __init__(self, capacity):
        self.capacity = int(capacity)
        self._items = []
        self._pos = 0

    def __len__(self):
        return len(self._items)

    def push(self, tr):
        if len(self._items) < self.capacity:
            self._items.append(tr)
        else:
            self._items[self._pos] = tr
        self._pos = (self._pos + 1) % self.capacity

    def sample(self, rng, batch_size):
        idx = rng.integers(0, len(self._items), size=batch_size)
        return [self._items[i] for i in idx]


def ddqn_update(online, target, batch, gamma, lr, normalizer,
                max_grad_norm=10.0):
    """One SGD step on the double-DQN TD error; returns the batch loss.

    The online net picks the bootstrap action, the target net scores it.
    """
    obs = np.array([normalizer(tr.s.flatten()) for tr in batch])
    obs_next = np.array([normalizer(tr.s_next.flatten()) for tr in batch])
    actions = np.array([tr.z for tr in batch], dtype=int)
    rewards = np.array([tr.reward for tr in batch])
    terminal = np.array([tr.terminal for tr in batch], dtype=bool)

    q_next_online = online.forward(obs_next)
    a_star = np.argmax(q_next_online, axis=1)
    q_next_target = target.forward(obs_next)
    bootstrap = q_next_target[np.arange(len(batch)), a_star]
    y = rewards + np.where(terminal, 0.0, gamma * bootstrap)

    grads_W, grads_b, loss = backprop(online, obs, actions, y)
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite TD loss {loss}")
    grads_W, grads_b = clip_gradients(grads_W, grads_b, max_grad_norm)
    for W, g in zip(online.W, grads_W):
        W -= lr * g
    for b, g in zip(online.b, grads_b):
        b -= lr * g
    online.check_finite()
    return loss


# ---------------------------------------------------------------------------
# training

@dataclass(frozen=True)
class Hyper:
    gamma: float = 0.99
    lr: float = 1e-3
    replay_capacity: int = 100_000
    batch_size: int = 64
    target_period: int = 500      # hard target copy every C updates
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_frac: float = 0.5         # fraction of training steps to anneal over
    episodes: int = 2000
    steps_per_episode: int = 100
    r: int = 1                    # perturbation memory length
    hidden: tuple = (64, 64)
    learn_start: int = 500        # transitions before updates begin
    max_grad_norm: float = 10.0
    reward_weights: tuple = DEFAULT_REWARD_WEIGHTS

    def as_dict(self):
        return {
            "gamma": self.gamma, "lr": self.lr,
            "replay_capacity": self.replay_capacity,
            "batch_size": self.batch_size,
            "target_period": self.target_period,
            "eps_start": self.eps_start, "eps_end": self.eps_end,
            "eps_frac": self.eps_frac, "episodes": self.episodes,
            "steps_per_episode": self.steps_per_episode, "r": self.r,
            "hidden": list(self.hidden), "learn_start": self.learn_start,
            "max_grad_norm": self.max_grad_norm,
            "reward_weights": list(self.reward_weights),
        }


@dataclass(frozen=True)
class DqnAgent:
    """Frozen trained policy: network plus its input normalization."""

    net: Mlp
    normalizer: Normalizer
    r: int

    def q_values(self, s):
        return self.net.forward(self.normalizer(s.flatten()))

    def greedy(self, s):
        q = self.q_values(s)
        return 0 if q[0] >= q[1] else 1


def train(sys, bundle, kappa, w_source, hyper=None, seed=0):
    """Train a double-DQN skip agent inside the shielded loop.

    w_source is cloned with seed ^ episode_index per episode; initial
    states are sampled uniformly from X'. Returns (DqnAgent, curve)
    where curve rows are dicts with episode, cumulative_reward, energy,
    skip_count, epsilon.
    """
    hp = hyper or Hyper()
    rng = np.random.default_rng(seed)
    n = sys.n
    norm = normalizer_from_sets(bundle.X_I, sys.W, hp.r)
    dims = [n + hp.r * n, *hp.hidden, 2]
    online = Mlp(dims, rng=rng)
    target = online.copy()
    buf = ReplayBuffer(hp.replay_capacity)
    total_steps = hp.episodes * hp.steps_per_episode
    anneal_steps = max(1, int(hp.eps_frac * total_steps))
    step_count = 0
    update_count = 0
    curve = []

    for ep in range(hp.episodes):
        w_src = w_source.clone(seed ^ ep)
        x = geometry.sample(bundle.X_prime, rng, 1)[0]
        w_hist = []
        cum_reward = 0.0
        energy = 0.0
        skip_count = 0
        eps = None
        for t in range(hp.steps_per_episode):
            eps = max(hp.eps_end, hp.eps_start - (hp.eps_start - hp.eps_end)
                      * step_count / anneal_steps)
            s = make_state(x, w_hist, hp.r, n)
            z_prop = act(online, norm(s.flatten()), eps, rng)
            in_xprime = bundle.X_prime.contains(x, tol=-geometry.EPS_FEAS)
            z_appl = z_prop if in_xprime else 1
            if z_appl == 1:
                try:
                    u = np.asarray(kappa(x), dtype=float).ravel()
                except RmpcInfeasibleError as exc:
                    raise BundleError(
                        f"controller infeasible inside X_I during training: {exc}"
                    ) from exc
            else:
                u = sys.u_skip
            w = np.asarray(w_src.query(t), dtype=float).ravel()
            x_next = system.step(sys, x, u, w, strict=False)
            if not bundle.X_I.contains(x_next, tol=geometry.EPS_FEAS):
                raise SafetyViolationError(
                    f"training left X_I at episode {ep} step {t}: {x_next}")
            w_hist.append(w)
            s_next = make_state(x_next, w_hist, hp.r, n)
            reward = reward_fn(s, z_prop, s_next, bundle, kappa,
                               weights=hp.reward_weights)
            assert reward <= 0.0
            buf.push(Transition(s=s, z=z_prop, reward=reward, s_next=s_next,
                                terminal=(t == hp.steps_per_episode - 1)))
            cum_reward += reward
            energy += float(np.abs(u).sum())
            skip_count += int(z_appl == 0)
            if len(buf) >= max(hp.learn_start, hp.batch_size):
                batch = buf.sample(rng, hp.batch_size)
                ddqn_update(online, target, batch, hp.gamma, hp.lr, norm,
                            max_grad_norm=hp.max_grad_norm)
                update_count += 1
                if update_count % hp.target_period == 0:
                    target.copy_from(online)
            x = x_next
            step_count += 1
        curve.append({"episode": ep, "cumulative_reward": cum_reward,
                      "energy": energy, "skip_count": skip_count,
                      "epsilon": eps})
    agent = DqnAgent(net=online, normalizer=norm, r=hp.r)
    return agent, curve


def write_curve_csv(curve, path, hyper=None, seed=None):
    """Learning curve CSV; hyper-parameters echoed in a comment header."""
    with open(path, "w", newline="") as f:
        if hyper is not None:
            f.write(f"# hyper {sorted(hyper.as_dict().items())!r}\n")
        if seed is not None:
            f.write(f"# seed {seed}\n")
        wr = csv.writer(f)
        wr.writerow(["episode", "cumulative_reward", "energy", "skip_count",
                     "epsilon"])
        for row in curve:
            wr.writerow([row["episode"],
                         f"{row['cumulative_reward']:.17g}",
                         f"{row['energy']:.17g}",
                         row["skip_count"],
                         f"{row['epsilon']:.17g}"])


# ---------------------------------------------------------------------------
# serialization

def mlp_to_text(net):
    lines = ["mlp v1", "dims " + " ".join(str(d) for d in net.dims)]
    for i, (W, b) in enumerate(zip(net.W, net.b)):
        lines.append(f"layer {i}")
        for row in W:
            lines.append(" ".join(f"{v:.17g}" for v in row))
        lines.append(" ".join(f"{v:.17g}" for v in b))
    return "\n".join(lines) + "\n"


def mlp_from_text(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if lines[0].strip() != "mlp v1":
        raise ValueError("not an mlp v1 document")
    dims = [int(t) for t in lines[1].split()[1:]]
    weights = []
    pos = 2
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        if not lines[pos].startswith("layer"):
            raise ValueError("malformed mlp document")
        pos += 1
        W = np.array([[float(v) for v in lines[pos + r].split()]
                      for r in range(fan_in)])
        pos += fan_in
        b = np.array([float(v) for v in lines[pos].split()])
        pos += 1
        if W.shape != (fan_in, fan_out) or b.shape != (fan_out,):
            raise ValueError("mlp layer shape mismatch")
        weights.append((W, b))
    return Mlp(dims, weights=weights)


def agent_to_text(agent):
    head = [
        "dqnagent v1",
        f"r {agent.r}",
        "offset " + " ".join(f"{v:.17g}" for v in agent.normalizer.offset),
        "scale " + " ".join(f"{v:.17g}" for v in agent.normalizer.scale),
    ]
    return "\n".join(head) + "\n" + mlp_to_text(agent.net)


def agent_from_text(text):
    lines = text.splitlines()
    if not lines or lines[0].strip() != "dqnagent v1":
        raise ValueError("not a dqnagent v1 document")
    r = int(lines[1].split()[1])
    offset = np.array([float(v) for v in lines[2].split()[1:]])
    scale = np.array([float(v) for v in lines[3].split()[1:]])
    net = mlp_from_text("\n".join(lines[4:]))
    return DqnAgent(net=net, normalizer=Normalizer(offset=offset, scale=scale),
                    r=r)


class DrlPolicy(SkipPolicy):
    """Greedy policy of a trained agent; builds its own observation."""

    name = "drl"

    def __init__(self, agent):
        self.agent = agent

    def decide(self, x, w_hist, forecast=None):
        n = np.asarray(x).size
        s = make_state(x, w_hist, self.agent.r, n)
        return self.agent.greedy(s)
