"""Episodic environments for the three problems and the Q-learning trainer.

Episodes build a vertex set one action at a time; rewards are objective
deltas, so they telescope to the final objective.  Training is 1-step
Q-learning (gamma = 1, semi-gradient targets) with uniform experience replay
and Adam on the mean single-sample squared Bellman error.
"""

from dataclasses import dataclass, replace
import math

import numpy as np

from .errors import DivergenceError, ValidationError
from .graphs import Graph, GenSpec, edge_array, generate
from .model import ParamSet, loss_and_grads_batch, q_values_batch

PROBLEMS = ("mvc", "mc", "mis")


def objective(problem, g: Graph, s) -> float:
    """The maximized objective: -|S| for mvc, +|S| for mis, cut(S) for mc."""
    s = list(s)
    if len(set(s)) != len(s):
        raise ValidationError("s: repeated vertices")
    if any(not 0 <= v < g.n for v in s):
        raise ValidationError("s: vertex id out of range")
    if problem == "mvc":
        return -float(len(s))
    if problem == "mis":
        ss = set(s)
        if any(u in ss and v in ss for u, v in g.edges):
            raise ValidationError("s: not an independent set")
        return float(len(s))
    if problem == "mc":
        ss = set(s)
        return float(sum(1 for u, v in g.edges if (u in ss) != (v in ss)))
    raise ValidationError(f"problem: unknown problem {problem!r}")


@dataclass
class EnvState:
    """One problem instance mid-episode; step() returns a fresh state."""

    problem: str
    g: Graph
    selected: tuple
    flags: np.ndarray  # float 0/1, length n
    t: int = 0
    halted: bool = False  # mc only: the stop condition has latched
    # derived caches, maintained incrementally
    unsel_deg: np.ndarray = None  # mvc: uncovered incident edges per vertex
    uncovered: int = 0  # mvc: edges with both endpoints unselected
    blocked: np.ndarray = None  # mis: vertices adjacent to the selection
    sel_nbrs: np.ndarray = None  # mc: selected-neighbor counts
    cut: int = 0  # mc: current cut value


def reset(problem, g: Graph) -> EnvState:
    if problem not in PROBLEMS:
        raise ValidationError(f"problem: unknown problem {problem!r}")
    st = EnvState(problem, g, (), np.zeros(g.n))
    if problem == "mvc":
        st.unsel_deg = g.degrees.copy()
        st.uncovered = g.m
    elif problem == "mis":
        st.blocked = np.zeros(g.n, dtype=bool)
    else:
        st.sel_nbrs = np.zeros(g.n, dtype=np.int64)
    return st


def feasible_actions(st: EnvState):
    """Sorted feasible vertices; empty list marks a terminal state."""
    unsel = st.flags == 0
    if st.problem == "mvc":
        return np.flatnonzero(unsel & (st.unsel_deg > 0)).tolist()
    if st.problem == "mis":
        return np.flatnonzero(unsel & ~st.blocked).tolist()
    if st.halted:
        return []
    return np.flatnonzero(unsel).tolist()


def cut_gain(st: EnvState, a) -> int:
    """Signed cut delta of adding a (mc): deg(a) - 2 |N(a) & S|."""
    return int(st.g.degrees[a] - 2 * st.sel_nbrs[a])


def step(st: EnvState, a: int):
    """Apply action a; returns (next state, reward).  O(deg(a))."""
    if not 0 <= a < st.g.n or st.flags[a] != 0:
        raise ValidationError(f"a: action {a} infeasible")
    flags = st.flags.copy()
    flags[a] = 1.0
    nxt = replace(st, selected=st.selected + (a,), flags=flags, t=st.t + 1)
    if st.problem == "mvc":
        if st.unsel_deg[a] <= 0:
            raise ValidationError(f"a: action {a} infeasible (no uncovered edge)")
        nxt.unsel_deg = st.unsel_deg.copy()
        nxt.uncovered = st.uncovered - int(st.unsel_deg[a])
        for u in st.g.neighbors(a):
            if flags[u] == 0:
                nxt.unsel_deg[u] -= 1
        reward = -1.0
    elif st.problem == "mis":
        if st.blocked[a]:
            raise ValidationError(f"a: action {a} infeasible (blocked)")
        nxt.blocked = st.blocked.copy()
        for u in st.g.neighbors(a):
            nxt.blocked[u] = True
        reward = 1.0
    else:
        if st.halted:
            raise ValidationError("a: episode halted")
        gain = cut_gain(st, a)
        nxt.sel_nbrs = st.sel_nbrs.copy()
        for u in st.g.neighbors(a):
            nxt.sel_nbrs[u] += 1
        nxt.cut = st.cut + gain
        reward = float(gain)
    return nxt, reward


def feasible_mask(problem, g: Graph, selected) -> np.ndarray:
    """Feasible-action mask rebuilt from scratch for a stored selection."""
    sel = np.zeros(g.n, dtype=bool)
    sel[list(selected)] = True
    if problem == "mc":
        return ~sel
    e = edge_array(g)
    if problem == "mis":
        blocked = np.zeros(g.n, dtype=bool)
        if len(e):
            blocked[e[sel[e[:, 1]], 0]] = True
            blocked[e[sel[e[:, 0]], 1]] = True
        return ~sel & ~blocked
    has_uncovered = np.zeros(g.n, dtype=bool)
    if len(e):
        open_e = e[~sel[e[:, 0]] & ~sel[e[:, 1]]]
        has_uncovered[open_e.ravel()] = True
    return ~sel & has_uncovered


@dataclass
class Transition:
    graph_index: int
    selected_before: tuple
    action: int
    reward: float
    selected_after: tuple
    terminal: bool


@dataclass
class TrainConfig:
    problem: str
    spec: GenSpec  # training-graph template; per-graph seeds are derived
    iterations: int
    seed: int
    pool_size: int = 1000
    t_train: int = 5
    d: int = 16
    lr: float = 1e-3
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay: int = 10_000
    replay_capacity: int = 50_000
    batch_size: int = 64
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8

    def validate(self):
        if self.problem not in PROBLEMS:
            raise ValidationError(f"problem: unknown problem {self.problem!r}")
        replace(self.spec, seed=0).validate()
        if self.iterations < 0:
            raise ValidationError("iterations: must be >= 0")
        for name in ("pool_size", "t_train", "d", "eps_decay", "replay_capacity",
                     "batch_size"):
            if getattr(self, name) < 1:
                raise ValidationError(f"{name}: must be >= 1")
        if self.lr <= 0:
            raise ValidationError("lr: must be > 0")
        if not (0.0 <= self.eps_end <= self.eps_start <= 1.0):
            raise ValidationError("eps: need 0 <= eps_end <= eps_start <= 1")
        if self.seed is None:
            raise ValidationError("seed: required")


def epsilon_at(cfg: TrainConfig, iteration: int) -> float:
    if iteration >= cfg.eps_decay:
        return cfg.eps_end
    frac = iteration / cfg.eps_decay
    return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac


def adam_update(params, grads, m, v, step_num, lr,
                beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam step on flat vectors; returns new arrays."""
    if not np.all(np.isfinite(grads)):
        raise DivergenceError("non-finite gradient in adam update")
    m = beta1 * m + (1.0 - beta1) * grads
    v = beta2 * v + (1.0 - beta2) * grads * grads
    mhat = m / (1.0 - beta1 ** step_num)
    vhat = v / (1.0 - beta2 ** step_num)
    return params - lr * mhat / (np.sqrt(vhat) + eps), m, v


class _Replay:
    """Fixed-capacity ring buffer."""

    def __init__(self, capacity):
        self.capacity = capacity
        self.items = []
        self.pos = 0

    def push(self, item):
        if len(self.items) < self.capacity:
            self.items.append(item)
        else:
            self.items[self.pos] = item
        self.pos = (self.pos + 1) % self.capacity

    def __len__(self):
        return len(self.items)


def _greedy_action(q, acts):
    # argmax over the feasible set, ties to the lowest vertex id
    best = acts[0]
    best_q = q[best]
    for a in acts[1:]:
        if q[a] > best_q:
            best, best_q = a, q[a]
    return best


def train(cfg: TrainConfig):
    """Run the Q-learning loop; returns (ParamSet, log rows).

    Log rows are (iteration, episode_objective, mean_loss, epsilon) with
    mean_loss averaged over the updates performed during that episode (nan
    if the replay buffer was still filling).  Deterministic given cfg.seed.
    """
    cfg.validate()
    root = np.random.SeedSequence(cfg.seed)
    init_ss, pool_ss, order_ss, explore_ss, replay_ss, coin_ss = root.spawn(6)
    params = ParamSet.init_random(cfg.d, init_ss)
    if cfg.iterations == 0:
        return params, []

    pool_rng = np.random.default_rng(pool_ss)
    pool = [
        generate(replace(cfg.spec, seed=int(s)))
        for s in pool_rng.integers(0, 2 ** 62, size=cfg.pool_size)
    ]
    order_rng = np.random.default_rng(order_ss)
    explore_rng = np.random.default_rng(explore_ss)
    replay_rng = np.random.default_rng(replay_ss)
    coin_rng = np.random.default_rng(coin_ss)

    replay = _Replay(cfg.replay_capacity)
    flat = params.to_flat()
    mom_m = np.zeros_like(flat)
    mom_v = np.zeros_like(flat)
    adam_step = 0
    log = []
    order = None

    for it in range(cfg.iterations):
        slot = it % cfg.pool_size
        if slot == 0:
            order = order_rng.permutation(cfg.pool_size)
        gi = int(order[slot])
        g = pool[gi]
        eps = epsilon_at(cfg, it)
        st = reset(cfg.problem, g)
        ep_losses = []
        best_prefix = 0.0  # mc: best cut over visited prefixes (empty = 0)
        while True:
            acts = feasible_actions(st)
            if not acts:
                break
            if explore_rng.random() < eps:
                a = acts[int(explore_rng.integers(len(acts)))]
            else:
                q = q_values_batch([g], st.flags[None, :], params, cfg.t_train)[0]
                a = _greedy_action(q, acts)
            st2, _reward = step(st, a)
            if cfg.problem == "mc":
                best_prefix = max(best_prefix, float(st2.cut))
                acts2 = feasible_actions(st2)
                if not acts2:
                    terminal = True
                elif max(cut_gain(st2, b) for b in acts2) <= 0 and (
                    coin_rng.random() < 0.5
                ):
                    st2 = replace(st2, halted=True)
                    terminal = True
                else:
                    terminal = False
            else:
                terminal = not feasible_actions(st2)
            replay.push(
                Transition(gi, st.selected, a, _reward, st2.selected, terminal)
            )
            if len(replay) >= cfg.batch_size:
                adam_step += 1
                loss, flat, mom_m, mom_v = _update(
                    cfg, pool, replay, replay_rng, params, flat,
                    mom_m, mom_v, adam_step,
                )
                if not math.isfinite(loss):
                    raise DivergenceError(
                        f"non-finite loss {loss!r} at iteration {it}"
                    )
                params = ParamSet.from_flat(cfg.d, flat)
                ep_losses.append(loss)
            st = st2
            if terminal:
                break
        if cfg.problem == "mc":
            ep_obj = best_prefix
        else:
            ep_obj = objective(cfg.problem, g, st.selected)
        mean_loss = float(np.mean(ep_losses)) if ep_losses else float("nan")
        log.append((it, ep_obj, mean_loss, eps))
    return params, log


def _update(cfg, pool, replay, replay_rng, params, flat, mom_m, mom_v, adam_step):
    idx = replay_rng.integers(0, len(replay), size=cfg.batch_size)
    batch = [replay.items[int(i)] for i in idx]
    n = pool[0].n
    graphs = [pool[tr.graph_index] for tr in batch]

    # bootstrap targets from the after-states, treated as constants
    flags_after = np.zeros((len(batch), n))
    for b, tr in enumerate(batch):
        for v in tr.selected_after:
            flags_after[b, v] = 1.0
    q_after = q_values_batch(graphs, flags_after, params, cfg.t_train)
    targets = np.empty(len(batch))
    for b, tr in enumerate(batch):
        y = tr.reward
        if not tr.terminal:
            mask = feasible_mask(cfg.problem, graphs[b], tr.selected_after)
            y += float(q_after[b][mask].max())
        targets[b] = y

    flags_before = np.zeros((len(batch), n))
    for b, tr in enumerate(batch):
        for v in tr.selected_before:
            flags_before[b, v] = 1.0
    actions = [tr.action for tr in batch]
    loss, grads = loss_and_grads_batch(
        graphs, flags_before, actions, targets, params, cfg.t_train
    )
    flat, mom_m, mom_v = adam_update(
        flat, grads, mom_m, mom_v, adam_step, cfg.lr,
        cfg.beta1, cfg.beta2, cfg.eps_adam,
    )
    return loss, flat, mom_m, mom_v


def write_train_log(log, path):
    """Training log as CSV: iteration,episode_objective,mean_loss,epsilon."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("iteration,episode_objective,mean_loss,epsilon\n")
        for it, obj, loss, eps in log:
            fh.write("%d,%.17g,%.17g,%.17g\n" % (it, obj, loss, eps))
