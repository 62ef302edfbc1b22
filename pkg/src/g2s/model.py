"""The full network: evolution dynamics, gated recurrent reader, Q-value head.

Forward evaluation and exact reverse-mode gradients are hand-derived and
implemented over a stack of same-size instances (a block-diagonal union
graph), so a replay batch is one vectorized pass; the public single-instance
contract is the batch-of-one special case.

Update equations, with c_v the selection flag and N(v) the neighbor set:

    x_v(t+1) = relu(W_G1 sum_{u in N(v)} x_u(t) + w_G2 c_v + w_G3)
    i_v(t+1) = relu(W4   sum_{u in N(v)} x_u(t) + w5 c_v + b6)
    f(t+1)   = sigmoid(W7 sum_{u in V} x_u(t) + b8)        (shared over v)
    y_v(t+1) = f(t+1) * i_v(t+1) + (1 - f(t+1)) * y_v(t)
    q_v      = w_Q1 . relu(W_Q2 sum_u y_u(T)) + w_Q3 . relu(W_Q4 y_v(T))

relu'(0) is taken as 0 throughout.
"""

from dataclasses import dataclass
from types import SimpleNamespace

import numpy as np

from .errors import CheckpointError, ValidationError
from .graphs import Graph, GenSpec, dense_adjacency, generate
from .dynamics import Trajectory

# Flat-vector tensor order; matrices are row-major.
TENSOR_ORDER = (
    ("W_G1", "w_g1", 2),
    ("w_G2", "w_g2", 1),
    ("w_G3", "w_g3", 1),
    ("W4", "w4", 2),
    ("w5", "w5", 1),
    ("b6", "b6", 1),
    ("W7", "w7", 2),
    ("b8", "b8", 1),
    ("W_Q2", "w_q2", 2),
    ("w_Q1", "w_q1", 1),
    ("W_Q4", "w_q4", 2),
    ("w_Q3", "w_q3", 1),
)

CHECKPOINT_MAGIC = "G2S-CKPT"
CHECKPOINT_VERSION = 1


@dataclass
class ParamSet:
    """All trainable tensors; see TENSOR_ORDER for the flat-vector layout."""

    d: int
    w_g1: np.ndarray
    w_g2: np.ndarray
    w_g3: np.ndarray
    w4: np.ndarray
    w5: np.ndarray
    b6: np.ndarray
    w7: np.ndarray
    b8: np.ndarray
    w_q2: np.ndarray
    w_q1: np.ndarray
    w_q4: np.ndarray
    w_q3: np.ndarray

    def validate(self):
        if self.d < 1:
            raise ValidationError("d: must be >= 1")
        for name, attr, rank in TENSOR_ORDER:
            a = getattr(self, attr)
            want = (self.d, self.d) if rank == 2 else (self.d,)
            if a.shape != want:
                raise ValidationError(f"{name}: expected shape {want}, got {a.shape}")
            if not np.all(np.isfinite(a)):
                raise ValidationError(f"{name}: contains non-finite entries")

    def tensors(self):
        return [getattr(self, attr) for _, attr, _ in TENSOR_ORDER]

    def to_flat(self):
        return np.concatenate([t.ravel() for t in self.tensors()])

    @classmethod
    def from_flat(cls, d, flat):
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (flat_size(d),):
            raise ValidationError("flat: wrong length for dimension d")
        parts = {}
        pos = 0
        for _, attr, rank in TENSOR_ORDER:
            shape = (d, d) if rank == 2 else (d,)
            count = d * d if rank == 2 else d
            parts[attr] = flat[pos:pos + count].reshape(shape).copy()
            pos += count
        return cls(d=d, **parts)

    @classmethod
    def zeros(cls, d):
        return cls.from_flat(d, np.zeros(flat_size(d)))

    @classmethod
    def init_random(cls, d, seed):
        """Uniform on [-1/sqrt(d), +1/sqrt(d)], keeping pre-activations O(1)."""
        rng = np.random.default_rng(seed)
        bound = 1.0 / np.sqrt(d)
        return cls.from_flat(d, rng.uniform(-bound, bound, size=flat_size(d)))

    def copy(self):
        return ParamSet.from_flat(self.d, self.to_flat())


def flat_size(d):
    return 5 * d * d + 7 * d


@dataclass
class ReaderState:
    """Recurrent reader caches: cell states y (T+1, n, d), inputs i for steps
    1..T (T, n, d), and gates f for steps 1..T (T, d); the gate depends only
    on the global state sum, so it is shared across vertices."""

    y: np.ndarray
    inputs: np.ndarray
    gates: np.ndarray


@dataclass
class QValues:
    """Per-vertex action values plus the vertex-independent shared term."""

    values: np.ndarray  # (n,)
    shared: float


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class Stacked:
    """A batch of same-size instances glued into one block-diagonal graph.

    Single instances keep the sequential segment-sum path (its fixed
    accumulation order makes regular-graph state collapse exact to the bit);
    larger batches use cached dense adjacencies and one batched matmul.
    """

    def __init__(self, graphs, flags):
        self.n = graphs[0].n
        self.B = len(graphs)
        if any(g.n != self.n for g in graphs):
            raise ValidationError("graphs: all instances in a stack must share n")
        flags = np.asarray(flags, dtype=float)
        if flags.shape != (self.B, self.n):
            raise ValidationError("flags: expected shape (B, n)")
        self.flags_flat = flags.reshape(-1)
        if self.B == 1:
            g = graphs[0]
            self.nbr_flat = g.nbr_flat
            self._starts_nz = g.nbr_starts[:-1][g.degrees > 0]
            self._nz = g.degrees > 0
            self._adj = None
        else:
            self._adj = np.stack([dense_adjacency(g) for g in graphs])

    def nbr_sums(self, x):
        if self._adj is not None:
            out = np.matmul(self._adj, x.reshape(self.B, self.n, -1))
            return out.reshape(x.shape)
        out = np.zeros_like(x)
        if len(self.nbr_flat):
            out[self._nz] = np.add.reduceat(x[self.nbr_flat], self._starts_nz, axis=0)
        return out


def _forward_core(st: Stacked, p: ParamSet, T: int):
    B, n, d = st.B, st.n, p.d
    N = B * n
    c = st.flags_flat[:, None]
    X = np.zeros((T + 1, N, d))
    S = np.zeros((T, N, d))
    G = np.zeros((T, B, d))
    A = np.zeros((T, N, d))   # evolution pre-activations
    P = np.zeros((T, N, d))   # reader input pre-activations
    I = np.zeros((T + 1, N, d))
    F = np.zeros((T + 1, B, d))
    Y = np.zeros((T + 1, N, d))
    for t in range(T):
        s = st.nbr_sums(X[t])
        S[t] = s
        G[t] = X[t].reshape(B, n, d).sum(axis=1)
        A[t] = s @ p.w_g1.T + c * p.w_g2 + p.w_g3
        X[t + 1] = np.maximum(A[t], 0.0)
        P[t] = s @ p.w4.T + c * p.w5 + p.b6
        I[t + 1] = np.maximum(P[t], 0.0)
        f = _sigmoid(G[t] @ p.w7.T + p.b8)
        F[t + 1] = f
        frep = np.repeat(f, n, axis=0)
        Y[t + 1] = frep * I[t + 1] + (1.0 - frep) * Y[t]
    ysum = Y[T].reshape(B, n, d).sum(axis=1)
    h1pre = ysum @ p.w_q2.T
    h1 = np.maximum(h1pre, 0.0)
    q_shared = h1 @ p.w_q1
    h2pre = Y[T] @ p.w_q4.T
    h2 = np.maximum(h2pre, 0.0)
    q = q_shared[:, None] + (h2 @ p.w_q3).reshape(B, n)
    return SimpleNamespace(
        X=X, S=S, G=G, A=A, P=P, I=I, F=F, Y=Y,
        ysum=ysum, h1pre=h1pre, h1=h1, h2pre=h2pre, h2=h2, q=q,
    )


def _backward_core(st: Stacked, p: ParamSet, T: int, cache, actions, targets):
    """Reverse-mode pass for the per-sample losses (q[b, a_b] - target_b)^2.

    Returns (losses, grads) where grads hold sums over the batch.
    """
    B, n, d = st.B, st.n, p.d
    rows = np.arange(B)
    actions = np.asarray(actions, dtype=np.int64)
    targets = np.asarray(targets, dtype=float)
    c = st.flags_flat[:, None]

    qa = cache.q[rows, actions]
    diff = qa - targets
    losses = diff * diff
    dqa = 2.0 * diff  # (B,)

    g = ParamSet.zeros(d)
    # shared head term
    dh1 = (dqa[:, None] * p.w_q1) * (cache.h1pre > 0)
    g.w_q1 += cache.h1.T @ dqa
    g.w_q2 += dh1.T @ cache.ysum
    dysum = dh1 @ p.w_q2  # (B, d), reaches every vertex of its graph
    # per-vertex head term (action rows only)
    flat_action = rows * n + actions
    h2a = cache.h2[flat_action]
    h2prea = cache.h2pre[flat_action]
    ya = cache.Y[T][flat_action]
    dh2 = (dqa[:, None] * p.w_q3) * (h2prea > 0)
    g.w_q3 += h2a.T @ dqa
    g.w_q4 += dh2.T @ ya
    dY = np.repeat(dysum, n, axis=0)
    dY[flat_action] += dh2 @ p.w_q4

    dX_next = np.zeros((B * n, d))  # x(T) feeds nothing downstream
    for t in range(T - 1, -1, -1):
        f = cache.F[t + 1]
        frep = np.repeat(f, n, axis=0)
        dI = dY * frep
        dfB = (dY * (cache.I[t + 1] - cache.Y[t])).reshape(B, n, d).sum(axis=1)
        dY = dY * (1.0 - frep)  # now the gradient w.r.t. y(t)
        # gate: f = sigmoid(W7 g(t) + b8)
        dq7 = dfB * f * (1.0 - f)
        g.w7 += dq7.T @ cache.G[t]
        g.b8 += dq7.sum(axis=0)
        dG = dq7 @ p.w7
        # reader input: i(t+1) = relu(W4 s(t) + w5 c + b6)
        dpre = dI * (cache.P[t] > 0)
        g.w4 += dpre.T @ cache.S[t]
        g.w5 += (dpre * c).sum(axis=0)
        g.b6 += dpre.sum(axis=0)
        ds = dpre @ p.w4
        # evolution: x(t+1) = relu(W_G1 s(t) + w_G2 c + w_G3)
        da = dX_next * (cache.A[t] > 0)
        g.w_g1 += da.T @ cache.S[t]
        g.w_g2 += (da * c).sum(axis=0)
        g.w_g3 += da.sum(axis=0)
        ds += da @ p.w_g1
        # adjoint of the neighbor sum is the neighbor sum (undirected graph);
        # the global sum reaches every vertex of its own graph
        dX = st.nbr_sums(ds)
        dX += np.repeat(dG, n, axis=0)
        dX_next = dX
    return losses, g


def forward(g: Graph, flags, p: ParamSet, T: int):
    """Evaluate the network; returns (Trajectory, ReaderState, QValues)."""
    p.validate()
    if T < 1:
        raise ValidationError("T: must be >= 1")
    flags = np.asarray(flags, dtype=float)
    if flags.shape != (g.n,):
        raise ValidationError("flags: expected length-n vector")
    st = Stacked([g], flags[None, :])
    cache = _forward_core(st, p, T)
    for name, arr in (("x", cache.X), ("y", cache.Y), ("q", cache.q)):
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"{name}: non-finite values in forward pass")
    traj = Trajectory(cache.X)
    reader = ReaderState(y=cache.Y, inputs=cache.I[1:], gates=cache.F[1:, 0, :])
    qv = QValues(values=cache.q[0], shared=float(cache.h1[0] @ p.w_q1))
    return traj, reader, qv


def backward(g: Graph, flags, p: ParamSet, T: int, action: int, target: float):
    """Loss (q(action) - target)^2 and its exact gradient for one instance."""
    p.validate()
    if T < 1:
        raise ValidationError("T: must be >= 1")
    if not 0 <= action < g.n:
        raise ValidationError("action: vertex id out of range")
    flags = np.asarray(flags, dtype=float)
    st = Stacked([g], flags[None, :])
    cache = _forward_core(st, p, T)
    losses, grads = _backward_core(st, p, T, cache, [action], [target])
    if not np.all(np.isfinite(grads.to_flat())):
        raise ValidationError("grads: non-finite values in backward pass")
    return float(losses[0]), grads


def q_values_batch(graphs, flags, p: ParamSet, T: int):
    """Q-values for a stack of same-size instances; returns (B, n)."""
    st = Stacked(graphs, flags)
    return _forward_core(st, p, T).q


def loss_and_grads_batch(graphs, flags, actions, targets, p: ParamSet, T: int):
    """Mean single-sample loss over the batch and its gradient (flat)."""
    st = Stacked(graphs, flags)
    cache = _forward_core(st, p, T)
    losses, grads = _backward_core(st, p, T, cache, actions, targets)
    B = len(graphs)
    return float(losses.mean()), grads.to_flat() / B


# ---------------------------------------------------------------------------
# Checkpoint IO


def save_checkpoint(p: ParamSet, path):
    p.validate()
    lines = [f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}", f"d {p.d}"]
    for name, attr, rank in TENSOR_ORDER:
        a = getattr(p, attr)
        rows, cols = (p.d, p.d) if rank == 2 else (p.d, 1)
        lines.append(f"tensor {name} {rows} {cols}")
        mat = a.reshape(rows, cols)
        for r in range(rows):
            lines.append(" ".join("%.17g" % v for v in mat[r]))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> ParamSet:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CheckpointError("empty checkpoint file")
    head = lines[0].split()
    if len(head) != 2 or head[0] != CHECKPOINT_MAGIC:
        raise CheckpointError("bad header, expected 'G2S-CKPT <version>'")
    if head[1] != str(CHECKPOINT_VERSION):
        raise CheckpointError(f"unsupported checkpoint version {head[1]!r}")
    if len(lines) < 2 or not lines[1].startswith("d "):
        raise CheckpointError("missing dimension line")
    try:
        d = int(lines[1].split()[1])
    except (IndexError, ValueError):
        raise CheckpointError("malformed dimension line") from None
    if d < 1:
        raise CheckpointError("dimension must be >= 1")
    pos = 2
    parts = {}
    for name, attr, rank in TENSOR_ORDER:
        rows, cols = (d, d) if rank == 2 else (d, 1)
        if pos >= len(lines):
            raise CheckpointError(f"truncated file: missing tensor {name}")
        head = lines[pos].split()
        if head[:2] != ["tensor", name] or head[2:] != [str(rows), str(cols)]:
            raise CheckpointError(
                f"expected 'tensor {name} {rows} {cols}' at line {pos + 1}"
            )
        pos += 1
        if pos + rows > len(lines):
            raise CheckpointError(f"truncated file: tensor {name} incomplete")
        try:
            mat = np.array(
                [[float(v) for v in lines[pos + r].split()] for r in range(rows)]
            )
        except ValueError:
            raise CheckpointError(f"unparsable values in tensor {name}") from None
        if mat.shape != (rows, cols):
            raise CheckpointError(f"tensor {name}: wrong element count")
        parts[attr] = mat.reshape((d, d) if rank == 2 else (d,))
        pos += rows
    if any(line.strip() for line in lines[pos:]):
        raise CheckpointError("trailing content after last tensor")
    out = ParamSet(d=d, **parts)
    out.validate()
    return out


# ---------------------------------------------------------------------------
# Gradient audit


def gradient_check(cases, seed, h=1e-5):
    """Compare analytic gradients against central finite differences on random
    instances.  Returns the max composite error, where per-coordinate error is
    |analytic - fd| / max(|analytic|, |fd|, 1e-3) so the 1e-4 threshold also
    grants an absolute floor of 1e-7."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        n = int(rng.integers(2, 11))
        g = generate(GenSpec("er", n=n, p=float(rng.uniform(0.25, 0.6)),
                             seed=int(rng.integers(1 << 62))))
        d = int(rng.choice([1, 2, 4, 16]))
        T = int(rng.choice([1, 3, 5]))
        p = ParamSet.init_random(d, rng)
        flags = (rng.random(n) < 0.4).astype(float)
        action = int(rng.integers(n))
        target = float(rng.normal())
        _, grads = backward(g, flags, p, T, action, target)
        analytic = grads.to_flat()
        flat = p.to_flat()
        fd = np.zeros_like(flat)
        for j in range(len(flat)):
            for sgn, slot in ((+1, 0), (-1, 1)):
                trial = flat.copy()
                trial[j] += sgn * h
                pj = ParamSet.from_flat(d, trial)
                st = Stacked([g], flags[None, :])
                q = _forward_core(st, pj, T).q[0, action]
                if slot == 0:
                    hi = (q - target) ** 2
                else:
                    lo = (q - target) ** 2
            fd[j] = (hi - lo) / (2 * h)
        err = np.abs(analytic - fd) / np.maximum(
            np.maximum(np.abs(analytic), np.abs(fd)), 1e-3
        )
        worst = max(worst, float(err.max()))
    return worst
