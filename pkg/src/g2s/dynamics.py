"""Graph-induced vertex-state dynamics and local graph-convolution filters.

The evolution rule drives an n-vertex, d-dimensional discrete-time system
whose per-vertex trajectory is the sequence embedding consumed by the model;
the spatial/spectral filter pair and the exact parameter conversion between
them live here as well.
"""

from dataclasses import dataclass
import math

import numpy as np

from .errors import ValidationError
from .graphs import Graph, neighbor_sums


def _check_finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name}: contains non-finite entries")


@dataclass
class EvolutionParams:
    """Trainable tensors of the evolution rule plus the noise variance."""

    d: int
    w1: np.ndarray  # (d, d) neighbor-sum weight
    b1: np.ndarray  # (d,)   bias
    w2: np.ndarray  # (d,)   selection-flag weight
    sigma2: float = 0.0

    def validate(self):
        if self.d < 1:
            raise ValidationError("d: must be >= 1")
        if self.w1.shape != (self.d, self.d):
            raise ValidationError("w1: expected shape (d, d)")
        if self.b1.shape != (self.d,):
            raise ValidationError("b1: expected shape (d,)")
        if self.w2.shape != (self.d,):
            raise ValidationError("w2: expected shape (d,)")
        if self.sigma2 < 0:
            raise ValidationError("sigma2: must be >= 0")
        for name in ("w1", "b1", "w2"):
            _check_finite(name, getattr(self, name))


@dataclass
class Trajectory:
    """Vertex states x_v(t) for t = 0..T; states[0] is all-zeros."""

    states: np.ndarray  # (T+1, n, d)

    @property
    def T(self):
        return self.states.shape[0] - 1


def _noise(seed, vertex_count, step, d, sigma2):
    scale = math.sqrt(sigma2)
    rows = [
        np.random.default_rng(np.random.SeedSequence((seed, v, step))).normal(
            0.0, scale, size=d
        )
        for v in range(vertex_count)
    ]
    return np.vstack(rows)


def evolve(g: Graph, params: EvolutionParams, flags=None, T=1, seed=None) -> Trajectory:
    """Run the evolution rule for T steps from the all-zeros initial state.

    x_v(t+1) = relu(W1 * sum_{u in N(v)} x_u(t) + w2 * c_v + b1) + noise,
    with per-vertex Gaussian noise of variance sigma2 drawn from substreams
    keyed by (seed, vertex, step).  Deterministic when sigma2 == 0.
    """
    params.validate()
    if T < 0:
        raise ValidationError("T: must be >= 0")
    if flags is None:
        flags = np.zeros(g.n)
    flags = np.asarray(flags, dtype=float)
    if flags.shape != (g.n,):
        raise ValidationError("flags: expected length-n vector")
    if params.sigma2 > 0 and seed is None:
        raise ValidationError("seed: required when sigma2 > 0")
    states = np.zeros((T + 1, g.n, params.d))
    for t in range(T):
        s = neighbor_sums(g, states[t])
        pre = s @ params.w1.T + flags[:, None] * params.w2 + params.b1
        nxt = np.maximum(pre, 0.0)
        if params.sigma2 > 0:
            nxt = nxt + _noise(seed, g.n, t + 1, params.d, params.sigma2)
        states[t + 1] = nxt
    return Trajectory(states)


# ---------------------------------------------------------------------------
# Local graph-convolution filters

BASES = ("adjacency", "laplacian")
NORMALIZATIONS = ("normalized", "unnormalized")
ACTIVATIONS = ("relu", "identity")


@dataclass
class GcnnFilterParams:
    """K-local filter: weights[k] applies to the k-th basis-matrix power."""

    weights: tuple  # K arrays of shape (d_out, d_in)
    bias: np.ndarray  # (d_out,)
    basis: str = "adjacency"
    normalization: str = "normalized"
    activation: str = "relu"

    @property
    def k(self):
        return len(self.weights)

    def validate(self):
        if self.k < 1:
            raise ValidationError("weights: K must be >= 1")
        shape = self.weights[0].shape
        for w in self.weights:
            if w.shape != shape:
                raise ValidationError("weights: all K matrices must share a shape")
            _check_finite("weights", w)
        if self.bias.shape != (shape[0],):
            raise ValidationError("bias: expected shape (d_out,)")
        if self.basis not in BASES:
            raise ValidationError(f"basis: must be one of {BASES}")
        if self.normalization not in NORMALIZATIONS:
            raise ValidationError(f"normalization: must be one of {NORMALIZATIONS}")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"activation: must be one of {ACTIVATIONS}")


def _basis_apply(g, z, normalization, laplacian):
    # One multiplication by the basis matrix, computed sparsely.  Normalized
    # adjacency is D^{-1/2} A D^{-1/2} with 0 rows/columns at isolated
    # vertices; the laplacian basis is I minus the adjacency basis.
    if normalization == "normalized":
        with np.errstate(divide="ignore"):
            dinv = np.where(g.degrees > 0, 1.0 / np.sqrt(g.degrees), 0.0)
        az = dinv[:, None] * neighbor_sums(g, dinv[:, None] * z)
    else:
        az = neighbor_sums(g, z)
    return z - az if laplacian else az


def _filter_apply(g, x, p):
    p.validate()
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != g.n:
        raise ValidationError("x: expected shape (n, d_in)")
    if x.shape[1] != p.weights[0].shape[1]:
        raise ValidationError("x: d_in does not match filter weights")
    z = x
    acc = z @ p.weights[0].T
    for k in range(1, p.k):
        z = _basis_apply(g, z, p.normalization, p.basis == "laplacian")
        acc += z @ p.weights[k].T
    acc += p.bias
    return np.maximum(acc, 0.0) if p.activation == "relu" else acc


def spatial_filter(g: Graph, x, p: GcnnFilterParams):
    """sigma(sum_k W_k X A^k + b), A the (optionally normalized) adjacency."""
    if p.basis != "adjacency":
        raise ValidationError("basis: spatial_filter needs basis='adjacency'")
    return _filter_apply(g, x, p)


def spectral_filter(g: Graph, x, p: GcnnFilterParams):
    """Same polynomial form over powers of L = I - A."""
    if p.basis != "laplacian":
        raise ValidationError("basis: spectral_filter needs basis='laplacian'")
    return _filter_apply(g, x, p)


def spatial_to_spectral(p: GcnnFilterParams) -> GcnnFilterParams:
    """Exact weight conversion so the laplacian-basis filter computes the same
    function on every graph and input: W'_{K-1} = W_{K-1} and, descending,
    W'_k = W_k - sum_{i>k} W'_i C(i,k) (-1)^{i-k}."""
    if p.basis != "adjacency":
        raise ValidationError("basis: expected an adjacency-basis filter")
    p.validate()
    K = p.k
    out = [None] * K
    out[K - 1] = p.weights[K - 1].copy()
    for k in range(K - 2, -1, -1):
        acc = p.weights[k].copy()
        for i in range(k + 1, K):
            acc -= math.comb(i, k) * (-1) ** (i - k) * out[i]
        out[k] = acc
    return GcnnFilterParams(
        tuple(out), p.bias.copy(), "laplacian", p.normalization, p.activation
    )


def spectral_to_spatial(p: GcnnFilterParams) -> GcnnFilterParams:
    """Inverse conversion via the binomial expansion of (I - A)^k."""
    if p.basis != "laplacian":
        raise ValidationError("basis: expected a laplacian-basis filter")
    p.validate()
    K = p.k
    out = []
    for k in range(K):
        acc = np.zeros_like(p.weights[0])
        for i in range(k, K):
            acc += math.comb(i, k) * (-1) ** (i - k) * p.weights[i]
        out.append(acc)
    return GcnnFilterParams(
        tuple(out), p.bias.copy(), "adjacency", p.normalization, p.activation
    )


def equivalence_check(cases, n_max, k_max, seed, d_max=8):
    """Random-case audit of the spatial/spectral conversion.

    Returns (max output difference, max round-trip parameter difference) over
    `cases` random graphs, inputs, and filter parameters.
    """
    from .graphs import GenSpec, generate

    rng = np.random.default_rng(seed)
    max_out = 0.0
    max_round = 0.0
    for _ in range(cases):
        n = int(rng.integers(2, n_max + 1))
        g = generate(GenSpec("er", n=n, p=float(rng.uniform(0.2, 0.8)),
                             seed=int(rng.integers(1 << 62))))
        k = int(rng.integers(1, k_max + 1))
        d_in = int(rng.integers(1, d_max + 1))
        d_out = int(rng.integers(1, d_max + 1))
        norm = "normalized" if rng.random() < 0.5 else "unnormalized"
        act = "relu" if rng.random() < 0.5 else "identity"
        weights = tuple(rng.standard_normal((d_out, d_in)) for _ in range(k))
        p = GcnnFilterParams(weights, rng.standard_normal(d_out), "adjacency",
                             norm, act)
        x = rng.standard_normal((n, d_in))
        q = spatial_to_spectral(p)
        diff = np.abs(spatial_filter(g, x, p) - spectral_filter(g, x, q)).max()
        max_out = max(max_out, float(diff))
        back = spectral_to_spatial(q)
        rt = max(
            float(np.abs(back.weights[i] - p.weights[i]).max()) for i in range(k)
        )
        max_round = max(max_round, rt, float(np.abs(back.bias - p.bias).max()))
    return max_out, max_round
