"""Dense network engine: MLPs with exact analytic gradients, Adam, policy heads.

Everything is float64 and value-semantic: ``forward``/``backward`` never mutate
a network, and optimizer steps return fresh parameter arrays. That keeps
seeded runs bitwise reproducible and lets tests pin tight tolerances against
finite-difference oracles.

Parameter order convention (used by gradients, Adam and checkpoints alike):
``[W0, b0, W1, b1, ...]`` with weight matrices shaped ``(fan_out, fan_in)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError, NonFiniteError, ShapeError

ACTIVATIONS = ("tanh", "relu", "identity")

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0

_HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


# ---------------------------------------------------------------------------
# MLP
# ---------------------------------------------------------------------------

@dataclass
class Mlp:
    """A plain fully-connected network.

    The hidden activation applies to every layer except the last, which is
    always linear. ``layer_sizes`` runs input dim first, output dim last.
    """

    layer_sizes: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]


def mlp_init(
    layer_sizes,
    activation: str = "tanh",
    rng: np.random.Generator | None = None,
    output_scale: float = 1.0,
) -> Mlp:
    """Build an MLP with scaled-normal weights and zero biases.

    ``output_scale`` shrinks the final layer's weights; policy and value heads
    use a small scale so fresh networks emit near-zero outputs.
    """
    sizes = tuple(int(s) for s in layer_sizes)
    if len(sizes) < 2 or any(s <= 0 for s in sizes):
        raise ShapeError(f"layer_sizes must be >= 2 positive ints, got {sizes}")
    if activation not in ACTIVATIONS:
        raise ValueError(f"unknown activation {activation!r}")
    if rng is None:
        rng = np.random.default_rng()
    weights, biases = [], []
    n_layers = len(sizes) - 1
    for i in range(n_layers):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        std = np.sqrt(1.0 / fan_in)
        if i == n_layers - 1:
            std *= output_scale
        weights.append(rng.normal(0.0, std, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Mlp(sizes, weights, biases, activation)


def mlp_params(net: Mlp) -> list[np.ndarray]:
    """Parameters in declaration order: [W0, b0, W1, b1, ...]."""
    out: list[np.ndarray] = []
    for w, b in zip(net.weights, net.biases):
        out.append(w)
        out.append(b)
    return out


def mlp_with_params(net: Mlp, params: list[np.ndarray]) -> Mlp:
    """Rebuild a network from a flat parameter list (shapes must match)."""
    if len(params) != 2 * len(net.weights):
        raise ShapeError("parameter list length does not match network")
    weights, biases = [], []
    for i, w in enumerate(net.weights):
        new_w, new_b = params[2 * i], params[2 * i + 1]
        if new_w.shape != w.shape or new_b.shape != net.biases[i].shape:
            raise ShapeError(f"parameter {i} shape mismatch")
        weights.append(new_w)
        biases.append(new_b)
    return Mlp(net.layer_sizes, weights, biases, net.activation)


def mlp_clone(net: Mlp) -> Mlp:
    return Mlp(
        net.layer_sizes,
        [w.copy() for w in net.weights],
        [b.copy() for b in net.biases],
        net.activation,
    )


def num_params(net: Mlp) -> int:
    return sum(p.size for p in mlp_params(net))


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def _act_grad(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if name == "relu":
        return (z > 0.0).astype(np.float64)
    return np.ones_like(z)


def forward(net: Mlp, x) -> np.ndarray:
    """Evaluate the network on a single vector or a batch of row vectors."""
    y, _ = forward_trace(net, x)
    return y


def forward_trace(net: Mlp, x):
    """Like ``forward`` but also returns the (inputs, pre-activations) trace
    needed for a cheap backward pass."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.ndim != 2 or h.shape[1] != net.in_dim:
        raise ShapeError(
            f"input has shape {x.shape}, expected last dim {net.in_dim}"
        )
    layer_inputs = [h]
    pre_acts = []
    n = len(net.weights)
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w.T + b
        pre_acts.append(z)
        h = _act(net.activation, z) if i < n - 1 else z
        layer_inputs.append(h)
    y = h[0] if single else h
    return y, (single, layer_inputs, pre_acts)


def backward_from_trace(net: Mlp, trace, output_grad):
    """Backpropagate ``output_grad`` through a stored forward trace.

    Returns ``(param_grads, input_grad)`` where ``param_grads`` follows the
    [W0, b0, ...] order and batch rows are summed into the parameter grads.
    """
    single, layer_inputs, pre_acts = trace
    g = np.asarray(output_grad, dtype=np.float64)
    if single:
        g = g[None, :]
    if g.shape != (layer_inputs[0].shape[0], net.out_dim):
        raise ShapeError(
            f"output_grad has shape {output_grad.shape}, expected "
            f"({layer_inputs[0].shape[0]}, {net.out_dim})"
        )
    n = len(net.weights)
    w_grads: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    b_grads: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    delta = g
    for i in range(n - 1, -1, -1):
        w_grads[i] = delta.T @ layer_inputs[i]
        b_grads[i] = delta.sum(axis=0)
        delta = delta @ net.weights[i]
        if i > 0:
            delta = delta * _act_grad(net.activation, pre_acts[i - 1])
    param_grads: list[np.ndarray] = []
    for wg, bg in zip(w_grads, b_grads):
        param_grads.append(wg)
        param_grads.append(bg)
    input_grad = delta[0] if single else delta
    return param_grads, input_grad


def backward(net: Mlp, x, output_grad):
    """Gradients of ``sum(output * output_grad)`` w.r.t. parameters and input."""
    _, trace = forward_trace(net, x)
    return backward_from_trace(net, trace, output_grad)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """Bias-corrected Adam accumulators mirroring a parameter list."""

    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_stab: float = 1e-8


def adam_init(
    params: list[np.ndarray],
    learning_rate: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    epsilon_stab: float = 1e-8,
) -> AdamState:
    return AdamState(
        first_moment=[np.zeros_like(p) for p in params],
        second_moment=[np.zeros_like(p) for p in params],
        step_count=0,
        learning_rate=learning_rate,
        beta1=beta1,
        beta2=beta2,
        epsilon_stab=epsilon_stab,
    )


def adam_update(params: list[np.ndarray], grads: list[np.ndarray], state: AdamState):
    """One Adam step over a parameter list; returns (new_params, new_state)."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ShapeError("params/grads/state lengths differ")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"grad shape {g.shape} != param shape {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError("non-finite gradient in adam_update")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m2 = b1 * m + (1.0 - b1) * g
        v2 = b2 * v + (1.0 - b2) * g * g
        step = state.learning_rate * (m2 / corr1) / (np.sqrt(v2 / corr2) + state.epsilon_stab)
        p2 = p - step
        if not np.all(np.isfinite(p2)):
            raise NonFiniteError("parameters became non-finite after Adam step")
        new_params.append(p2)
        new_m.append(m2)
        new_v.append(v2)
    new_state = AdamState(
        new_m, new_v, t, state.learning_rate, b1, b2, state.epsilon_stab
    )
    return new_params, new_state


def adam_step(net: Mlp, grads: list[np.ndarray], state: AdamState):
    """Adam step specialized to an Mlp; returns (new_net, new_state)."""
    new_params, new_state = adam_update(mlp_params(net), grads, state)
    return mlp_with_params(net, new_params), new_state


# ---------------------------------------------------------------------------
# Policy heads
# ---------------------------------------------------------------------------

@dataclass
class GaussianPolicyHead:
    """Diagonal-Gaussian policy: state-dependent mean, state-independent log-std."""

    mean_net: Mlp
    log_std: np.ndarray

    @property
    def action_dim(self) -> int:
        return self.mean_net.out_dim


@dataclass
class CategoricalPolicyHead:
    """Softmax policy over a discrete action set."""

    logit_net: Mlp

    @property
    def n_actions(self) -> int:
        return self.logit_net.out_dim


def clamp_log_std(log_std: np.ndarray) -> np.ndarray:
    return np.clip(log_std, LOG_STD_MIN, LOG_STD_MAX)


def gaussian_log_probs(mean: np.ndarray, log_std: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """Diagonal-normal log densities for rows of (mean, action) pairs."""
    mean = np.atleast_2d(mean)
    actions = np.atleast_2d(actions)
    z = (actions - mean) * np.exp(-log_std)
    return (-_HALF_LOG_2PI - log_std - 0.5 * z * z).sum(axis=1)


def gaussian_entropy(log_std: np.ndarray) -> float:
    """Entropy of the diagonal Gaussian; depends only on log_std."""
    return float(np.sum(0.5 * (1.0 + np.log(2.0 * np.pi)) + log_std))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    logits = np.atleast_2d(logits)
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def categorical_entropies(logits: np.ndarray) -> np.ndarray:
    logp = log_softmax(logits)
    return -(np.exp(logp) * logp).sum(axis=1)


def log_prob_and_entropy(head, state, action) -> tuple[float, float]:
    """Log-probability of ``action`` at ``state`` and the policy entropy there."""
    if isinstance(head, GaussianPolicyHead):
        action = np.asarray(action, dtype=np.float64)
        if action.shape != (head.action_dim,):
            raise ShapeError(
                f"action shape {action.shape} != ({head.action_dim},)"
            )
        mean = forward(head.mean_net, state)
        lp = gaussian_log_probs(mean, head.log_std, action)[0]
        return float(lp), gaussian_entropy(head.log_std)
    if isinstance(head, CategoricalPolicyHead):
        logits = forward(head.logit_net, state)
        a = int(action)
        if not 0 <= a < head.n_actions:
            raise ShapeError(f"action {a} out of range [0, {head.n_actions})")
        logp = log_softmax(logits)[0]
        ent = float(-(np.exp(logp) * logp).sum())
        return float(logp[a]), ent
    raise TypeError(f"unsupported policy head {type(head).__name__}")


# ---------------------------------------------------------------------------
# Checkpoint I/O
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"HCAC"
CHECKPOINT_VERSION = 1


def save_mlp(path, net: Mlp, trailing: np.ndarray | None = None) -> None:
    """Write a network to the versioned binary checkpoint format.

    Layout: magic ``HCAC``, u32 version, u32 layer count, u32 layer sizes,
    then all parameters flattened row-major in declaration order as 64-bit
    little-endian floats. ``trailing`` appends one extra flat vector after the
    network parameters (used for the Gaussian head's log-std).
    """
    for p in mlp_params(net):
        if not np.all(np.isfinite(p)):
            raise NonFiniteError("refusing to checkpoint non-finite parameters")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(net.layer_sizes)))
        fh.write(struct.pack(f"<{len(net.layer_sizes)}I", *net.layer_sizes))
        for p in mlp_params(net):
            fh.write(np.ascontiguousarray(p, dtype="<f8").tobytes())
        if trailing is not None:
            fh.write(np.ascontiguousarray(trailing, dtype="<f8").tobytes())


def load_mlp(path, activation: str = "tanh", trailing_len: int = 0):
    """Load a checkpoint written by :func:`save_mlp`.

    Returns ``(net, trailing)``; ``trailing`` is ``None`` when
    ``trailing_len`` is 0. Validates magic, version, the layer-size chain and
    the exact payload length.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"bad magic bytes in {path}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    (n_sizes,) = struct.unpack_from("<I", blob, 8)
    if n_sizes < 2:
        raise CheckpointError("layer size chain shorter than 2")
    sizes = struct.unpack_from(f"<{n_sizes}I", blob, 12)
    if any(s <= 0 for s in sizes):
        raise CheckpointError(f"non-positive layer size in {sizes}")
    offset = 12 + 4 * n_sizes
    n_param_floats = sum(
        sizes[i] * sizes[i + 1] + sizes[i + 1] for i in range(n_sizes - 1)
    )
    expected = offset + 8 * (n_param_floats + trailing_len)
    if len(blob) != expected:
        raise CheckpointError(
            f"{path}: payload is {len(blob)} bytes, expected {expected}"
        )
    flat = np.frombuffer(blob, dtype="<f8", offset=offset).astype(np.float64)
    weights, biases = [], []
    pos = 0
    for i in range(n_sizes - 1):
        fan_in, fan_out = sizes[i], sizes[i + 1]
        weights.append(flat[pos : pos + fan_in * fan_out].reshape(fan_out, fan_in))
        pos += fan_in * fan_out
        biases.append(flat[pos : pos + fan_out].copy())
        pos += fan_out
    trailing = flat[pos : pos + trailing_len].copy() if trailing_len else None
    return Mlp(tuple(sizes), weights, biases, activation), trailing
