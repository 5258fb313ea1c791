"""Minimal feed-forward network engine over a flat float64 parameter vector.

Everything here is plain numpy: an MLP with optional per-layer
normalization, exact reverse-mode gradients computed from a forward trace,
and an Adam optimizer that can restrict its update to a binary index mask.
Parameters live in one flat vector so that binary masks over the whole
network are well defined.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ACTIVATIONS = ("relu", "tanh", "identity")

# Below this pre-activation variance the normalized vector is defined as
# zero instead of dividing by a near-zero standard deviation.
LN_VAR_FLOOR = 1e-8


@dataclass(frozen=True)
class LayerSpec:
    """One fully connected layer: affine map, optional normalization, activation."""

    input_dim: int
    output_dim: int
    activation: str = "relu"
    layer_norm: bool = False

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("layer dimensions must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class ParamSlot:
    """Location of one parameter block inside the flat vector."""

    layer: int
    kind: str  # weight | bias | ln_gain | ln_bias
    offset: int
    length: int


@dataclass
class MlpParams:
    """Flat parameter vector plus the layout that maps it onto layers."""

    theta: np.ndarray
    layout: tuple[ParamSlot, ...]
    specs: tuple[LayerSpec, ...]

    @property
    def n(self) -> int:
        return self.theta.shape[0]

    def slot(self, layer: int, kind: str) -> ParamSlot:
        for s in self.layout:
            if s.layer == layer and s.kind == kind:
                return s
        raise KeyError(f"no parameter block ({layer}, {kind})")

    def view(self, layer: int, kind: str, theta: np.ndarray | None = None) -> np.ndarray:
        """View of one block; weights are reshaped to (output_dim, input_dim)."""
        s = self.slot(layer, kind)
        vec = self.theta if theta is None else theta
        block = vec[s.offset:s.offset + s.length]
        if kind == "weight":
            spec = self.specs[layer]
            return block.reshape(spec.output_dim, spec.input_dim)
        return block

    def copy(self) -> "MlpParams":
        return MlpParams(self.theta.copy(), self.layout, self.specs)


@dataclass
class LayerTrace:
    x: np.ndarray                 # layer input, (B, in)
    y: np.ndarray                 # activation input (post-norm), (B, out)
    h: np.ndarray                 # layer output, (B, out)
    zhat: np.ndarray | None = None  # normalized pre-activation, (B, out)
    sigma: np.ndarray | None = None  # per-sample std, (B, 1)
    live: np.ndarray | None = None   # per-sample bool, variance above floor


@dataclass
class ForwardTrace:
    """Everything backward() needs; valid only for the parameters that built it."""

    layers: list[LayerTrace]
    n: int
    single: bool


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    lr: float = 3e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: MlpParams, lr: float = 3e-4, **kw) -> "AdamState":
        n = params.n
        return cls(m=np.zeros(n), v=np.zeros(n), lr=lr, **kw)

    def copy(self) -> "AdamState":
        return AdamState(self.m.copy(), self.v.copy(), self.t,
                         self.lr, self.beta1, self.beta2, self.eps)


def build_layout(specs: list[LayerSpec] | tuple[LayerSpec, ...]) -> tuple[ParamSlot, ...]:
    if not specs:
        raise ValueError("need at least one layer")
    for a, b in zip(specs, specs[1:]):
        if a.output_dim != b.input_dim:
            raise ValueError(
                f"layer dims do not chain: {a.output_dim} -> {b.input_dim}")
    slots = []
    off = 0
    for i, spec in enumerate(specs):
        for kind, length in (("weight", spec.input_dim * spec.output_dim),
                             ("bias", spec.output_dim)):
            slots.append(ParamSlot(i, kind, off, length))
            off += length
        if spec.layer_norm:
            for kind in ("ln_gain", "ln_bias"):
                slots.append(ParamSlot(i, kind, off, spec.output_dim))
                off += spec.output_dim
    return tuple(slots)


def init_params(specs: list[LayerSpec] | tuple[LayerSpec, ...], seed: int) -> MlpParams:
    """Uniform +-1/sqrt(fan_in) weights, zero biases, unit normalization gains."""
    specs = tuple(specs)
    layout = build_layout(specs)
    n = sum(s.length for s in layout)
    theta = np.zeros(n)
    rng = np.random.default_rng(seed)
    for s in layout:
        if s.kind == "weight":
            bound = 1.0 / np.sqrt(specs[s.layer].input_dim)
            theta[s.offset:s.offset + s.length] = rng.uniform(
                -bound, bound, s.length)
        elif s.kind == "ln_gain":
            theta[s.offset:s.offset + s.length] = 1.0
        # bias and ln_bias stay zero
    return MlpParams(theta, layout, specs)


def forward(params: MlpParams, x: np.ndarray) -> tuple[np.ndarray, ForwardTrace]:
    """Run the network; accepts a single vector or a (batch, dim) array."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != params.specs[0].input_dim:
        raise ValueError(
            f"input dim {x.shape[1]} != {params.specs[0].input_dim}")

    layers: list[LayerTrace] = []
    h = x
    for i, spec in enumerate(params.specs):
        W = params.view(i, "weight")
        b = params.view(i, "bias")
        z = h @ W.T + b
        if spec.layer_norm:
            mu = z.mean(axis=1, keepdims=True)
            var = z.var(axis=1, keepdims=True)
            live = var >= LN_VAR_FLOOR
            sigma = np.sqrt(np.where(live, var, 1.0))
            zhat = np.where(live, (z - mu) / sigma, 0.0)
            y = params.view(i, "ln_gain") * zhat + params.view(i, "ln_bias")
            tr = LayerTrace(x=h, y=y, h=y, zhat=zhat, sigma=sigma, live=live)
        else:
            y = z
            tr = LayerTrace(x=h, y=y, h=y)
        if spec.activation == "relu":
            out = np.maximum(y, 0.0)
        elif spec.activation == "tanh":
            out = np.tanh(y)
        else:
            out = y
        tr.h = out
        layers.append(tr)
        h = out

    trace = ForwardTrace(layers=layers, n=params.n, single=single)
    return (h[0] if single else h), trace


def backward(
    params: MlpParams,
    trace: ForwardTrace,
    output_grad: np.ndarray,
    return_input_grad: bool = False,
):
    """Gradient of output_grad . output w.r.t. the flat parameter vector.

    For batched traces the per-sample contributions are summed, so callers
    average by scaling output_grad. With return_input_grad=True also returns
    the gradient w.r.t. the network input (needed to differentiate a critic
    with respect to the action).
    """
    if trace.n != params.n or len(trace.layers) != len(params.specs):
        raise ValueError("trace does not match params")
    g = np.asarray(output_grad, dtype=np.float64)
    if trace.single:
        g = g[None, :]
    if g.shape != trace.layers[-1].h.shape:
        raise ValueError("output_grad shape does not match traced output")

    grad = np.zeros(params.n)
    for i in range(len(params.specs) - 1, -1, -1):
        spec = params.specs[i]
        tr = trace.layers[i]
        if spec.activation == "relu":
            g = g * (tr.y > 0.0)
        elif spec.activation == "tanh":
            g = g * (1.0 - tr.h ** 2)
        if spec.layer_norm:
            gain = params.view(i, "ln_gain")
            sg = params.slot(i, "ln_gain")
            sb = params.slot(i, "ln_bias")
            grad[sg.offset:sg.offset + sg.length] = (g * tr.zhat).sum(axis=0)
            grad[sb.offset:sb.offset + sb.length] = g.sum(axis=0)
            dzh = g * gain
            # d/dz of (z - mean)/sigma, zero where variance hit the floor
            dz = (dzh - dzh.mean(axis=1, keepdims=True)
                  - tr.zhat * (dzh * tr.zhat).mean(axis=1, keepdims=True))
            dz = np.where(tr.live, dz / tr.sigma, 0.0)
        else:
            dz = g
        W = params.view(i, "weight")
        sw = params.slot(i, "weight")
        sbias = params.slot(i, "bias")
        grad[sw.offset:sw.offset + sw.length] = (dz.T @ tr.x).ravel()
        grad[sbias.offset:sbias.offset + sbias.length] = dz.sum(axis=0)
        g = dz @ W

    if return_input_grad:
        return grad, (g[0] if trace.single else g)
    return grad


def adam_step(
    params: MlpParams,
    grad: np.ndarray,
    state: AdamState,
    update_mask: np.ndarray | None = None,
) -> tuple[MlpParams, AdamState]:
    """One Adam step, in place. Where update_mask is 0 the parameter and both
    moment entries are left bitwise untouched."""
    if grad.shape != params.theta.shape:
        raise ValueError("grad length does not match params")
    if update_mask is not None and update_mask.shape != params.theta.shape:
        raise ValueError("update_mask length does not match params")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    if update_mask is None:
        state.m = b1 * state.m + (1.0 - b1) * grad
        state.v = b2 * state.v + (1.0 - b2) * grad ** 2
        params.theta -= state.lr * (state.m / c1) / (np.sqrt(state.v / c2) + state.eps)
    else:
        idx = np.flatnonzero(update_mask)
        gi = grad[idx]
        mi = b1 * state.m[idx] + (1.0 - b1) * gi
        vi = b2 * state.v[idx] + (1.0 - b2) * gi ** 2
        state.m[idx] = mi
        state.v[idx] = vi
        params.theta[idx] -= state.lr * (mi / c1) / (np.sqrt(vi / c2) + state.eps)
    return params, state
