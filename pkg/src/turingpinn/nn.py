"""Dense tanh network, hand-written backprop and Adam over a single flat parameter buffer.

Parameters live in one contiguous float64 vector.  Per layer the layout is the
weight matrix (shape ``(fan_in, fan_out)``, row-major) followed by the bias, so
``weights[i]`` and ``biases[i]`` are views into ``params``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import PDE_NAMES, RDParams

log = logging.getLogger(__name__)

DEFAULT_LAYERS = (2, 64, 64, 64, 64, 2)
BETA_FLOOR = 1e-6


def _layout(layer_sizes):
    spans = []
    offset = 0
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        w = (offset, offset + fan_in * fan_out)
        offset = w[1]
        b = (offset, offset + fan_out)
        offset = b[1]
        spans.append((w, b, fan_in, fan_out))
    return spans, offset


class Mlp:
    """Fully-connected network: tanh on hidden layers, identity on the output.

    Inputs are mapped affinely from ``[lo, hi]`` (per axis) onto ``[-1, 1]``
    before the first layer; ``forward_scaled`` skips that mapping.  The last
    layer's output is mapped back as ``output_center + output_scale * z``.
    """

    def __init__(self, layer_sizes=DEFAULT_LAYERS, params: np.ndarray | None = None,
                 input_lo=(-100.0, -100.0), input_hi=(100.0, 100.0),
                 output_center=None, output_scale=None):
        self.layer_sizes = tuple(int(n) for n in layer_sizes)
        if len(self.layer_sizes) < 2:
            raise ValueError("need at least an input and an output layer")
        spans, total = _layout(self.layer_sizes)
        if params is None:
            params = np.zeros(total)
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (total,):
            raise ValueError(f"expected {total} parameters for {self.layer_sizes}, got {params.shape}")
        self.params = params
        self.weights = [params[w0:w1].reshape(fi, fo) for (w0, w1), _, fi, fo in spans]
        self.biases = [params[b0:b1] for _, (b0, b1), _, _ in spans]
        self._spans = spans
        lo = np.asarray(input_lo, dtype=np.float64)
        hi = np.asarray(input_hi, dtype=np.float64)
        self.input_center = 0.5 * (hi + lo)
        self.input_halfwidth = 0.5 * (hi - lo)
        n_out = self.layer_sizes[-1]
        self.output_center = np.zeros(n_out) if output_center is None else np.asarray(output_center, dtype=np.float64)
        self.output_scale = np.ones(n_out) if output_scale is None else np.asarray(output_scale, dtype=np.float64)

    @property
    def n_params(self) -> int:
        return self.params.size

    def scale_inputs(self, xy: np.ndarray) -> np.ndarray:
        return (xy - self.input_center) / self.input_halfwidth

    def forward_scaled(self, xs: np.ndarray, record: bool = False):
        """Forward pass on already-scaled inputs of shape ``(n, fan_in)``.

        With ``record=True`` also returns the list of layer inputs needed by
        :meth:`backward`.
        """
        a = np.asarray(xs, dtype=np.float64)
        acts = [a]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = a @ w
            z += b
            if i == last:
                z *= self.output_scale
                z += self.output_center
                a = z
            else:
                a = np.tanh(z, out=z)
            if record and i != last:
                acts.append(a)
        return (a, acts) if record else a

    def forward_points(self, xy: np.ndarray, record: bool = False):
        return self.forward_scaled(self.scale_inputs(np.asarray(xy, dtype=np.float64)), record)

    def backward(self, acts: list[np.ndarray], d_out: np.ndarray, out: np.ndarray | None = None) -> np.ndarray:
        """Gradient of ``sum(d_out * output)`` with respect to the flat parameter vector."""
        grad = np.zeros(self.n_params) if out is None else out
        delta = d_out * self.output_scale
        for i in range(len(self.weights) - 1, -1, -1):
            (w0, w1), (b0, b1), fi, fo = self._spans[i]
            a_prev = acts[i]
            np.matmul(a_prev.T, delta, out=grad[w0:w1].reshape(fi, fo))
            np.sum(delta, axis=0, out=grad[b0:b1])
            if i:
                delta = delta @ self.weights[i].T
                delta *= 1.0 - a_prev * a_prev
        return grad

    def copy(self) -> "Mlp":
        return self.sharing(self.params.copy())

    def sharing(self, params: np.ndarray) -> "Mlp":
        """Same architecture and scalings over another parameter buffer (no copy)."""
        net = Mlp(self.layer_sizes, params)
        net.input_center = self.input_center.copy()
        net.input_halfwidth = self.input_halfwidth.copy()
        net.output_center = self.output_center.copy()
        net.output_scale = self.output_scale.copy()
        return net


def mlp_init(rng_seed: int, layer_sizes=DEFAULT_LAYERS, input_lo=(-100.0, -100.0),
             input_hi=(100.0, 100.0), output_center=None, output_scale=None) -> Mlp:
    """Glorot-uniform weights and zero biases, deterministic in ``rng_seed``."""
    net = Mlp(layer_sizes, input_lo=input_lo, input_hi=input_hi,
              output_center=output_center, output_scale=output_scale)
    rng = np.random.default_rng(rng_seed)
    for w in net.weights:
        fan_in, fan_out = w.shape
        w[...] = rng.uniform(-glorot_bound(fan_in, fan_out), glorot_bound(fan_in, fan_out), size=w.shape)
    return net


def glorot_bound(fan_in: int, fan_out: int) -> float:
    return math.sqrt(6.0 / (fan_in + fan_out))


def forward(net: Mlp, x, y):
    """Network output at physical coordinates; scalars give a ``(u, v)`` tuple, arrays give columns."""
    xy = np.column_stack([np.ravel(x), np.ravel(y)]).astype(np.float64)
    out = net.forward_points(xy)
    if np.ndim(x) == 0 and np.ndim(y) == 0:
        return float(out[0, 0]), float(out[0, 1])
    return out[:, 0], out[:, 1]


@dataclass
class TrainableSet:
    """Network plus the five inferable model parameters, sharing one flat buffer.

    ``theta[:net.n_params]`` is the network and ``theta[net.n_params:]`` holds
    ``(d1, d2, alpha, beta, r1)``.  ``gamma`` is never stored, it is ``-alpha``.
    """

    net: Mlp
    theta: np.ndarray
    mask: tuple[bool, ...]
    r2: float
    beta_nudges: int = 0

    @classmethod
    def create(cls, net: Mlp, params: RDParams, mask) -> "TrainableSet":
        mask = tuple(bool(m) for m in mask)
        if len(mask) != len(PDE_NAMES):
            raise ValueError(f"mask needs {len(PDE_NAMES)} flags ({', '.join(PDE_NAMES)})")
        theta = np.concatenate([net.params, params.trainable_vector()])
        return cls(net.sharing(theta[:net.n_params]), theta, mask, params.r2)

    @property
    def n_net(self) -> int:
        return self.net.n_params

    @property
    def pde(self) -> np.ndarray:
        return self.theta[self.n_net:]

    @property
    def params(self) -> RDParams:
        return RDParams.from_trainable_vector(self.pde, self.r2)

    @property
    def trainable_pde_indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def trainable_flags(self) -> np.ndarray:
        flags = np.ones(self.theta.size, dtype=bool)
        flags[self.n_net:] = self.mask
        return flags

    def copy(self) -> "TrainableSet":
        theta = self.theta.copy()
        return TrainableSet(self.net.sharing(theta[:self.n_net]), theta, self.mask, self.r2, self.beta_nudges)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 2.5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    pde_lr_scale: float = 1.0
    _scratch: np.ndarray = field(default=None, repr=False)

    @classmethod
    def for_set(cls, ts: TrainableSet, lr: float = 2.5e-4, **kwargs) -> "AdamState":
        n = ts.theta.size
        return cls(np.zeros(n), np.zeros(n), lr=lr, **kwargs)


def adam_step(state: AdamState, ts: TrainableSet, grads: np.ndarray) -> tuple[AdamState, TrainableSet]:
    """One bias-corrected Adam update, in place.  Masked model parameters are left untouched.

    Model-parameter steps are multiplied by ``state.pde_lr_scale``.
    """
    if grads.shape != ts.theta.shape or state.m.shape != ts.theta.shape:
        raise ValueError(f"gradient shape {grads.shape} does not match parameters {ts.theta.shape}")
    state.step += 1
    t = state.step
    state.m *= state.beta1
    state.m += (1.0 - state.beta1) * grads
    state.v *= state.beta2
    state.v += (1.0 - state.beta2) * (grads * grads)
    lr_t = state.lr / (1.0 - state.beta1 ** t)
    denom = np.sqrt(state.v / (1.0 - state.beta2 ** t))
    denom += state.eps
    update = np.divide(state.m, denom, out=denom)
    update *= lr_t

    n = ts.n_net
    beta_before = ts.pde[3]
    ts.theta[:n] -= update[:n]
    for k in ts.trainable_pde_indices:
        ts.theta[n + k] -= state.pde_lr_scale * update[n + k]
    _guard_beta(ts, beta_before)
    return state, ts


def _guard_beta(ts: TrainableSet, before: float) -> None:
    beta = ts.pde[3]
    if abs(beta) < BETA_FLOOR:
        direction = math.copysign(1.0, beta - before) if beta != before else math.copysign(1.0, before)
        ts.pde[3] = direction * BETA_FLOOR
        ts.beta_nudges += 1
        log.info("beta reached %.3g; nudged to %.1e", beta, ts.pde[3])
