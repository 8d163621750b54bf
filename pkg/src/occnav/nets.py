"""Policy-value networks with hand-rolled forward/backward passes.

Two architectures share the interface: a two-hidden-layer fully connected
net over the flattened observation, and a three-layer convolution stack
(1D over stacked channels, or 2D over the trajectories-by-time block) whose
flattened output is concatenated with the target/action features before the
same two fully connected layers. Both end in a policy-logits head and a
scalar value head on a shared trunk.

Parameters live in one flat vector with a shape table, which keeps Adam,
gradient clipping, checkpointing, and finite-difference checks trivial.
Everything is numpy; training runs in float32, gradient checks in float64.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

FC = "fc"
CONV1D = "conv1d"
CONV2D = "conv2d"
VARIANTS = (FC, CONV1D, CONV2D)


def expected_layouts(variant: str) -> tuple[str, ...]:
    return {FC: ("occ1d", "laser1d"),
            CONV1D: ("occch", "laserch"),
            CONV2D: ("occ2d",)}[variant]


@dataclass(frozen=True)
class NetworkSpec:
    variant: str
    n_actions: int
    frame_len: int  # occupancy values (or laser beams) per frame
    n_stack: int
    n_aux: int = 4  # target distance/heading + previous action
    fc_widths: tuple[int, int] = (512, 256)
    conv_channels: tuple[int, int, int] = (32, 32, 32)
    conv_kernels: tuple[int, int, int] = (5, 3, 3)
    conv_strides: tuple[int, int, int] = (2, 2, 1)

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if min(self.n_actions, self.frame_len, self.n_stack) < 1:
            raise ValueError("n_actions, frame_len, n_stack must be >= 1")
        if self.variant != FC:
            self.conv_shapes()  # validates the conv arithmetic

    def conv_shapes(self) -> list[tuple[int, ...]]:
        """Per-layer output shapes of the conv stack (channels, length[, width])."""
        shapes = []
        if self.variant == CONV1D:
            length = self.frame_len
            for k, s, c in zip(self.conv_kernels, self.conv_strides,
                               self.conv_channels):
                if length < k:
                    raise ValueError(f"conv kernel {k} exceeds input length "
                                     f"{length}")
                length = (length - k) // s + 1
                shapes.append((c, length))
        else:
            length, width = self.frame_len, self.n_stack
            for k, s, c in zip(self.conv_kernels, self.conv_strides,
                               self.conv_channels):
                kw = min(3, width)
                if length < k:
                    raise ValueError(f"conv kernel {k} exceeds input length "
                                     f"{length}")
                length = (length - k) // s + 1
                width = (width - kw) // 1 + 1
                shapes.append((c, length, width))
        return shapes

    def trunk_input_len(self) -> int:
        """Length of the vector entering the first FC layer."""
        if self.variant == FC:
            return self.frame_len * self.n_stack + self.n_aux
        return int(np.prod(self.conv_shapes()[-1])) + self.n_aux


def _orthogonal(rng: np.random.Generator, shape: tuple[int, int],
                gain: float) -> np.ndarray:
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))  # deterministic sign convention
    if rows < cols:
        q = q.T
    return gain * q


class PolicyValueNet:
    """Flat-parameter policy/value network over stacked observations."""

    def __init__(self, spec: NetworkSpec, rng: np.random.Generator,
                 dtype=np.float32):
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.shape_table: list[tuple[str, tuple[int, ...], int]] = []
        offset = 0

        def register(name: str, shape: tuple[int, ...]) -> None:
            nonlocal offset
            self.shape_table.append((name, shape, offset))
            offset += int(np.prod(shape))

        in_c = spec.n_stack if spec.variant == CONV1D else 1
        if spec.variant == CONV1D:
            for i, (c, k) in enumerate(zip(spec.conv_channels, spec.conv_kernels)):
                register(f"conv{i}.W", (c, in_c, k))
                register(f"conv{i}.b", (c,))
                in_c = c
        elif spec.variant == CONV2D:
            width = spec.n_stack
            for i, (c, k) in enumerate(zip(spec.conv_channels, spec.conv_kernels)):
                kw = min(3, width)
                register(f"conv{i}.W", (c, in_c, k, kw))
                register(f"conv{i}.b", (c,))
                width = width - kw + 1
                in_c = c
        d = spec.trunk_input_len()
        for i, w in enumerate(spec.fc_widths):
            register(f"fc{i}.W", (w, d))
            register(f"fc{i}.b", (w,))
            d = w
        register("policy.W", (spec.n_actions, d))
        register("policy.b", (spec.n_actions,))
        register("value.W", (1, d))
        register("value.b", (1,))

        self.n_params = offset
        self.params = np.zeros(self.n_params, dtype=self.dtype)
        self._init_params(rng)

    def _init_params(self, rng: np.random.Generator) -> None:
        for name, shape, _ in self.shape_table:
            view = self.view(name)
            if name.endswith(".b"):
                continue  # biases stay zero
            if name.startswith("conv"):
                fan_in = int(np.prod(shape[1:]))
                view[:] = (rng.standard_normal(shape)
                           * math.sqrt(2.0 / fan_in)).astype(self.dtype)
            else:
                gain = {"policy.W": 0.01, "value.W": 1.0}.get(name, math.sqrt(2.0))
                view[:] = _orthogonal(rng, shape, gain).astype(self.dtype)

    def view(self, name: str, params: np.ndarray | None = None) -> np.ndarray:
        p = self.params if params is None else params
        for n, shape, off in self.shape_table:
            if n == name:
                return p[off:off + int(np.prod(shape))].reshape(shape)
        raise KeyError(name)

    def astype(self, dtype) -> "PolicyValueNet":
        """Copy of this net with parameters cast to ``dtype``."""
        clone = object.__new__(PolicyValueNet)
        clone.spec = self.spec
        clone.dtype = np.dtype(dtype)
        clone.shape_table = self.shape_table
        clone.n_params = self.n_params
        clone.params = self.params.astype(dtype)
        return clone

    # -- forward -----------------------------------------------------------

    def forward(self, blocks: np.ndarray, aux: np.ndarray,
                need_cache: bool = False):
        """Map stacked blocks (B, n_stack, frame_len) and aux features (B, n_aux)
        to (logits (B, n_actions), values (B,))."""
        spec = self.spec
        blocks = np.asarray(blocks, dtype=self.dtype)
        aux = np.asarray(aux, dtype=self.dtype)
        if blocks.shape[1:] != (spec.n_stack, spec.frame_len):
            raise ValueError(f"block shape {blocks.shape[1:]} does not match "
                             f"spec ({spec.n_stack}, {spec.frame_len})")
        cache: dict = {"blocks": blocks, "aux": aux}

        if spec.variant == FC:
            x = np.concatenate([blocks.reshape(len(blocks), -1), aux], axis=1)
        else:
            c = (blocks if spec.variant == CONV1D
                 else blocks.transpose(0, 2, 1)[:, None, :, :])
            pre_acts = []
            inputs = []
            for i in range(len(spec.conv_channels)):
                inputs.append(c)
                w = self.view(f"conv{i}.W")
                b = self.view(f"conv{i}.b")
                z = (_conv1d_forward(c, w, spec.conv_strides[i])
                     if spec.variant == CONV1D
                     else _conv2d_forward(c, w, (spec.conv_strides[i], 1)))
                z += (b[:, None] if spec.variant == CONV1D
                      else b[:, None, None])
                pre_acts.append(z)
                c = np.maximum(z, 0.0)
            cache["conv_inputs"] = inputs
            cache["conv_pre"] = pre_acts
            x = np.concatenate([c.reshape(len(c), -1), aux], axis=1)

        hs, pres = [], []
        h = x
        for i in range(len(spec.fc_widths)):
            hs.append(h)
            z = h @ self.view(f"fc{i}.W").T + self.view(f"fc{i}.b")
            pres.append(z)
            h = np.maximum(z, 0.0)
        logits = h @ self.view("policy.W").T + self.view("policy.b")
        values = (h @ self.view("value.W").T + self.view("value.b"))[:, 0]
        if not need_cache:
            return logits, values
        cache.update({"x": x, "fc_inputs": hs, "fc_pre": pres, "trunk_out": h})
        return logits, values, cache

    def forward_obs(self, obs) -> tuple[np.ndarray, float]:
        """Single-observation forward; validates the layout/variant pairing."""
        if obs.layout not in expected_layouts(self.spec.variant):
            raise ValueError(f"layout {obs.layout!r} does not fit network "
                             f"variant {self.spec.variant!r}")
        logits, values = self.forward(obs.stacked[None], obs.aux[None])
        return logits[0], float(values[0])

    # -- backward ----------------------------------------------------------

    def backward(self, cache: dict, dlogits: np.ndarray,
                 dvalues: np.ndarray) -> np.ndarray:
        """Parameter gradient of a scalar loss given dloss/dlogits and
        dloss/dvalues. Inputs come from forward(..., need_cache=True)."""
        spec = self.spec
        grads = np.zeros(self.n_params, dtype=self.dtype)
        dlogits = np.asarray(dlogits, dtype=self.dtype)
        dvalues = np.asarray(dvalues, dtype=self.dtype)

        h = cache["trunk_out"]
        self.view("policy.W", grads)[:] = dlogits.T @ h
        self.view("policy.b", grads)[:] = dlogits.sum(axis=0)
        self.view("value.W", grads)[:] = dvalues[None, :] @ h
        self.view("value.b", grads)[:] = dvalues.sum()
        dh = dlogits @ self.view("policy.W") + dvalues[:, None] @ self.view("value.W")

        for i in reversed(range(len(spec.fc_widths))):
            dz = dh * (cache["fc_pre"][i] > 0.0)
            self.view(f"fc{i}.W", grads)[:] = dz.T @ cache["fc_inputs"][i]
            self.view(f"fc{i}.b", grads)[:] = dz.sum(axis=0)
            dh = dz @ self.view(f"fc{i}.W")

        if spec.variant == FC:
            return grads

        flat_len = dh.shape[1] - spec.n_aux
        dc = dh[:, :flat_len].reshape(cache["conv_pre"][-1].shape)
        for i in reversed(range(len(spec.conv_channels))):
            dz = dc * (cache["conv_pre"][i] > 0.0)
            w = self.view(f"conv{i}.W")
            x = cache["conv_inputs"][i]
            if spec.variant == CONV1D:
                dw, db, dc = _conv1d_backward(x, w, dz, spec.conv_strides[i],
                                              need_dx=i > 0)
            else:
                dw, db, dc = _conv2d_backward(x, w, dz,
                                              (spec.conv_strides[i], 1),
                                              need_dx=i > 0)
            self.view(f"conv{i}.W", grads)[:] = dw
            self.view(f"conv{i}.b", grads)[:] = db
        return grads


# ---------------------------------------------------------------------------
# Convolution primitives (valid padding)

def _conv1d_forward(x: np.ndarray, w: np.ndarray, stride: int) -> np.ndarray:
    # x (B, C, L), w (O, C, K) -> (B, O, L_out)
    win = np.lib.stride_tricks.sliding_window_view(x, w.shape[2], axis=2)
    win = win[:, :, ::stride]
    return np.einsum("bclk,ock->bol", win, w, optimize=True)


def _conv1d_backward(x: np.ndarray, w: np.ndarray, dz: np.ndarray, stride: int,
                     need_dx: bool = True):
    k = w.shape[2]
    l_out = dz.shape[2]
    win = np.lib.stride_tricks.sliding_window_view(x, k, axis=2)[:, :, ::stride]
    dw = np.einsum("bol,bclk->ock", dz, win, optimize=True)
    db = dz.sum(axis=(0, 2))
    dx = None
    if need_dx:
        dx = np.zeros_like(x)
        for kk in range(k):
            # each kernel tap maps to a strided slice of the input
            dx[:, :, kk:kk + stride * l_out:stride] += np.einsum(
                "bol,oc->bcl", dz, w[:, :, kk], optimize=True)
    return dw, db, dx


def _conv2d_forward(x: np.ndarray, w: np.ndarray,
                    strides: tuple[int, int]) -> np.ndarray:
    # x (B, C, H, W), w (O, C, KH, KW) -> (B, O, H_out, W_out)
    kh, kw = w.shape[2], w.shape[3]
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::strides[0], ::strides[1]]
    return np.einsum("bchwij,ocij->bohw", win, w, optimize=True)


def _conv2d_backward(x: np.ndarray, w: np.ndarray, dz: np.ndarray,
                     strides: tuple[int, int], need_dx: bool = True):
    kh, kw = w.shape[2], w.shape[3]
    h_out, w_out = dz.shape[2], dz.shape[3]
    win = np.lib.stride_tricks.sliding_window_view(x, (kh, kw), axis=(2, 3))
    win = win[:, :, ::strides[0], ::strides[1]]
    dw = np.einsum("bohw,bchwij->ocij", dz, win, optimize=True)
    db = dz.sum(axis=(0, 2, 3))
    dx = None
    if need_dx:
        dx = np.zeros_like(x)
        for i in range(kh):
            for j in range(kw):
                dx[:, :, i:i + strides[0] * h_out:strides[0],
                   j:j + strides[1] * w_out:strides[1]] += np.einsum(
                    "bohw,oc->bchw", dz, w[:, :, i, j], optimize=True)
    return dw, db, dx


# ---------------------------------------------------------------------------
# Categorical-policy helpers

def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def entropy(logits: np.ndarray) -> np.ndarray:
    logp = log_softmax(logits)
    return -(np.exp(logp) * logp).sum(axis=-1)


def sample_action(logits: np.ndarray, rng: np.random.Generator) -> tuple[int, float]:
    """Categorical draw from softmax(logits) with its log-probability."""
    if not np.all(np.isfinite(logits)):
        raise FloatingPointError("non-finite logits")
    logp = log_softmax(np.asarray(logits, dtype=np.float64))
    cdf = np.cumsum(np.exp(logp))
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1]))
    idx = min(idx, len(logp) - 1)
    return idx, float(logp[idx])


class Adam:
    """Adaptive-moment first-order optimizer over the flat parameter vector."""

    def __init__(self, n_params: int, lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, dtype=np.float32):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = np.zeros(n_params, dtype=dtype)
        self.v = np.zeros(n_params, dtype=dtype)
        self._scratch = np.empty(n_params, dtype=dtype)

    def step(self, params: np.ndarray, grads: np.ndarray) -> None:
        self.t += 1
        dt = self.m.dtype.type
        self.m *= dt(self.beta1)
        self.m += dt(1.0 - self.beta1) * grads
        self.v *= dt(self.beta2)
        s = self._scratch
        np.multiply(grads, grads, out=s)
        s *= dt(1.0 - self.beta2)
        self.v += s
        # fold both bias corrections into the step size
        step = self.lr * math.sqrt(1.0 - self.beta2 ** self.t) \
            / (1.0 - self.beta1 ** self.t)
        np.sqrt(self.v, out=s)
        s += dt(self.eps * math.sqrt(1.0 - self.beta2 ** self.t))
        np.divide(self.m, s, out=s)
        s *= dt(step)
        params -= s

    def state(self) -> dict:
        return {"t": self.t, "m": self.m, "v": self.v}

    def load_state(self, state: dict) -> None:
        self.t = int(state["t"])
        self.m = np.asarray(state["m"])
        self.v = np.asarray(state["v"])
        self._scratch = np.empty_like(self.m)


def clip_grad_norm(grads: np.ndarray, max_norm: float) -> float:
    norm = float(math.sqrt(np.dot(grads, grads)))
    if max_norm > 0.0 and norm > max_norm:
        grads *= grads.dtype.type(max_norm / norm)
    return norm
