"""Network building blocks and the two Q-network architectures.

RAMAVT: four conv blocks (SE gating on the first three), multi-head
self-attention over the flattened spatial grid, mean token pooling, an LSTM
cell, and a dense Q head.  DRLAVT: the frame-stack baseline, four conv blocks
on 4 channel-stacked frames followed by two dense layers, stateless.

All architectures share the conv plan below, which maps 64x64 (or 32x32 /
16x16) inputs to a 4x4 token grid of dimension 64.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .diffnet import (
    GATES,
    EmptySequenceError,
    LSTMParams,
    Tensor,
    batchnorm2d,
    bmm,
    concat,
    conv2d,
    conv_output_extent,
    dense,
    global_avg_pool,
    lstm_step,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    scale,
    sigmoid,
    slice0,
    softmax,
    transpose_last2,
)
from .diffnet.ops import fused_conv_bn_relu, permute
from .diffnet.tensor import ShapeError, wrap


class NonFiniteActivationError(FloatingPointError):
    """A forward pass produced NaN or Inf; the message names the layer."""


VARIANTS = ("ramavt", "drlavt", "origin", "origin+se", "origin+mha")
INPUT_CHANNELS = {"depth": 1, "color": 3, "rgbd": 4}

CONV_CHANNELS = (32, 64, 64, 64)
# (kernels, strides, paddings) per supported input resolution; every plan
# lands on a 4x4 grid so the token count and dimension are resolution-free.
CONV_PLANS = {
    64: ((8, 4, 3, 3), (4, 2, 1, 1), (2, 1, 0, 0)),
    32: ((8, 4, 3, 3), (4, 2, 1, 1), (2, 1, 1, 1)),
    16: ((3, 3, 3, 3), (2, 2, 1, 1), (1, 1, 1, 1)),
}


@dataclass(frozen=True)
class QNetworkSpec:
    """Architecture selector shared by the trainer, evaluator and checkpoints."""

    variant: str = "ramavt"
    input_format: str = "depth"
    resolution: int = 64
    lstm_size: int = 128
    action_count: int = 7
    heads: int = 8
    se_reduction: int = 8
    frame_stack: int = 4
    fc_size: int = 512  # drlavt hidden layer

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}, expected one of {VARIANTS}")
        if self.input_format not in INPUT_CHANNELS:
            raise ValueError(f"unknown input format {self.input_format!r}")
        if self.resolution not in CONV_PLANS:
            raise ValueError(f"unsupported resolution {self.resolution}, have plans for {sorted(CONV_PLANS)}")

    @property
    def input_channels(self) -> int:
        c = INPUT_CHANNELS[self.input_format]
        return c * self.frame_stack if self.variant == "drlavt" else c

    @property
    def has_se(self) -> bool:
        return self.variant in ("ramavt", "origin+se")

    @property
    def has_mha(self) -> bool:
        return self.variant in ("ramavt", "origin+mha")

    @property
    def has_lstm(self) -> bool:
        return self.variant != "drlavt"

    @property
    def conv_plan(self):
        kernels, strides, pads = CONV_PLANS[self.resolution]
        return kernels, strides, pads

    @property
    def grid_size(self) -> int:
        h = self.resolution
        for k, s, p in zip(*self.conv_plan):
            h = conv_output_extent(h, k, s, p)
        return h

    @property
    def token_count(self) -> int:
        return self.grid_size * self.grid_size

    @property
    def token_dim(self) -> int:
        return CONV_CHANNELS[-1]

    @property
    def key_dim(self) -> int:
        return self.token_dim // self.heads


@dataclass
class SEParams:
    """Squeeze-and-excitation gate: pool, reduce, expand, sigmoid."""

    reduce_w: Tensor
    reduce_b: Tensor
    expand_w: Tensor
    expand_b: Tensor

    def tensors(self) -> dict:
        return {"reduce.w": self.reduce_w, "reduce.b": self.reduce_b,
                "expand.w": self.expand_w, "expand.b": self.expand_b}


@dataclass
class MHAParams:
    """Per-head projection matrices plus the shared output projection."""

    w_q: list
    w_k: list
    w_v: list
    w_o: Tensor

    @property
    def head_count(self) -> int:
        return len(self.w_q)

    @property
    def key_dim(self) -> int:
        return self.w_q[0].shape[1]

    def tensors(self) -> dict:
        out = {}
        for i in range(self.head_count):
            out[f"q{i}"] = self.w_q[i]
            out[f"k{i}"] = self.w_k[i]
            out[f"v{i}"] = self.w_v[i]
        out["out"] = self.w_o
        return out


@dataclass
class ConvBlockParams:
    w: Tensor
    b: Tensor
    gamma: Tensor
    beta: Tensor
    run_mean: Tensor
    run_var: Tensor
    stride: int
    padding: int
    se: Optional[SEParams] = None


@dataclass
class RecurrentState:
    """LSTM carry; zeroed at episode start and at every training sequence start."""

    h: Tensor
    c: Tensor

    @classmethod
    def zeros(cls, batch: int, size: int, dtype=np.float32) -> "RecurrentState":
        return cls(h=wrap(np.zeros((batch, size), dtype=dtype)),
                   c=wrap(np.zeros((batch, size), dtype=dtype)))


class QNetworkParams:
    """Named tensor map for one network plus structured layer views.

    The flat ``tensors`` dict is the persistence and target-sync surface;
    the structured attributes reference the same Tensor objects, so in-place
    copies keep both views coherent.
    """

    def __init__(self, spec: QNetworkSpec, tensors: dict):
        self.spec = spec
        self.tensors = tensors
        kernels, strides, pads = spec.conv_plan
        self.conv_blocks = []
        for i in range(4):
            se = None
            if spec.has_se and i < 3:
                se = SEParams(*(tensors[f"se{i + 1}.{k}"] for k in ("reduce.w", "reduce.b", "expand.w", "expand.b")))
            self.conv_blocks.append(ConvBlockParams(
                w=tensors[f"conv{i + 1}.w"], b=tensors[f"conv{i + 1}.b"],
                gamma=tensors[f"bn{i + 1}.gamma"], beta=tensors[f"bn{i + 1}.beta"],
                run_mean=tensors[f"bn{i + 1}.mean"], run_var=tensors[f"bn{i + 1}.var"],
                stride=strides[i], padding=pads[i], se=se,
            ))
        self.mha = None
        if spec.has_mha:
            self.mha = MHAParams(
                w_q=[tensors[f"mha.q{i}"] for i in range(spec.heads)],
                w_k=[tensors[f"mha.k{i}"] for i in range(spec.heads)],
                w_v=[tensors[f"mha.v{i}"] for i in range(spec.heads)],
                w_o=tensors["mha.out"],
            )
        self.lstm = None
        if spec.has_lstm:
            self.lstm = LSTMParams(
                w_x={g: tensors[f"lstm.{g}.wx"] for g in GATES},
                w_h={g: tensors[f"lstm.{g}.wh"] for g in GATES},
                b={g: tensors[f"lstm.{g}.b"] for g in GATES},
            )

    @classmethod
    def init(cls, spec: QNetworkSpec, rng: np.random.Generator, dtype=np.float32) -> "QNetworkParams":
        t: dict[str, Tensor] = {}

        def param(name, arr):
            t[name] = Tensor(arr, requires_grad=True, dtype=dtype)

        def buffer(name, arr):
            t[name] = Tensor(arr, requires_grad=False, dtype=dtype)

        kernels, _, _ = spec.conv_plan
        c_in = spec.input_channels
        for i, (c_out, k) in enumerate(zip(CONV_CHANNELS, kernels), start=1):
            fan_in = c_in * k * k
            param(f"conv{i}.w", rng.normal(0.0, np.sqrt(2.0 / fan_in), (c_out, c_in, k, k)))
            param(f"conv{i}.b", np.zeros(c_out))
            param(f"bn{i}.gamma", np.ones(c_out))
            param(f"bn{i}.beta", np.zeros(c_out))
            buffer(f"bn{i}.mean", np.zeros(c_out))
            buffer(f"bn{i}.var", np.ones(c_out))
            if spec.has_se and i <= 3:
                if c_out % spec.se_reduction:
                    raise ValueError(f"channels {c_out} not divisible by SE reduction {spec.se_reduction}")
                c_red = c_out // spec.se_reduction
                param(f"se{i}.reduce.w", rng.normal(0.0, np.sqrt(2.0 / c_out), (c_out, c_red)))
                param(f"se{i}.reduce.b", np.zeros(c_red))
                param(f"se{i}.expand.w", rng.normal(0.0, np.sqrt(1.0 / c_red), (c_red, c_out)))
                param(f"se{i}.expand.b", np.zeros(c_out))
            c_in = c_out

        d = spec.token_dim
        if spec.has_mha:
            if d % spec.heads:
                raise ValueError(f"token dim {d} not divisible by {spec.heads} heads")
            dk = spec.key_dim
            for i in range(spec.heads):
                for kind in ("q", "k", "v"):
                    param(f"mha.{kind}{i}", rng.normal(0.0, np.sqrt(1.0 / d), (d, dk)))
            param("mha.out", rng.normal(0.0, np.sqrt(1.0 / d), (spec.heads * dk, d)))

        if spec.has_lstm:
            s = spec.lstm_size
            bound = 1.0 / np.sqrt(s)
            for g in GATES:
                param(f"lstm.{g}.wx", rng.uniform(-bound, bound, (d, s)))
                param(f"lstm.{g}.wh", rng.uniform(-bound, bound, (s, s)))
                # forget-gate bias starts at 1 so early training propagates memory
                param(f"lstm.{g}.b", np.full(s, 1.0 if g == "f" else 0.0))
            head_in = s
        else:
            flat = spec.token_count * d
            param("fc1.w", rng.normal(0.0, np.sqrt(2.0 / flat), (flat, spec.fc_size)))
            param("fc1.b", np.zeros(spec.fc_size))
            head_in = spec.fc_size

        param("head.w", rng.normal(0.0, np.sqrt(1.0 / head_in), (head_in, spec.action_count)))
        param("head.b", np.zeros(spec.action_count))
        return cls(spec, t)

    def trainable(self) -> dict:
        return {name: p for name, p in self.tensors.items() if p.requires_grad}

    def parameter_count(self) -> int:
        return sum(p.size for p in self.trainable().values())

    def copy(self) -> "QNetworkParams":
        return QNetworkParams(self.spec, {name: p.copy() for name, p in self.tensors.items()})

    def copy_from(self, other: "QNetworkParams") -> None:
        """Bit-exact in-place copy; this is the target-network sync primitive."""
        if self.tensors.keys() != other.tensors.keys():
            raise ShapeError("parameter sets are not congruent")
        for name, p in self.tensors.items():
            src = other.tensors[name]
            if p.shape != src.shape:
                raise ShapeError(f"parameter {name}: shape {p.shape} vs {src.shape}")
            p.data[...] = src.data


def _check_finite(x: Tensor, layer: str) -> Tensor:
    if not np.all(np.isfinite(x.data)):
        raise NonFiniteActivationError(f"non-finite activation after {layer}")
    return x


def se_forward(x: Tensor, p: SEParams) -> Tensor:
    """Channel gating: x scaled per channel by sigmoid excitation weights."""
    if x.shape[1] != p.expand_b.shape[0]:
        raise ShapeError(f"se_forward: {x.shape[1]} channels vs params for {p.expand_b.shape[0]}")
    s = sigmoid(dense(relu(dense(global_avg_pool(x), p.reduce_w, p.reduce_b)), p.expand_w, p.expand_b))
    return mul(x, reshape(s, (x.shape[0], x.shape[1], 1, 1)))


def mha_forward(x: Tensor, p: MHAParams, capture: Optional[dict] = None) -> Tensor:
    """Multi-head scaled dot-product self-attention over token positions.

    Accepts [P, D] or batched [B, P, D]; every head computes
    softmax(Q K^T / sqrt(d_k)) V and head outputs are concatenated and
    projected by the output matrix.
    """
    squeeze = x.data.ndim == 2
    if squeeze:
        x = reshape(x, (1,) + x.shape)
    b, n_pos, d = x.shape
    if n_pos == 0:
        raise EmptySequenceError("mha_forward needs at least one token position")
    if d != p.w_q[0].shape[0]:
        raise ShapeError(f"mha_forward: token dim {d} vs projection rows {p.w_q[0].shape[0]}")
    inv_sqrt_dk = 1.0 / np.sqrt(p.key_dim)
    heads = []
    attn_maps = []
    for i in range(p.head_count):
        q = matmul(x, p.w_q[i])
        k = matmul(x, p.w_k[i])
        v = matmul(x, p.w_v[i])
        attn = softmax(scale(bmm(q, transpose_last2(k)), inv_sqrt_dk), axis=-1)
        if capture is not None:
            attn_maps.append(attn.data.copy())
        heads.append(bmm(attn, v))
    out = matmul(concat(heads, axis=-1), p.w_o)
    if capture is not None:
        capture["mha.attn"] = np.stack(attn_maps, axis=1)  # [B, N, P, P]
        capture["mha.out"] = out.data.copy()
    if squeeze:
        out = reshape(out, (n_pos, d))
    return out


def conv_block(x: Tensor, p: ConvBlockParams, training: bool, with_se: Optional[bool] = None) -> Tensor:
    """relu(batchnorm(conv(x))), then SE gating when the block carries one."""
    y = relu(batchnorm2d(conv2d(x, p.w, p.b, p.stride, p.padding),
                         p.gamma, p.beta, p.run_mean, p.run_var, training))
    use_se = p.se is not None if with_se is None else (with_se and p.se is not None)
    if use_se:
        y = se_forward(y, p.se)
    return y


def _se_gate_nhwc(x: Tensor, p: SEParams) -> Tensor:
    """se_forward for NHWC activations (channel axis last)."""
    pooled = mean(mean(x, axis=1), axis=1)
    s = sigmoid(dense(relu(dense(pooled, p.reduce_w, p.reduce_b)), p.expand_w, p.expand_b))
    return mul(x, reshape(s, (x.shape[0], 1, 1, x.shape[3])))


def _conv_stack_nhwc(params: QNetworkParams, x: Tensor, training: bool,
                     capture: Optional[dict] = None) -> Tensor:
    """All four fused conv blocks on an NHWC batch."""
    for i, block in enumerate(params.conv_blocks, start=1):
        x = fused_conv_bn_relu(x, block.w, block.b, block.gamma, block.beta,
                               block.run_mean, block.run_var,
                               block.stride, block.padding, training)
        if block.se is not None:
            x = _se_gate_nhwc(x, block.se)
        _check_finite(x, f"conv{i}")
        if capture is not None:
            capture[f"conv{i}"] = np.ascontiguousarray(x.data.transpose(0, 3, 1, 2))
    return x


def _trunk_features(params: QNetworkParams, x: Tensor, training: bool,
                    capture: Optional[dict] = None, nhwc: bool = False) -> Tensor:
    """Conv blocks, token flattening, optional MHA, mean pooling -> [N,D]."""
    spec = params.spec
    if not nhwc:
        x = permute(x, (0, 2, 3, 1))
    x = _conv_stack_nhwc(params, x, training, capture)
    tokens = reshape(x, (x.shape[0], spec.token_count, spec.token_dim))
    if spec.has_mha:
        tokens = _check_finite(mha_forward(tokens, params.mha, capture), "mha")
    return mean(tokens, axis=1)


def qnet_forward(params: QNetworkParams, obs: Tensor, state: Optional[RecurrentState] = None,
                 training: bool = False, capture: Optional[dict] = None):
    """Run one forward pass; returns (q, next_state).

    ``obs`` may be a single observation [C,H,W] or a batch [B,C,H,W]; q comes
    back with matching rank.  Recurrent variants require ``state``; DRLAVT
    ignores it and returns None.
    """
    spec = params.spec
    squeeze = obs.data.ndim == 3
    x = reshape(obs, (1,) + obs.shape) if squeeze else obs
    if x.shape[1] != spec.input_channels or x.shape[2] != spec.resolution:
        raise ShapeError(
            f"observation {x.shape[1:]} does not match spec "
            f"({spec.input_channels},{spec.resolution},{spec.resolution})")
    batch = x.shape[0]

    if spec.has_lstm:
        feat = _trunk_features(params, x, training, capture)
        if state is None:
            raise ValueError(f"variant {spec.variant!r} needs a recurrent state")
        h, c = lstm_step(feat, state.h, state.c, params.lstm)
        _check_finite(h, "lstm")
        q = dense(h, params.tensors["head.w"], params.tensors["head.b"])
        next_state = RecurrentState(h, c)
    else:
        x = _conv_stack_nhwc(params, permute(x, (0, 2, 3, 1)), training, capture)
        flat = reshape(x, (batch, spec.token_dim * spec.token_count))
        hidden = relu(dense(flat, params.tensors["fc1.w"], params.tensors["fc1.b"]))
        q = dense(hidden, params.tensors["head.w"], params.tensors["head.b"])
        next_state = None

    _check_finite(q, "head")
    if squeeze:
        q = reshape(q, (spec.action_count,))
    return q, next_state


def sequence_q_values(params: QNetworkParams, obs_seq: np.ndarray, training: bool) -> list:
    """Per-timestep Q values for a [B,L,C,H,W] sequence batch.

    The conv trunk and attention run once over all B*L frames (so train-mode
    batch statistics pool across time), then the LSTM threads each sequence
    from a zero state.  Returns a list of L tensors of shape [B, actions].
    For the stateless DRLAVT variant ``obs_seq`` must already hold stacked
    frames and each timestep is independent.
    """
    spec = params.spec
    b, seq_len = obs_seq.shape[:2]
    # time-major NHWC flat batch: one layout copy feeds the whole trunk
    flat = np.ascontiguousarray(obs_seq.transpose(1, 0, 3, 4, 2)).reshape(
        (b * seq_len,) + obs_seq.shape[3:] + (obs_seq.shape[2],))
    x = wrap(flat)
    if not spec.has_lstm:
        x = _conv_stack_nhwc(params, x, training)
        flat_feat = reshape(x, (b * seq_len, spec.token_dim * spec.token_count))
        hidden = relu(dense(flat_feat, params.tensors["fc1.w"], params.tensors["fc1.b"]))
        q_all = dense(hidden, params.tensors["head.w"], params.tensors["head.b"])
        return [slice0(q_all, t * b, (t + 1) * b) for t in range(seq_len)]
    feat = _trunk_features(params, x, training, nhwc=True)
    head_w = params.tensors["head.w"]
    head_b = params.tensors["head.b"]
    state = RecurrentState.zeros(b, spec.lstm_size, dtype=flat.dtype)
    qs = []
    for t in range(seq_len):
        h, c = lstm_step(slice0(feat, t * b, (t + 1) * b), state.h, state.c, params.lstm)
        state = RecurrentState(h, c)
        qs.append(dense(h, head_w, head_b))
    return qs


def ramavt_forward(obs: Tensor, state: RecurrentState, params: QNetworkParams,
                   training: bool = False, capture: Optional[dict] = None):
    """Recurrent forward for a single observation: (q[action_count], state')."""
    return qnet_forward(params, obs, state, training=training, capture=capture)


def drlavt_forward(stack: Tensor, params: QNetworkParams, training: bool = False,
                   capture: Optional[dict] = None) -> Tensor:
    """Stateless forward over 4 channel-stacked frames."""
    q, _ = qnet_forward(params, stack, None, training=training, capture=capture)
    return q


class FrozenEvalNet:
    """Inference-only view of a parameter set with batchnorm folded away.

    Built once per target-network sync or evaluation run: eval-mode batchnorm
    is a per-channel affine map, so it folds into the im2col weight matrix and
    a bias.  Everything here is plain numpy on NHWC arrays; there is no tape
    and parameters are copied, so the source network can keep training.
    """

    def __init__(self, params: QNetworkParams):
        from .diffnet._kernels import im2col_nhwc

        self._im2col = im2col_nhwc
        spec = params.spec
        self.spec = spec
        self.blocks = []
        for blk in params.conv_blocks:
            f, c, kh, kw = blk.w.shape
            wmat = np.ascontiguousarray(blk.w.data.transpose(2, 3, 1, 0)).reshape(kh * kw * c, f)
            scale_c = blk.gamma.data / np.sqrt(blk.run_var.data + np.float32(1e-5))
            folded_w = (wmat * scale_c).astype(np.float32)
            folded_b = ((blk.b.data - blk.run_mean.data) * scale_c + blk.beta.data).astype(np.float32)
            se = None
            if blk.se is not None:
                se = (blk.se.reduce_w.data, blk.se.reduce_b.data, blk.se.expand_w.data, blk.se.expand_b.data)
            self.blocks.append((folded_w, folded_b, kh, kw, blk.stride, blk.padding, se))
        if spec.has_mha:
            m = params.mha
            self.w_q = np.stack([t.data for t in m.w_q])  # [N, D, dk]
            self.w_k = np.stack([t.data for t in m.w_k])
            self.w_v = np.stack([t.data for t in m.w_v])
            self.w_o = m.w_o.data.copy()
        if spec.has_lstm:
            self.lstm_wx = {g: params.lstm.w_x[g].data.copy() for g in GATES}
            self.lstm_wh = {g: params.lstm.w_h[g].data.copy() for g in GATES}
            self.lstm_b = {g: params.lstm.b[g].data.copy() for g in GATES}
        else:
            self.fc1_w = params.tensors["fc1.w"].data.copy()
            self.fc1_b = params.tensors["fc1.b"].data.copy()
        self.head_w = params.tensors["head.w"].data.copy()
        self.head_b = params.tensors["head.b"].data.copy()

    def conv_stack(self, x_nhwc: np.ndarray) -> np.ndarray:
        for folded_w, folded_b, kh, kw, stride, pad, se in self.blocks:
            n = x_nhwc.shape[0]
            cols, ho, wo = self._im2col(x_nhwc, kh, kw, stride, pad)
            y = cols @ folded_w
            y += folded_b
            np.maximum(y, 0.0, out=y)
            x_nhwc = y.reshape(n, ho, wo, folded_w.shape[1])
            if se is not None:
                rw, rb, ew, eb = se
                pooled = x_nhwc.mean(axis=(1, 2))
                hidden = np.maximum(pooled @ rw + rb, 0.0)
                s = 1.0 / (1.0 + np.exp(-(hidden @ ew + eb)))
                x_nhwc = x_nhwc * s[:, None, None, :]
        return x_nhwc

    def _mha(self, tokens: np.ndarray) -> np.ndarray:
        # tokens [B, P, D]; heads batched via einsum-free stacked matmul
        q = np.einsum("bpd,ndk->nbpk", tokens, self.w_q, optimize=True)
        k = np.einsum("bpd,ndk->nbpk", tokens, self.w_k, optimize=True)
        v = np.einsum("bpd,ndk->nbpk", tokens, self.w_v, optimize=True)
        scores = np.matmul(q, np.swapaxes(k, -1, -2)) / np.sqrt(np.float32(self.spec.key_dim))
        scores -= scores.max(axis=-1, keepdims=True)
        np.exp(scores, out=scores)
        scores /= scores.sum(axis=-1, keepdims=True)
        y = np.matmul(scores, v)  # [N, B, P, dk]
        n_heads, b, p, dk = y.shape
        y = np.ascontiguousarray(y.transpose(1, 2, 0, 3)).reshape(b, p, n_heads * dk)
        return y @ self.w_o

    def features(self, x_nhwc: np.ndarray) -> np.ndarray:
        x = self.conv_stack(x_nhwc)
        tokens = x.reshape(x.shape[0], self.spec.token_count, self.spec.token_dim)
        if self.spec.has_mha:
            tokens = self._mha(tokens)
        return tokens.mean(axis=1)

    def lstm_cell(self, feat: np.ndarray, h: np.ndarray, c: np.ndarray):
        def gate(g):
            return feat @ self.lstm_wx[g] + h @ self.lstm_wh[g] + self.lstm_b[g]

        gi = 1.0 / (1.0 + np.exp(-gate("i")))
        gf = 1.0 / (1.0 + np.exp(-gate("f")))
        gg = np.tanh(gate("g"))
        go = 1.0 / (1.0 + np.exp(-gate("o")))
        c2 = gf * c + gi * gg
        h2 = go * np.tanh(c2)
        return h2, c2

    def step(self, obs_chw: np.ndarray, h: np.ndarray, c: np.ndarray):
        """Greedy-rollout primitive: one observation in, (q, h', c') out."""
        if not self.spec.has_lstm:
            raise ValueError("stateless variant: use stacked_q")
        x = np.ascontiguousarray(obs_chw.transpose(1, 2, 0))[None]
        feat = self.features(x)
        h, c = self.lstm_cell(feat, h, c)
        q = h @ self.head_w + self.head_b
        return q[0], h, c

    def stacked_q(self, stack_chw: np.ndarray) -> np.ndarray:
        """DRLAVT inference on one channel-stacked observation [4C,H,W]."""
        x = np.ascontiguousarray(stack_chw.transpose(1, 2, 0))[None]
        x = self.conv_stack(x)
        flat = x.reshape(1, -1)
        hidden = np.maximum(flat @ self.fc1_w + self.fc1_b, 0.0)
        return (hidden @ self.head_w + self.head_b)[0]

    def sequence_max_q(self, obs_seq: np.ndarray) -> np.ndarray:
        """Max-over-actions Q for every step of a [B,L,C,H,W] batch -> [B,L].

        The conv trunk runs once on the flattened time-major batch; recurrent
        variants then thread a zero-initialized state through each sequence.
        """
        b, seq_len = obs_seq.shape[:2]
        flat = np.ascontiguousarray(obs_seq.transpose(1, 0, 3, 4, 2)).reshape(
            (b * seq_len,) + obs_seq.shape[3:] + (obs_seq.shape[2],))
        if not self.spec.has_lstm:
            x = self.conv_stack(flat).reshape(b * seq_len, -1)
            hidden = np.maximum(x @ self.fc1_w + self.fc1_b, 0.0)
            q = hidden @ self.head_w + self.head_b
            return q.max(axis=1).reshape(seq_len, b).T.copy()
        feat = self.features(flat)
        h = np.zeros((b, self.spec.lstm_size), dtype=np.float32)
        c = np.zeros_like(h)
        out = np.empty((b, seq_len), dtype=np.float32)
        for t in range(seq_len):
            h, c = self.lstm_cell(feat[t * b : (t + 1) * b], h, c)
            out[:, t] = (h @ self.head_w + self.head_b).max(axis=1)
        return out

    def zero_state(self, batch: int = 1):
        s = np.zeros((batch, self.spec.lstm_size), dtype=np.float32)
        return s, s.copy()


def attention_map(activation) -> Tensor:
    """Spatial saliency: softmax over the grid of channel-wise squared sums.

    Input [N,C,H,W] (Tensor or ndarray), output [N,H,W]; each map is a
    probability distribution over the H*W grid.
    """
    a = activation.data if isinstance(activation, Tensor) else np.asarray(activation)
    if a.ndim != 4:
        raise ShapeError(f"attention_map expects [N,C,H,W], got {a.shape}")
    energy = np.square(a).sum(axis=1)
    n, h, w = energy.shape
    flat = energy.reshape(n, h * w)
    flat = flat - flat.max(axis=1, keepdims=True)
    e = np.exp(flat)
    m = e / e.sum(axis=1, keepdims=True)
    return wrap(m.reshape(n, h, w).astype(a.dtype, copy=False))
