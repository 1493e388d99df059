"""Registry of gradient checks over every differentiable primitive.

Run by the ``grad-check`` CLI command and the acceptance suite.  Closures use
mean-scaled losses so 32-bit central differences stay well above the rounding
floor; the full-network composite runs at 16x16 input with its own tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import blocks
from .diffnet import (
    GATES,
    LSTMParams,
    Tensor,
    batchnorm2d,
    bmm,
    concat,
    conv2d,
    dense,
    global_avg_pool,
    grad_check,
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
    sub,
    sum_all,
    tanh,
    transpose_last2,
)
from .diffnet.ops import fused_conv_bn_relu

PRIMITIVE_TOLERANCE = 1e-3
COMPOSITE_TOLERANCE = 1e-2
FD_STEP = 1e-3


def _mean_loss(t: Tensor) -> Tensor:
    return scale(sum_all(t), 1.0 / t.size)


@dataclass
class SuiteEntry:
    name: str
    closure: callable
    inputs: list
    tolerance: float
    n_samples: int = 100


def _away_from_zero(rng, shape, margin=0.05):
    """Random values kept outside the relu kink's finite-difference window."""
    x = rng.standard_normal(shape).astype(np.float32)
    x += np.sign(x) * margin
    return x


def build_suite(rng: np.random.Generator) -> list:
    entries = []

    x = Tensor(_away_from_zero(rng, (2, 3, 8, 8)), requires_grad=True)
    w = Tensor(rng.standard_normal((4, 3, 3, 3)) * 0.5, requires_grad=True)
    b = Tensor(rng.standard_normal(4) * 0.1, requires_grad=True)
    entries.append(SuiteEntry(
        "conv2d", lambda x, w, b: _mean_loss(mul(conv2d(x, w, b, 2, 1), conv2d(x, w, b, 2, 1))),
        [x, w, b], PRIMITIVE_TOLERANCE))

    xb = Tensor(rng.standard_normal((3, 4, 5, 5)), requires_grad=True)
    gamma = Tensor(rng.standard_normal(4) * 0.3 + 1.0, requires_grad=True)
    beta = Tensor(rng.standard_normal(4) * 0.2, requires_grad=True)
    rmean = Tensor(np.zeros(4))
    rvar = Tensor(np.ones(4))
    entries.append(SuiteEntry(
        "batchnorm2d.train",
        lambda x, g, be: _mean_loss(mul(batchnorm2d(x, g, be, rmean, rvar, True),
                                        batchnorm2d(x, g, be, rmean, rvar, True))),
        [xb, gamma, beta], PRIMITIVE_TOLERANCE))
    rmean_e = Tensor(rng.standard_normal(4) * 0.1)
    rvar_e = Tensor(np.ones(4) + rng.random(4))
    entries.append(SuiteEntry(
        "batchnorm2d.eval",
        lambda x, g, be: _mean_loss(mul(batchnorm2d(x, g, be, rmean_e, rvar_e, False),
                                        batchnorm2d(x, g, be, rmean_e, rvar_e, False))),
        [xb.copy(), gamma.copy(), beta.copy()], PRIMITIVE_TOLERANCE))

    xc = Tensor(_away_from_zero(rng, (4, 6, 6, 3)), requires_grad=True)
    wf = Tensor(rng.standard_normal((5, 3, 3, 3)) * 0.4, requires_grad=True)
    bf = Tensor(rng.standard_normal(5) * 0.1, requires_grad=True)
    gf = Tensor(rng.standard_normal(5) * 0.3 + 1.0, requires_grad=True)
    betf = Tensor(rng.standard_normal(5) * 0.2, requires_grad=True)
    rm_f = Tensor(np.zeros(5))
    rv_f = Tensor(np.ones(5))
    entries.append(SuiteEntry(
        "fused_conv_bn_relu",
        lambda x, w, b, g, be: _mean_loss(mul(
            fused_conv_bn_relu(x, w, b, g, be, rm_f, rv_f, 2, 1, True),
            fused_conv_bn_relu(x, w, b, g, be, rm_f, rv_f, 2, 1, True))),
        [xc, wf, bf, gf, betf], PRIMITIVE_TOLERANCE))

    xd = Tensor(rng.standard_normal((6, 10)), requires_grad=True)
    wd = Tensor(rng.standard_normal((10, 4)) * 0.5, requires_grad=True)
    bd = Tensor(rng.standard_normal(4) * 0.1, requires_grad=True)
    entries.append(SuiteEntry(
        "dense", lambda x, w, b: _mean_loss(mul(dense(x, w, b), dense(x, w, b))),
        [xd, wd, bd], PRIMITIVE_TOLERANCE))

    d_in, s = 5, 4
    lstm = LSTMParams(
        w_x={g: Tensor(rng.standard_normal((d_in, s)) * 0.5, requires_grad=True) for g in GATES},
        w_h={g: Tensor(rng.standard_normal((s, s)) * 0.5, requires_grad=True) for g in GATES},
        b={g: Tensor(rng.standard_normal(s) * 0.1, requires_grad=True) for g in GATES},
    )
    xs = [Tensor(rng.standard_normal((3, d_in)) * 0.6, requires_grad=True) for _ in range(3)]

    def lstm_chain(*tensors):
        h = Tensor(np.zeros((3, s)))
        c = Tensor(np.zeros((3, s)))
        for x_t in tensors[:3]:
            h, c = lstm_step(x_t, h, c, lstm)
        return _mean_loss(mul(h, h))

    lstm_inputs = xs + list(lstm.w_x.values()) + list(lstm.w_h.values()) + list(lstm.b.values())
    entries.append(SuiteEntry("lstm_step.x3", lstm_chain, lstm_inputs, PRIMITIVE_TOLERANCE, n_samples=150))

    xa = Tensor(_away_from_zero(rng, (5, 7)), requires_grad=True)
    entries.append(SuiteEntry("relu", lambda x: _mean_loss(mul(relu(x), relu(x))), [xa], PRIMITIVE_TOLERANCE))
    xs_ = Tensor(rng.standard_normal((5, 7)), requires_grad=True)
    entries.append(SuiteEntry("sigmoid", lambda x: _mean_loss(mul(sigmoid(x), sigmoid(x))), [xs_], PRIMITIVE_TOLERANCE))
    xt = Tensor(rng.standard_normal((5, 7)), requires_grad=True)
    entries.append(SuiteEntry("tanh", lambda x: _mean_loss(mul(tanh(x), tanh(x))), [xt], PRIMITIVE_TOLERANCE))
    xm = Tensor(rng.standard_normal((4, 6)), requires_grad=True)
    target = Tensor(rng.random((4, 6)).astype(np.float32))
    entries.append(SuiteEntry(
        "softmax", lambda x: _mean_loss(mul(softmax(x, axis=1), target)), [xm], PRIMITIVE_TOLERANCE))
    xg = Tensor(rng.standard_normal((2, 3, 4, 4)), requires_grad=True)
    entries.append(SuiteEntry(
        "global_avg_pool", lambda x: _mean_loss(mul(global_avg_pool(x), global_avg_pool(x))),
        [xg], PRIMITIVE_TOLERANCE))

    ma = Tensor(rng.standard_normal((5, 6)), requires_grad=True)
    mb = Tensor(rng.standard_normal((6, 3)), requires_grad=True)
    entries.append(SuiteEntry(
        "matmul", lambda a, b: _mean_loss(mul(matmul(a, b), matmul(a, b))), [ma, mb], PRIMITIVE_TOLERANCE))
    ba = Tensor(rng.standard_normal((3, 4, 5)), requires_grad=True)
    bb = Tensor(rng.standard_normal((3, 5, 2)), requires_grad=True)
    entries.append(SuiteEntry(
        "bmm", lambda a, b: _mean_loss(mul(bmm(a, b), bmm(a, b))), [ba, bb], PRIMITIVE_TOLERANCE))

    xr = Tensor(rng.standard_normal((4, 6)), requires_grad=True)
    entries.append(SuiteEntry(
        "reshape+transpose+slice+concat",
        lambda x: _mean_loss(mul(concat([slice0(transpose_last2(reshape(x, (2, 2, 6))), 0, 1)] * 2, axis=0),
                                 Tensor(np.ones((2, 6, 2), dtype=np.float32)))),
        [xr], PRIMITIVE_TOLERANCE))
    xme = Tensor(rng.standard_normal((3, 5, 4)), requires_grad=True)
    entries.append(SuiteEntry(
        "mean+sub", lambda x: _mean_loss(mul(sub(mean(x, axis=1), Tensor(np.ones((3, 4), dtype=np.float32))),
                                             mean(x, axis=1))),
        [xme], PRIMITIVE_TOLERANCE))

    spec_se = blocks.QNetworkSpec(variant="origin+se", resolution=16)
    se = blocks.SEParams(
        reduce_w=Tensor(rng.standard_normal((8, 2)) * 0.5, requires_grad=True),
        reduce_b=Tensor(rng.standard_normal(2) * 0.1, requires_grad=True),
        expand_w=Tensor(rng.standard_normal((2, 8)) * 0.5, requires_grad=True),
        expand_b=Tensor(rng.standard_normal(8) * 0.1, requires_grad=True),
    )
    xse = Tensor(rng.standard_normal((2, 8, 3, 3)), requires_grad=True)
    entries.append(SuiteEntry(
        "se_forward",
        lambda x, rw, rb, ew, eb: _mean_loss(mul(blocks.se_forward(x, se), blocks.se_forward(x, se))),
        [xse, se.reduce_w, se.reduce_b, se.expand_w, se.expand_b], PRIMITIVE_TOLERANCE))

    heads, dk, d_model = 2, 3, 6
    mha = blocks.MHAParams(
        w_q=[Tensor(rng.standard_normal((d_model, dk)) * 0.5, requires_grad=True) for _ in range(heads)],
        w_k=[Tensor(rng.standard_normal((d_model, dk)) * 0.5, requires_grad=True) for _ in range(heads)],
        w_v=[Tensor(rng.standard_normal((d_model, dk)) * 0.5, requires_grad=True) for _ in range(heads)],
        w_o=Tensor(rng.standard_normal((heads * dk, d_model)) * 0.5, requires_grad=True),
    )
    xmha = Tensor(rng.standard_normal((4, d_model)), requires_grad=True)
    mha_inputs = [xmha] + mha.w_q + mha.w_k + mha.w_v + [mha.w_o]
    entries.append(SuiteEntry(
        "mha_forward",
        lambda *ts: _mean_loss(mul(blocks.mha_forward(ts[0], mha), blocks.mha_forward(ts[0], mha))),
        mha_inputs, PRIMITIVE_TOLERANCE, n_samples=150))

    return entries


def build_composite(rng: np.random.Generator) -> SuiteEntry:
    """Full RAMAVT forward + MSE head loss at 16x16 input."""
    spec = blocks.QNetworkSpec(variant="ramavt", resolution=16)
    params = blocks.QNetworkParams.init(spec, rng)
    obs = Tensor(rng.random((1, 16, 16)).astype(np.float32))
    target = Tensor(rng.standard_normal(spec.action_count).astype(np.float32))
    tensors = list(params.trainable().values())

    def closure(*ts):
        state = blocks.RecurrentState.zeros(1, spec.lstm_size)
        q, _ = blocks.qnet_forward(params, obs, state, training=True)
        err = sub(q, target)
        return _mean_loss(mul(err, err))

    return SuiteEntry("ramavt_forward.16x16", closure, tensors, COMPOSITE_TOLERANCE, n_samples=400)


def run_suite(seed: int = 0, include_composite: bool = True):
    """Run every entry; returns [(name, GradCheckReport, tolerance)]."""
    rng = np.random.default_rng(seed)
    entries = build_suite(rng)
    if include_composite:
        entries.append(build_composite(rng))
    results = []
    for entry in entries:
        report = grad_check(entry.closure, entry.inputs, tolerance=entry.tolerance,
                            h=FD_STEP, n_samples=entry.n_samples, rng=rng)
        results.append((entry.name, report, entry.tolerance))
    return results
