"""Trainable eps-predictor and its training loss.

A small U-shaped conv net over the (mel, time, 1) latent: signal
injection at the input, two stride-2 down blocks (16 -> 32 channels), a
mid block with single-head cross-attention over the [text | fused
visual] token context, two up blocks with skip connections, and a linear
head.  Timestep information enters as a sinusoidal embedding mapped by a
learned matrix to a per-channel bias after each block's first conv.

Everything is plain float64 numpy with hand-written reverse-mode
backprop; `loss_and_grad` returns analytic gradients for every parameter
so the finite-difference check in `training.grad_check` is a genuine
second route.  The design is norm-free and uses the smooth SiLU
activation x*sigmoid(x) so finite differences stay clean.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .conditioning import ConditionParams, ConditionSet, VisualCondition
from .config import ModelConfig
from .diffusion import NoiseSchedule, q_sample

FUSION_INIT_SCALE = 2.0


# --------------------------------------------------------------------------
# parameters

def param_specs(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    c1 = cfg.base_channels
    c2 = 2 * cfg.base_channels
    td = cfg.time_dim
    c = cfg.cond_dim
    if cfg.attn_dim != c2 or cfg.cond_dim != c2:
        raise ValueError("cond_dim and attn_dim must equal the mid-block channel count")
    w = cfg.latent_shape[1]
    return [
        ("down1.conv.k", (3, 3, 1, c1)), ("down1.conv.b", (c1,)), ("down1.time.w", (td, c1)),
        ("down1.pool.k", (3, 3, c1, c1)), ("down1.pool.b", (c1,)),
        ("down2.conv.k", (3, 3, c1, c2)), ("down2.conv.b", (c2,)), ("down2.time.w", (td, c2)),
        ("down2.pool.k", (3, 3, c2, c2)), ("down2.pool.b", (c2,)),
        ("mid.conv.k", (3, 3, c2, c2)), ("mid.conv.b", (c2,)), ("mid.time.w", (td, c2)),
        ("mid.attn.wq", (c2, cfg.attn_dim)), ("mid.attn.wk", (c, cfg.attn_dim)),
        ("mid.attn.wv", (c, cfg.attn_dim)),
        ("up1.conv.k", (3, 3, c2 + c2, c1)), ("up1.conv.b", (c1,)), ("up1.time.w", (td, c1)),
        ("up2.conv.k", (3, 3, c1 + c1, c1)), ("up2.conv.b", (c1,)), ("up2.time.w", (td, c1)),
        ("head.k", (3, 3, c1, 1)), ("head.b", (1,)),
        ("cond.text_table", (cfg.n_classes, c)),
        ("cond.null_text", (c,)), ("cond.null_visual", (c,)),
        ("cond.fusion_w", (c, c)),
        ("cond.signal.w1", (cfg.curve_len, cfg.signal_hidden)),
        ("cond.signal.b1", (cfg.signal_hidden,)),
        ("cond.signal.w2", (cfg.signal_hidden, w)),
        ("cond.signal.b2", (w,)),
    ]


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    params: dict[str, np.ndarray] = {}
    for name, shape in param_specs(cfg):
        if name.endswith(".b") or name in ("cond.signal.b1", "cond.signal.b2"):
            params[name] = np.zeros(shape)
        elif name.endswith("time.w"):
            params[name] = np.zeros(shape)
        elif name == "head.k":
            params[name] = 0.01 * rng.standard_normal(shape)
        elif name == "cond.fusion_w":
            params[name] = FUSION_INIT_SCALE * np.eye(shape[0])
        elif name in ("cond.null_text", "cond.null_visual", "cond.text_table"):
            params[name] = 0.5 * rng.standard_normal(shape)
        elif name.endswith(".k"):
            fan_in = shape[0] * shape[1] * shape[2]
            params[name] = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        else:  # linear maps
            params[name] = rng.standard_normal(shape) / np.sqrt(shape[0])
    return params


def n_params(params: dict[str, np.ndarray]) -> int:
    return sum(v.size for v in params.values())


def cond_view(params: dict[str, np.ndarray]) -> ConditionParams:
    return ConditionParams(
        text_table=params["cond.text_table"],
        null_text=params["cond.null_text"],
        null_visual=params["cond.null_visual"],
        fusion_w=params["cond.fusion_w"],
        signal_w1=params["cond.signal.w1"], signal_b1=params["cond.signal.b1"],
        signal_w2=params["cond.signal.w2"], signal_b2=params["cond.signal.b2"])


# --------------------------------------------------------------------------
# batched condition tensors

@dataclass
class BatchCond:
    tags: np.ndarray            # (B,) int, -1 where null
    f_visual: np.ndarray        # (B, T_f, C), zeros where null
    f_mask: np.ndarray          # (B, T_f, C)
    visual_present: np.ndarray  # (B,) bool
    signal: np.ndarray          # (B, curve_len), zeros where null
    signal_present: np.ndarray  # (B,) bool


def batch_conditions(conds: Sequence[ConditionSet], cfg: ModelConfig) -> BatchCond:
    b = len(conds)
    t_f, c, L = cfg.n_frames_video, cfg.cond_dim, cfg.curve_len
    tags = np.full(b, -1, dtype=np.int64)
    f_visual = np.zeros((b, t_f, c))
    f_mask = np.zeros((b, t_f, c))
    visual_present = np.zeros(b, dtype=bool)
    signal = np.zeros((b, L))
    signal_present = np.zeros(b, dtype=bool)
    for i, cs in enumerate(conds):
        if cs.text is not None:
            if not 0 <= cs.text < cfg.n_classes:
                raise ValueError("unknown tag")
            tags[i] = cs.text
        if cs.visual is not None:
            if cs.visual.f_visual.shape != (t_f, c):
                raise ValueError("visual feature shape mismatch")
            f_visual[i] = cs.visual.f_visual
            f_mask[i] = cs.visual.f_mask
            visual_present[i] = True
        if cs.signal is not None:
            sig = np.asarray(cs.signal, dtype=np.float64)
            if sig.shape != (L,):
                raise ValueError("curve length mismatch")
            signal[i] = sig
            signal_present[i] = True
    return BatchCond(tags, f_visual, f_mask, visual_present, signal, signal_present)


# --------------------------------------------------------------------------
# primitive layers

def time_embedding(t_arr, dim: int) -> np.ndarray:
    """Sinusoidal embedding of the (1-indexed) timestep, shape (B, dim)."""
    t = np.atleast_1d(np.asarray(t_arr, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = t[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def grid_position_encoding(h: int, w: int, dim: int) -> np.ndarray:
    """Fixed sinusoidal encoding of each mid-grid position, shape (h*w, dim).

    Added to the attention queries so they can align the per-frame visual
    tokens (and the injected curve) with their time column; the conv path
    alone carries no absolute position.
    """
    half = dim // 2
    freqs = np.exp(-np.log(100.0) * np.arange(half) / max(half - 1, 1))
    cols = np.tile(np.arange(w, dtype=np.float64), h)  # column-major time index
    ang = cols[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def _im2col(x: np.ndarray, stride: int = 1) -> np.ndarray:
    """Gather 3x3 same-padded patches: (B, Ho, Wo, 9*Cin)."""
    b, h, w, ci = x.shape
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    ho, wo = h // stride, w // stride
    cols = np.empty((b, ho, wo, 9 * ci))
    k = 0
    for di in range(3):
        for dj in range(3):
            cols[..., k * ci:(k + 1) * ci] = xp[:, di:di + h:stride,
                                                dj:dj + w:stride, :]
            k += 1
    return cols


def _col_scatter(dcols: np.ndarray, x_shape: tuple, stride: int = 1) -> np.ndarray:
    """Adjoint of _im2col: scatter-add patch gradients back to the input."""
    b, h, w, ci = x_shape
    dxp = np.zeros((b, h + 2, w + 2, ci))
    k = 0
    for di in range(3):
        for dj in range(3):
            dxp[:, di:di + h:stride, dj:dj + w:stride, :] += \
                dcols[..., k * ci:(k + 1) * ci]
            k += 1
    return dxp[:, 1:h + 1, 1:w + 1, :]


def _conv_fwd(x: np.ndarray, k: np.ndarray, stride: int = 1):
    """3x3 convolution as one GEMM over gathered patches.

    Returns (out, cols); cols is reused by the backward pass.
    """
    co = k.shape[3]
    cols = _im2col(x, stride)
    out = cols @ k.reshape(-1, co)
    return out, cols


def _conv_back(cols: np.ndarray, x_shape: tuple, k: np.ndarray,
               dout: np.ndarray, stride: int = 1):
    ci, co = k.shape[2], k.shape[3]
    cols2 = cols.reshape(-1, 9 * ci)
    dout2 = dout.reshape(-1, co)
    dk = (cols2.T @ dout2).reshape(k.shape)
    dcols = (dout2 @ k.reshape(-1, co).T).reshape(cols.shape)
    dx = _col_scatter(dcols, x_shape, stride)
    return dx, dk, dout.sum(axis=(0, 1, 2))


def _silu(a: np.ndarray):
    # overflow-safe sigmoid
    s = np.empty_like(a)
    pos = a >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    s[~pos] = ea / (1.0 + ea)
    return a * s, s


def _silu_back(a: np.ndarray, s: np.ndarray, dh: np.ndarray) -> np.ndarray:
    return dh * s * (1.0 + a * (1.0 - s))


def _upsample2(x: np.ndarray) -> np.ndarray:
    return x.repeat(2, axis=1).repeat(2, axis=2)


def _upsample2_back(d: np.ndarray) -> np.ndarray:
    return d[:, 0::2, 0::2] + d[:, 0::2, 1::2] + d[:, 1::2, 0::2] + d[:, 1::2, 1::2]


# --------------------------------------------------------------------------
# forward / backward

def forward(params: dict[str, np.ndarray], z: np.ndarray, t_arr, bcond: BatchCond,
            cfg: ModelConfig, need_cache: bool = True):
    """Batched eps prediction; returns (eps_hat, cache-or-None)."""
    b = z.shape[0]
    cache: dict = {"bcond": bcond}

    # signal injection
    sig_mask = bcond.signal_present.astype(np.float64)
    hs_pre = bcond.signal @ params["cond.signal.w1"] + params["cond.signal.b1"]
    hs = np.tanh(hs_pre)
    tau = (hs @ params["cond.signal.w2"] + params["cond.signal.b2"]) * sig_mask[:, None]
    x = z + tau[:, None, :, None]

    # condition context: [text token | fused visual tokens]
    tags_safe = np.maximum(bcond.tags, 0)
    has_text = bcond.tags >= 0
    text_tok = np.where(has_text[:, None],
                        params["cond.text_table"][tags_safe],
                        params["cond.null_text"][None, :])
    gap = bcond.f_mask.mean(axis=1)                       # (B, C)
    chan = gap @ params["cond.fusion_w"]                  # (B, C)
    fused = bcond.f_mask * chan[:, None, :] + bcond.f_visual
    vis_tok = np.where(bcond.visual_present[:, None, None],
                       fused,
                       params["cond.null_visual"][None, None, :])
    ctx = np.concatenate([text_tok[:, None, :], vis_tok], axis=1)  # (B, 1+T_f, C)

    temb = time_embedding(t_arr, cfg.time_dim)            # (B, time_dim)

    def block(x_in, prefix):
        conv, cols = _conv_fwd(x_in, params[f"{prefix}.conv.k"])
        a = (conv + params[f"{prefix}.conv.b"]
             + (temb @ params[f"{prefix}.time.w"])[:, None, None, :])
        h, s = _silu(a)
        if need_cache:
            cache[f"{prefix}.cols"] = cols
            cache[f"{prefix}.xshape"] = x_in.shape
            cache[f"{prefix}.a"] = a
            cache[f"{prefix}.s"] = s
        return h

    h1 = block(x, "down1")
    p1c, p1cols = _conv_fwd(h1, params["down1.pool.k"], stride=2)
    p1a = p1c + params["down1.pool.b"]
    p1, p1s = _silu(p1a)
    h2 = block(p1, "down2")
    p2c, p2cols = _conv_fwd(h2, params["down2.pool.k"], stride=2)
    p2a = p2c + params["down2.pool.b"]
    p2, p2s = _silu(p2a)
    hm = block(p2, "mid")

    # mid-block cross-attention with residual; queries carry a fixed
    # positional code so tokens can be matched to time columns
    lq = hm.shape[1] * hm.shape[2]
    q2 = hm.reshape(b, lq, hm.shape[3])
    q2 = q2 + grid_position_encoding(hm.shape[1], hm.shape[2], hm.shape[3])[None]
    qp = q2 @ params["mid.attn.wq"]
    kp = ctx @ params["mid.attn.wk"]
    vp = ctx @ params["mid.attn.wv"]
    scores = qp @ np.swapaxes(kp, 1, 2) / np.sqrt(cfg.attn_dim)
    scores -= scores.max(axis=-1, keepdims=True)
    attn = np.exp(scores)
    attn /= attn.sum(axis=-1, keepdims=True)
    attn_out = attn @ vp
    m = hm + attn_out.reshape(hm.shape)

    u1 = _upsample2(m)
    c1 = np.concatenate([u1, h2], axis=3)
    h3 = block(c1, "up1")
    u2 = _upsample2(h3)
    c2 = np.concatenate([u2, h1], axis=3)
    h4 = block(c2, "up2")
    head, head_cols = _conv_fwd(h4, params["head.k"])
    out = head + params["head.b"]

    if not need_cache:
        return out, None
    cache.update(hs=hs, sig_mask=sig_mask, has_text=has_text,
                 tags_safe=tags_safe, gap=gap, ctx=ctx, temb=temb,
                 h1_shape=h1.shape, h2_shape=h2.shape, h3_shape=h3.shape,
                 h4_shape=h4.shape, p1cols=p1cols, p1a=p1a, p1s=p1s,
                 p2cols=p2cols, p2a=p2a, p2s=p2s, hm=hm, q2=q2, qp=qp, kp=kp,
                 vp=vp, attn=attn, head_cols=head_cols)
    return out, cache


def backward(params: dict[str, np.ndarray], cache: dict, d_out: np.ndarray,
             cfg: ModelConfig) -> dict[str, np.ndarray]:
    """Gradients of a scalar loss w.r.t. every parameter, given dLoss/d_out."""
    grads = {name: np.zeros_like(p) for name, p in params.items()}
    bcond: BatchCond = cache["bcond"]
    temb = cache["temb"]
    b = d_out.shape[0]

    def block_back(prefix, dh):
        a, s = cache[f"{prefix}.a"], cache[f"{prefix}.s"]
        da = _silu_back(a, s, dh)
        dx, dk, db = _conv_back(cache[f"{prefix}.cols"], cache[f"{prefix}.xshape"],
                                params[f"{prefix}.conv.k"], da)
        grads[f"{prefix}.conv.k"] += dk
        grads[f"{prefix}.conv.b"] += db
        grads[f"{prefix}.time.w"] += temb.T @ da.sum(axis=(1, 2))
        return dx

    dh4, dk, db = _conv_back(cache["head_cols"], cache["h4_shape"],
                             params["head.k"], d_out)
    grads["head.k"] += dk
    grads["head.b"] += db

    dc2 = block_back("up2", dh4)
    c1w = cache["h3_shape"][3]
    du2, dh1_skip = dc2[..., :c1w], dc2[..., c1w:]
    dh3 = _upsample2_back(du2)
    dc1 = block_back("up1", dh3)
    c2w = cache["hm"].shape[3]
    du1, dh2_skip = dc1[..., :c2w], dc1[..., c2w:]
    dm = _upsample2_back(du1)

    # attention backward (residual add)
    dhm = dm.copy()
    d_attn_out = dm.reshape(cache["q2"].shape[0], -1, cache["hm"].shape[3])
    attn, qp, kp, vp, q2, ctx = (cache["attn"], cache["qp"], cache["kp"],
                                 cache["vp"], cache["q2"], cache["ctx"])
    d_attn = d_attn_out @ np.swapaxes(vp, 1, 2)
    dvp = np.swapaxes(attn, 1, 2) @ d_attn_out
    dscores = (d_attn - (d_attn * attn).sum(axis=-1, keepdims=True)) * attn
    dscores /= np.sqrt(cfg.attn_dim)
    dqp = dscores @ kp
    dkp = np.swapaxes(dscores, 1, 2) @ qp
    grads["mid.attn.wq"] += np.einsum("blc,bld->cd", q2, dqp)
    grads["mid.attn.wk"] += np.einsum("blc,bld->cd", ctx, dkp)
    grads["mid.attn.wv"] += np.einsum("blc,bld->cd", ctx, dvp)
    dq2 = dqp @ params["mid.attn.wq"].T
    dctx = dkp @ params["mid.attn.wk"].T + dvp @ params["mid.attn.wv"].T
    dhm += dq2.reshape(dhm.shape)

    dp2 = block_back("mid", dhm)
    dp2a = _silu_back(cache["p2a"], cache["p2s"], dp2)
    dh2, dk, db = _conv_back(cache["p2cols"], cache["h2_shape"],
                             params["down2.pool.k"], dp2a, stride=2)
    grads["down2.pool.k"] += dk
    grads["down2.pool.b"] += db
    dh2 += dh2_skip
    dp1 = block_back("down2", dh2)
    dp1a = _silu_back(cache["p1a"], cache["p1s"], dp1)
    dh1, dk, db = _conv_back(cache["p1cols"], cache["h1_shape"],
                             params["down1.pool.k"], dp1a, stride=2)
    grads["down1.pool.k"] += dk
    grads["down1.pool.b"] += db
    dh1 += dh1_skip
    dx = block_back("down1", dh1)

    # context backward
    d_text_tok = dctx[:, 0, :]
    d_vis_tok = dctx[:, 1:, :]
    has_text = cache["has_text"]
    if has_text.any():
        np.add.at(grads["cond.text_table"], cache["tags_safe"][has_text],
                  d_text_tok[has_text])
    if (~has_text).any():
        grads["cond.null_text"] += d_text_tok[~has_text].sum(axis=0)
    vis = bcond.visual_present
    if (~vis).any():
        grads["cond.null_visual"] += d_vis_tok[~vis].sum(axis=(0, 1))
    d_fused = d_vis_tok * vis[:, None, None]
    d_chan = (d_fused * bcond.f_mask).sum(axis=1)       # (B, C)
    grads["cond.fusion_w"] += cache["gap"].T @ d_chan

    # signal backward
    d_tau = dx.sum(axis=(1, 3)) * cache["sig_mask"][:, None]   # (B, w)
    grads["cond.signal.w2"] += cache["hs"].T @ d_tau
    grads["cond.signal.b2"] += d_tau.sum(axis=0)
    dhs = d_tau @ params["cond.signal.w2"].T
    dpre = dhs * (1.0 - cache["hs"] ** 2)
    grads["cond.signal.w1"] += bcond.signal.T @ dpre
    grads["cond.signal.b1"] += dpre.sum(axis=0)
    return grads


def denoise(z_t: np.ndarray, t: int, cond: ConditionSet,
            params: dict[str, np.ndarray], cfg: ModelConfig) -> np.ndarray:
    """Single-example eps prediction (deterministic given inputs)."""
    if z_t.shape != cfg.latent_shape:
        raise ValueError("latent shape mismatch")
    bcond = batch_conditions([cond], cfg)
    out, _ = forward(params, z_t[None], np.array([t]), bcond, cfg, need_cache=False)
    return out[0]


def make_denoise_fn(params: dict[str, np.ndarray], cfg: ModelConfig):
    """Adapter for diffusion.sample: evaluates several condition branches
    of the same latent as one batched forward pass."""
    def fn(zt: np.ndarray, t: int, conds: Sequence[ConditionSet]) -> np.ndarray:
        z = np.repeat(zt[None], len(conds), axis=0)
        bcond = batch_conditions(conds, cfg)
        out, _ = forward(params, z, np.full(len(conds), t), bcond, cfg, need_cache=False)
        return out
    return fn


# --------------------------------------------------------------------------
# training loss

@dataclass
class TrainItem:
    """One training example with its normalized latent and condition inputs."""

    z0: np.ndarray        # (h, w, 1)
    tag: int
    f_visual: np.ndarray  # (T_f, C)
    f_mask: np.ndarray    # (T_f, C)
    curve: np.ndarray     # (curve_len,)


@dataclass
class BatchDraws:
    """Frozen per-item randomness so the loss is deterministic given params."""

    t: np.ndarray            # (B,) ints in 1..T
    eps: np.ndarray          # (B, h, w, 1)
    drop_text: np.ndarray    # (B,) bool
    drop_visual: np.ndarray
    drop_signal: np.ndarray


def draw_batch(rng: np.random.Generator, n: int, T: int,
               shape: tuple[int, ...], p_drop: float = 0.1) -> BatchDraws:
    return BatchDraws(
        t=rng.integers(1, T + 1, size=n),
        eps=rng.standard_normal((n,) + shape),
        drop_text=rng.random(n) < p_drop,
        drop_visual=rng.random(n) < p_drop,
        drop_signal=rng.random(n) < p_drop)


def conditions_for(items: Sequence[TrainItem], draws: BatchDraws) -> list[ConditionSet]:
    conds = []
    for i, item in enumerate(items):
        conds.append(ConditionSet(
            text=None if draws.drop_text[i] else item.tag,
            visual=None if draws.drop_visual[i]
            else VisualCondition(item.f_visual, item.f_mask),
            signal=None if draws.drop_signal[i] else item.curve))
    return conds


def loss_and_grad(params: dict[str, np.ndarray], items: Sequence[TrainItem],
                  draws: BatchDraws, sched: NoiseSchedule, cfg: ModelConfig,
                  want_grad: bool = True):
    """Mean squared eps-prediction error over the batch; optionally grads."""
    if not items:
        raise ValueError("empty batch")
    z0 = np.stack([it.z0 for it in items])
    zt = q_sample(z0, draws.t, draws.eps, sched)
    bcond = batch_conditions(conditions_for(items, draws), cfg)
    out, cache = forward(params, zt, draws.t, bcond, cfg, need_cache=want_grad)
    resid = out - draws.eps
    loss = float(np.mean(resid ** 2))
    if not want_grad:
        return loss, None
    d_out = 2.0 * resid / resid.size
    return loss, backward(params, cache, d_out, cfg)
