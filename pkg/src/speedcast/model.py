"""The forecasting network: masked graph convolution feeding a GRU
sequence-to-sequence model with attention.

One shared set of GRU/attention/output weights serves every link; only the
graph-convolution matrix has link-specific rows, and those are trainable
only where the hop mask is 1 (structurally zero elsewhere). The decoder is
driven by time-of-day and historical statistics, never by ground truth or
its own predictions, so training and inference see identically distributed
decoder inputs.

Speeds enter the network z-scored per link; predictions are denormalized
back to km/h with the target link's parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .features import Normalizer, Sample
from .graph import HopMask

ENCODER_INPUT = 3  # fused neighbor speed, time-of-day, weekday dummy
DECODER_INPUT = 6  # time-of-day plus the five historical statistics


@dataclass(eq=False)
class GruWeights:
    """Update/reset/candidate weights of one GRU cell."""

    w_z: Tensor
    w_r: Tensor
    w_c: Tensor
    b_z: Tensor
    b_r: Tensor
    b_c: Tensor

    def named(self, prefix: str) -> list[tuple[str, Tensor]]:
        return [
            (f"{prefix}.w_z", self.w_z),
            (f"{prefix}.w_r", self.w_r),
            (f"{prefix}.w_c", self.w_c),
            (f"{prefix}.b_z", self.b_z),
            (f"{prefix}.b_r", self.b_r),
            (f"{prefix}.b_c", self.b_c),
        ]


@dataclass(eq=False)
class ModelParams:
    """All trainable tensors plus the hop mask that gates the graph conv."""

    hidden: int
    mask: HopMask
    w_gc: Tensor
    encoder: GruWeights
    decoder: GruWeights
    w_f: Tensor
    q: Tensor
    w_h: Tensor
    w_v: Tensor
    b_v: Tensor

    def trainables(self) -> list[tuple[str, Tensor]]:
        return (
            [("w_gc", self.w_gc)]
            + self.encoder.named("encoder")
            + self.decoder.named("decoder")
            + [("w_f", self.w_f), ("q", self.q), ("w_h", self.w_h), ("w_v", self.w_v), ("b_v", self.b_v)]
        )

    def zero_grad(self) -> None:
        ad.zero_grad(t for _, t in self.trainables())

    def apply_mask(self) -> None:
        """Re-assert the structural zeros of the graph-conv matrix."""
        self.w_gc.data[self.mask.mask == 0] = 0.0

    def copy_values(self) -> dict[str, np.ndarray]:
        return {name: t.data.copy() for name, t in self.trainables()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        for name, t in self.trainables():
            arr = np.asarray(values[name], dtype=np.float64)
            if arr.shape != t.data.shape:
                raise ValueError(f"parameter {name}: shape {arr.shape} != expected {t.data.shape}")
            t.data[...] = arr


def _uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, shape)


def _init_gru(rng: np.random.Generator, hidden: int, inputs: int) -> GruWeights:
    cols = hidden + inputs
    return GruWeights(
        w_z=Tensor(_uniform(rng, (hidden, cols), cols)),
        w_r=Tensor(_uniform(rng, (hidden, cols), cols)),
        w_c=Tensor(_uniform(rng, (hidden, cols), cols)),
        b_z=Tensor(np.zeros(hidden)),
        b_r=Tensor(np.zeros(hidden)),
        b_c=Tensor(np.zeros(hidden)),
    )


def init_params(mask: HopMask, hidden: int, seed: int) -> ModelParams:
    """Seeded initialization.

    Graph-conv rows start as the mean over their neighborhood (masked
    entries of row i are 1/|neighbors of i|), so the convolution begins as
    a local average; everything else is uniform in +-1/sqrt(fan_in) with
    zero biases.
    """
    if hidden < 1:
        raise ValueError(f"hidden size must be >= 1, got {hidden}")
    rng = np.random.default_rng(seed)
    mask_f = mask.mask.astype(np.float64)
    w_gc = mask_f / mask_f.sum(axis=1, keepdims=True)
    return ModelParams(
        hidden=hidden,
        mask=mask,
        w_gc=Tensor(w_gc),
        encoder=_init_gru(rng, hidden, ENCODER_INPUT),
        decoder=_init_gru(rng, hidden, DECODER_INPUT),
        w_f=Tensor(_uniform(rng, (hidden, 2 * hidden), 2 * hidden)),
        q=Tensor(_uniform(rng, (hidden,), hidden)),
        w_h=Tensor(_uniform(rng, (hidden, 2 * hidden), 2 * hidden)),
        w_v=Tensor(_uniform(rng, (1, hidden), hidden)),
        b_v=Tensor(np.zeros(1)),
    )


def graph_convolve(w_gc: np.ndarray, mask: np.ndarray, v_t: np.ndarray, i: int) -> float:
    """Spatially fused speed of link i: masked row i of W dotted with V_t.

    Accumulates over mask-selected entries in ascending index order, so the
    result is bit-identical to an explicit loop over the neighbor set.
    """
    if not 0 <= i < mask.shape[0]:
        raise IndexError(f"link index {i} out of range for {mask.shape[0]} links")
    if len(v_t) != mask.shape[1]:
        raise ValueError(f"speed vector length {len(v_t)} != link count {mask.shape[1]}")
    acc = 0.0
    for j in np.flatnonzero(mask[i]):
        acc += float(w_gc[i, j]) * float(v_t[j])
    return acc


def gru_cell(w: GruWeights, h_prev: Tensor, x: Tensor) -> Tensor:
    """One GRU step: update/reset gates, candidate, convex blend."""
    hx = ad.concat(h_prev, x)
    z = ad.sigmoid(ad.matvec(w.w_z, hx) + w.b_z)
    r = ad.sigmoid(ad.matvec(w.w_r, hx) + w.b_r)
    c = ad.tanh_act(ad.matvec(w.w_c, ad.concat(r * h_prev, x)) + w.b_c)
    return (1.0 - z) * h_prev + z * c


def encode(params: ModelParams, sample: Sample, normalizer: Normalizer) -> list[Tensor]:
    """Run the encoder over the look-back window; returns all hidden states.

    The initial hidden state is zero. Each step's input is the masked
    graph convolution of that step's (normalized) neighbor speeds plus the
    scaled time-of-day index and the weekday dummy.
    """
    speeds = normalizer.normalize_speeds(sample.nbr_links, sample.enc_speeds)
    tods = normalizer.scale_tod(sample.enc_tod.astype(np.float64))
    h = Tensor(np.zeros(params.hidden))
    states: list[Tensor] = []
    for step in range(sample.lookback + 1):
        w_row = ad.take_row(params.w_gc, sample.link, sample.nbr_links)
        fused = ad.dot(w_row, Tensor(speeds[step]))
        x = ad.concat(fused, Tensor([tods[step], sample.daytype]))
        h = gru_cell(params.encoder, h, x)
        states.append(h)
    return states


def attention_step(params: ModelParams, enc_states: Sequence[Tensor], h_dec: Tensor) -> tuple[Tensor, Tensor]:
    """Score every encoder state against the decoder state.

    Returns (weights, context): softmax-normalized weights over all
    encoder positions and their weighted sum of encoder states.
    """
    scores = [
        ad.dot(params.q, ad.tanh_act(ad.matvec(params.w_f, ad.concat(h_dec, h_enc))))
        for h_enc in enc_states
    ]
    weights = ad.softmax(ad.concat(*scores))
    context = ad.matvec(ad.transpose(ad.stack_rows(enc_states)), weights)
    return weights, context


@dataclass(eq=False)
class ForwardTrace:
    """Everything one forward pass produced.

    Numpy views for inspection and metrics, plus the live prediction
    tensors so a loss can be attached for training.
    """

    enc_states: np.ndarray
    dec_states: np.ndarray
    attention: np.ndarray
    preds_norm: np.ndarray
    preds_kmh: np.ndarray
    pred_tensors: list[Tensor]


def decode(
    params: ModelParams,
    sample: Sample,
    context: Tensor,
    enc_states: Sequence[Tensor],
    normalizer: Normalizer,
) -> tuple[list[Tensor], list[Tensor], list[Tensor]]:
    """Run the decoder over the horizon.

    Returns (predictions, attention rows, decoder states); predictions are
    size-1 tensors in normalized units. The decoder consumes only the
    exogenous statistics vectors; targets never enter.
    """
    exog = sample.dec_exog.copy()
    exog[:, 0] = normalizer.scale_tod(exog[:, 0])
    exog[:, 1:] = normalizer.normalize_speed(sample.link, exog[:, 1:])
    h = context
    preds: list[Tensor] = []
    attn_rows: list[Tensor] = []
    dec_states: list[Tensor] = []
    for j in range(sample.horizon):
        h = gru_cell(params.decoder, h, Tensor(exog[j]))
        weights, attn_ctx = attention_step(params, enc_states, h)
        blended = ad.tanh_act(ad.matvec(params.w_h, ad.concat(attn_ctx, h)))
        preds.append(ad.matvec(params.w_v, blended) + params.b_v)
        attn_rows.append(weights)
        dec_states.append(h)
    return preds, attn_rows, dec_states


def forward(params: ModelParams, sample: Sample, normalizer: Normalizer) -> ForwardTrace:
    """Full forward pass for one sample."""
    enc_states = encode(params, sample, normalizer)
    context = enc_states[-1]
    preds, attn_rows, dec_states = decode(params, sample, context, enc_states, normalizer)
    preds_norm = np.array([p.item() for p in preds])
    return ForwardTrace(
        enc_states=np.stack([h.data for h in enc_states]),
        dec_states=np.stack([h.data for h in dec_states]),
        attention=np.stack([a.data for a in attn_rows]),
        preds_norm=preds_norm,
        preds_kmh=normalizer.denormalize(sample.link, preds_norm),
        pred_tensors=preds,
    )


def loss_mae(pred_tensors: Sequence[Tensor], targets: np.ndarray) -> Tensor:
    """Mean absolute error across the horizon, as a size-1 tensor."""
    if len(pred_tensors) != len(targets):
        raise ValueError(f"horizon mismatch: {len(pred_tensors)} predictions vs {len(targets)} targets")
    if len(targets) == 0:
        raise ValueError("loss needs at least one horizon step")
    diff = ad.concat(*pred_tensors) - Tensor(np.asarray(targets, dtype=np.float64))
    return ad.total(ad.absolute(diff)) * (1.0 / len(targets))


def predict(params: ModelParams, sample: Sample, normalizer: Normalizer) -> np.ndarray:
    """Raw km/h predictions for one sample."""
    return forward(params, sample, normalizer).preds_kmh
