"""Contrastive objectives with analytic gradients.

Clip-level and frame-level pairwise sigmoid losses, their sum, and the
softmax-normalized InfoNCE baseline, all over cosine similarities of raw
(unnormalized) embeddings. Gradients are derived by hand and verified
against central finite differences (see gradient_check).

The sigmoid losses use the exponent z * (-temp * s + bias) with z = +1 for
matched pairs and -1 otherwise. Note the bias enters with a plus sign
inside the exponent; the common SigLIP-style convention z * -(temp * s +
bias) is available via bias negation by the caller.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

log = logging.getLogger(__name__)


class LossError(Exception):
    pass


@dataclass(frozen=True)
class LossParams:
    """Temperature/bias pairs for the clip-level and frame-level losses."""

    t: float = 10.0
    b: float = -10.0
    t_frame: float = 10.0
    b_frame: float = -10.0

    def __post_init__(self):
        for name in ("t", "b", "t_frame", "b_frame"):
            if not np.isfinite(getattr(self, name)):
                raise LossError(f"non-finite loss parameter {name}")
        if self.t <= 0 or self.t_frame <= 0:
            warnings.warn("non-positive temperature", stacklevel=2)


@dataclass
class EmbeddingBatch:
    """All embedding matrices one batch of clips needs for the objectives.

    G: (B, d) global audio; T: (B, d) captions; F: (B, L, d) frame audio;
    P: (B, N, d) phrases; Y: (B, N, L) binary frame labels; match: (B, B)
    pairing matrix (identity when None); phrase_counts: per-clip number of
    real phrases (clips with 0 contribute nothing to the frame loss).
    """

    G: np.ndarray
    T: np.ndarray
    F: np.ndarray
    P: np.ndarray
    Y: np.ndarray
    match: np.ndarray | None = None
    phrase_counts: np.ndarray | None = None

    def __post_init__(self):
        self.G = np.asarray(self.G, dtype=np.float64)
        self.T = np.asarray(self.T, dtype=np.float64)
        self.F = np.asarray(self.F, dtype=np.float64)
        self.P = np.asarray(self.P, dtype=np.float64)
        self.Y = np.asarray(self.Y)
        b, d = self.G.shape
        if self.T.shape != (b, d):
            raise LossError(f"T shape {self.T.shape} != {(b, d)}")
        if self.F.ndim != 3 or self.F.shape[0] != b or self.F.shape[2] != d:
            raise LossError(f"F shape {self.F.shape} inconsistent with (B={b}, d={d})")
        n, l = self.P.shape[1], self.F.shape[1]
        if self.P.shape != (b, n, d):
            raise LossError(f"P shape {self.P.shape} inconsistent")
        if self.Y.shape != (b, n, l):
            raise LossError(f"Y shape {self.Y.shape} != {(b, n, l)}")
        if not np.isin(self.Y, (0, 1)).all():
            raise LossError("Y entries must be 0 or 1")
        if self.match is None:
            self.match = np.eye(b)
        if self.phrase_counts is None:
            self.phrase_counts = np.full(b, n, dtype=np.int64)


@dataclass(frozen=True)
class LossOutput:
    value: float
    grads: dict = field(default_factory=dict)


def _normalize_rows(x: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=-1)
    bad = np.argwhere(norms == 0.0)
    if bad.size:
        raise LossError(f"zero-norm row {tuple(bad[0])} in {what}")
    return x / norms[..., None], norms


def cosine_matrix(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Pairwise cosine similarities of the rows of x (m,d) and w (n,d)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    u, _ = _normalize_rows(x, "x")
    v, _ = _normalize_rows(w, "w")
    return np.clip(u @ v.T, -1.0, 1.0)


def _cosine_backward(ds: np.ndarray, x: np.ndarray, w: np.ndarray):
    """Adjoints of x and w given the adjoint of their cosine matrix.

    Works for 2-D ((m,d),(n,d), ds (m,n)) and batched 3-D inputs with ds of
    shape (..., m, n).
    """
    u, xn = _normalize_rows(x, "x")
    v, wn = _normalize_rows(w, "w")
    du = ds @ v
    dv = np.swapaxes(ds, -1, -2) @ u
    dx = (du - (du * u).sum(axis=-1, keepdims=True) * u) / xn[..., None]
    dw = (dv - (dv * v).sum(axis=-1, keepdims=True) * v) / wn[..., None]
    return dx, dw


def _check_finite(value: float, what: str) -> None:
    if not np.isfinite(value):
        raise LossError(f"non-finite value in {what}")


def clip_sigmoid_loss(g: np.ndarray, t: np.ndarray, match: np.ndarray | None,
                      temp: float, bias: float,
                      siglip_convention: bool = False) -> LossOutput:
    """Pairwise sigmoid loss over all audio-caption pairs in the batch.

    value = (1/B) sum_ij softplus(z_ij * (-temp * s_ij + bias)),
    z = +1 on matched pairs, -1 elsewhere. siglip_convention=True flips the
    bias sign in the exponent, giving the common z * -(temp * s + bias) form.
    """
    g = np.asarray(g, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    b = g.shape[0]
    if match is None:
        match = np.eye(b)
    bias_sign = -1.0 if siglip_convention else 1.0
    z = np.where(np.asarray(match) > 0, 1.0, -1.0)
    u, _ = _normalize_rows(g, "G")
    v, _ = _normalize_rows(t, "T")
    s = u @ v.T
    a = z * (-temp * s + bias_sign * bias)
    value = float(np.logaddexp(0.0, a).sum() / b)
    _check_finite(value, "clip sigmoid loss")

    da = expit(a) / b
    ds = da * z * (-temp)
    dg, dt_emb = _cosine_backward(ds, g, t)
    d_temp = float((da * z * (-s)).sum())
    d_bias = bias_sign * float((da * z).sum())
    return LossOutput(value=value, grads={"G": dg, "T": dt_emb, "t": d_temp, "b": d_bias})


def frame_sigmoid_loss(f: np.ndarray, p: np.ndarray, y: np.ndarray,
                       temp: float, bias: float,
                       phrase_counts: np.ndarray | None = None,
                       siglip_convention: bool = False) -> LossOutput:
    """Frame-phrase sigmoid loss averaged over B*N*L pair terms.

    s[i,k,l] = cosine(frame l of clip i, phrase k of clip i); z = +1 where
    Y = 1. Clips with phrase_counts[i] = 0 contribute nothing and are
    excluded from the normalizer; trailing phrases beyond the count are
    masked out likewise.
    """
    f = np.asarray(f, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y)
    b, l, _ = f.shape
    n = p.shape[1]
    if n == 0 or b == 0:
        return LossOutput(value=0.0, grads={"F": np.zeros_like(f), "P": np.zeros_like(p),
                                            "t": 0.0, "b": 0.0})
    if phrase_counts is None:
        phrase_counts = np.full(b, n, dtype=np.int64)
    bias_sign = -1.0 if siglip_convention else 1.0
    mask = (np.arange(n)[None, :] < np.asarray(phrase_counts)[:, None]).astype(np.float64)
    denom = float(mask.sum() * l)
    if denom == 0.0:
        return LossOutput(value=0.0, grads={"F": np.zeros_like(f), "P": np.zeros_like(p),
                                            "t": 0.0, "b": 0.0})

    u, _ = _normalize_rows(p, "P")   # (B, N, d)
    v, _ = _normalize_rows(f, "F")   # (B, L, d)
    s = u @ np.swapaxes(v, 1, 2)     # (B, N, L)
    z = np.where(y > 0, 1.0, -1.0)
    a = z * (-temp * s + bias_sign * bias)
    m = mask[:, :, None]
    value = float((np.logaddexp(0.0, a) * m).sum() / denom)
    _check_finite(value, "frame sigmoid loss")

    da = expit(a) * m / denom
    ds = da * z * (-temp)
    dp, df = _cosine_backward(ds, p, f)
    d_temp = float((da * z * (-s)).sum())
    d_bias = bias_sign * float((da * z).sum())
    return LossOutput(value=value, grads={"F": df, "P": dp, "t": d_temp, "b": d_bias})


def total_loss(batch: EmbeddingBatch, params: LossParams) -> LossOutput:
    """Sum of the clip-level and frame-level sigmoid losses."""
    clip = clip_sigmoid_loss(batch.G, batch.T, batch.match, params.t, params.b)
    frame = frame_sigmoid_loss(batch.F, batch.P, batch.Y, params.t_frame,
                               params.b_frame, batch.phrase_counts)
    grads = {
        "G": clip.grads["G"], "T": clip.grads["T"],
        "F": frame.grads["F"], "P": frame.grads["P"],
        "t": clip.grads["t"], "b": clip.grads["b"],
        "t_frame": frame.grads["t"], "b_frame": frame.grads["b"],
    }
    return LossOutput(value=clip.value + frame.value, grads=grads)


def infonce_loss(g: np.ndarray, t: np.ndarray, temp: float) -> LossOutput:
    """Symmetric softmax contrastive loss with diagonal positives.

    value = -(1/2B) sum_i [log softmax_row(t*s)_ii + log softmax_col(t*s)_ii],
    stabilized by per-row/column max subtraction.
    """
    g = np.asarray(g, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    b = g.shape[0]
    u, _ = _normalize_rows(g, "G")
    v, _ = _normalize_rows(t, "T")
    s = u @ v.T
    logits = temp * s

    def log_softmax(m, axis):
        shifted = m - m.max(axis=axis, keepdims=True)
        return shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    ls_rows = log_softmax(logits, 1)
    ls_cols = log_softmax(logits, 0)
    diag = np.arange(b)
    value = float(-(ls_rows[diag, diag].sum() + ls_cols[diag, diag].sum()) / (2 * b)) + 0.0
    _check_finite(value, "InfoNCE loss")

    sm_rows = np.exp(ls_rows)
    sm_cols = np.exp(ls_cols)
    eye = np.eye(b)
    d_logits = (sm_rows + sm_cols - 2 * eye) / (2 * b)
    ds = temp * d_logits
    dg, dt_emb = _cosine_backward(ds, g, t)
    d_temp = float((s * d_logits).sum())
    return LossOutput(value=value, grads={"G": dg, "T": dt_emb, "t": d_temp})


def _evaluate(kind: str, batch: EmbeddingBatch, params: LossParams) -> LossOutput:
    if kind == "clip":
        return clip_sigmoid_loss(batch.G, batch.T, batch.match, params.t, params.b)
    if kind == "frame":
        return frame_sigmoid_loss(batch.F, batch.P, batch.Y, params.t_frame,
                                  params.b_frame, batch.phrase_counts)
    if kind == "total":
        return total_loss(batch, params)
    if kind == "infonce":
        return infonce_loss(batch.G, batch.T, params.t)
    raise LossError(f"unknown loss kind {kind!r}")


compute_loss = _evaluate

_INPUTS = {
    "clip": ("G", "T"),
    "frame": ("F", "P"),
    "total": ("G", "T", "F", "P"),
    "infonce": ("G", "T"),
}
_SCALARS = {
    "clip": ("t", "b"),
    "frame": ("t_frame", "b_frame"),
    "total": ("t", "b", "t_frame", "b_frame"),
    "infonce": ("t",),
}
# LossParams field -> gradient key inside the per-loss outputs.
_SCALAR_GRAD_KEY = {"t": "t", "b": "b", "t_frame": "t_frame", "b_frame": "b_frame"}


def gradient_check(kind: str, batch: EmbeddingBatch, params: LossParams,
                   epsilon: float = 1e-5) -> float:
    """Worst discrepancy between analytic and central-difference gradients.

    Per coordinate the error is |analytic - numeric| / max(1, |analytic|,
    |numeric|), so tiny gradients are compared absolutely rather than
    amplifying finite-difference noise.
    """
    analytic = _evaluate(kind, batch, params)

    def value_with(arrays: dict, scalars: dict) -> float:
        b2 = EmbeddingBatch(G=arrays.get("G", batch.G), T=arrays.get("T", batch.T),
                            F=arrays.get("F", batch.F), P=arrays.get("P", batch.P),
                            Y=batch.Y, match=batch.match,
                            phrase_counts=batch.phrase_counts)
        p2 = LossParams(t=scalars.get("t", params.t), b=scalars.get("b", params.b),
                        t_frame=scalars.get("t_frame", params.t_frame),
                        b_frame=scalars.get("b_frame", params.b_frame))
        return _evaluate(kind, b2, p2).value

    worst = 0.0
    for name in _INPUTS[kind]:
        base = np.array(getattr(batch, name), dtype=np.float64)
        grad = analytic.grads[name] if kind != "total" else analytic.grads[name]
        flat = base.reshape(-1)
        gflat = np.asarray(grad).reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + epsilon
            fp = value_with({name: base}, {})
            flat[i] = orig - epsilon
            fm = value_with({name: base}, {})
            flat[i] = orig
            numeric = (fp - fm) / (2 * epsilon)
            err = abs(gflat[i] - numeric) / max(1.0, abs(gflat[i]), abs(numeric))
            worst = max(worst, err)

    for name in _SCALARS[kind]:
        key = _SCALAR_GRAD_KEY[name]
        if kind in ("clip", "frame"):
            key = "t" if name in ("t", "t_frame") else "b"
        g_scalar = analytic.grads[key]
        base = getattr(params, name)
        fp = value_with({}, {name: base + epsilon})
        fm = value_with({}, {name: base - epsilon})
        numeric = (fp - fm) / (2 * epsilon)
        err = abs(g_scalar - numeric) / max(1.0, abs(g_scalar), abs(numeric))
        worst = max(worst, err)
    return worst
