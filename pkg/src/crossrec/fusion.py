"""The learnable fusion network and its exact gradients.

A genre vector is projected into the text-embedding space (p = W_g g + b_g),
concatenated with the text embedding, and passed through one ReLU layer
(f = relu(W_f [e; p] + b_f)). Dimensions are parameterized so the same code
path runs at full size (768/50) and at the reduced sizes the gradient checks
use. All operations accept a single vector or a batch of row vectors.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .binio import Reader, Writer, fnv1a64
from .errors import CorruptFile, ShapeMismatch

MODEL_MAGIC = b"LFRMDL1\x00"

DEFAULT_TEXT_DIM = 768
DEFAULT_GENRE_DIM = 50


@dataclass(eq=False)
class FusionParameters:
    w_g: np.ndarray  # (text_dim, genre_dim)
    b_g: np.ndarray  # (text_dim,)
    w_f: np.ndarray  # (text_dim, 2 * text_dim)
    b_f: np.ndarray  # (text_dim,)
    seed: int = 0
    epochs_trained: int = 0

    @property
    def text_dim(self) -> int:
        return self.w_g.shape[0]

    @property
    def genre_dim(self) -> int:
        return self.w_g.shape[1]

    def blocks(self) -> dict[str, np.ndarray]:
        return {"w_g": self.w_g, "b_g": self.b_g, "w_f": self.w_f, "b_f": self.b_f}


@dataclass(eq=False)
class FusionGradients:
    w_g: np.ndarray
    b_g: np.ndarray
    w_f: np.ndarray
    b_f: np.ndarray

    def blocks(self) -> dict[str, np.ndarray]:
        return {"w_g": self.w_g, "b_g": self.b_g, "w_f": self.w_f, "b_f": self.b_f}


def init_params(
    seed: int, text_dim: int = DEFAULT_TEXT_DIM, genre_dim: int = DEFAULT_GENRE_DIM
) -> FusionParameters:
    """Glorot-uniform weights, zero biases; bit-deterministic per seed."""
    rng = np.random.default_rng(seed)
    lim_g = np.sqrt(6.0 / (genre_dim + text_dim))
    lim_f = np.sqrt(6.0 / (2 * text_dim + text_dim))
    return FusionParameters(
        w_g=rng.uniform(-lim_g, lim_g, size=(text_dim, genre_dim)),
        b_g=np.zeros(text_dim),
        w_f=rng.uniform(-lim_f, lim_f, size=(text_dim, 2 * text_dim)),
        b_f=np.zeros(text_dim),
        seed=seed,
    )


def _check_last_dim(name: str, arr: np.ndarray, expected: int) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim not in (1, 2) or arr.shape[-1] != expected:
        raise ShapeMismatch(
            f"{name}: expected trailing dimension {expected}, got shape {arr.shape}"
        )
    return arr


def project_genre(params: FusionParameters, gv: np.ndarray) -> np.ndarray:
    """Affine map of genre vectors into the text-embedding space."""
    gv = _check_last_dim("gv", gv, params.genre_dim)
    return gv @ params.w_g.T + params.b_g


def fuse(params: FusionParameters, e_d: np.ndarray, p_g: np.ndarray) -> np.ndarray:
    """ReLU fusion layer over the concatenation [text; projected genre]."""
    e_d = _check_last_dim("e_d", e_d, params.text_dim)
    p_g = _check_last_dim("p_g", p_g, params.text_dim)
    x = np.concatenate([e_d, p_g], axis=-1)
    z = x @ params.w_f.T + params.b_f
    return np.maximum(z, 0.0)


def forward(params: FusionParameters, e_d: np.ndarray, gv: np.ndarray) -> np.ndarray:
    return fuse(params, e_d, project_genre(params, gv))


def backward(
    params: FusionParameters,
    e_d: np.ndarray,
    gv: np.ndarray,
    upstream_grad: np.ndarray,
) -> tuple[FusionGradients, np.ndarray]:
    """Exact gradients of the forward pass; ReLU subgradient at 0 is 0.

    upstream_grad is dLoss/dOutput with the same leading shape as the inputs;
    batched inputs accumulate (sum) parameter gradients over the batch.
    Returns the parameter gradients and dLoss/d(e_d).
    """
    e_d = _check_last_dim("e_d", e_d, params.text_dim)
    gv = _check_last_dim("gv", gv, params.genre_dim)
    upstream = _check_last_dim("upstream_grad", upstream_grad, params.text_dim)
    squeeze = e_d.ndim == 1
    e2 = np.atleast_2d(e_d)
    g2 = np.atleast_2d(gv)
    u2 = np.atleast_2d(upstream)
    if not (e2.shape[0] == g2.shape[0] == u2.shape[0]):
        raise ShapeMismatch(
            f"batch sizes differ: e_d {e2.shape[0]}, gv {g2.shape[0]}, "
            f"upstream {u2.shape[0]}"
        )

    p_g = g2 @ params.w_g.T + params.b_g
    x = np.concatenate([e2, p_g], axis=-1)
    z = x @ params.w_f.T + params.b_f
    dz = np.where(z > 0.0, u2, 0.0)

    d_wf = dz.T @ x
    d_bf = dz.sum(axis=0)
    dx = dz @ params.w_f
    t = params.text_dim
    d_ed = dx[:, :t]
    d_pg = dx[:, t:]
    d_wg = d_pg.T @ g2
    d_bg = d_pg.sum(axis=0)

    grads = FusionGradients(w_g=d_wg, b_g=d_bg, w_f=d_wf, b_f=d_bf)
    return grads, (d_ed[0] if squeeze else d_ed)


def params_bytes(params: FusionParameters) -> bytes:
    w = Writer()
    w.raw(MODEL_MAGIC)
    w.u32(params.genre_dim)
    w.u32(params.text_dim)
    w.u32(2 * params.text_dim)
    w.f32_array(params.w_g)
    w.f32_array(params.b_g)
    w.f32_array(params.w_f)
    w.f32_array(params.b_f)
    w.u64(params.seed)
    w.u32(params.epochs_trained)
    return w.getvalue()


def save_params(params: FusionParameters, path: str | Path) -> None:
    Path(path).write_bytes(params_bytes(params))


def load_params(path: str | Path) -> FusionParameters:
    r = Reader(Path(path).read_bytes(), label=str(path))
    r.expect_magic(MODEL_MAGIC)
    genre_dim = r.u32()
    text_dim = r.u32()
    concat_dim = r.u32()
    if concat_dim != 2 * text_dim:
        raise CorruptFile(
            f"{path}: concat dim {concat_dim} does not match text dim {text_dim}"
        )
    w_g = r.f32_array(text_dim * genre_dim).reshape(text_dim, genre_dim)
    b_g = r.f32_array(text_dim)
    w_f = r.f32_array(text_dim * 2 * text_dim).reshape(text_dim, 2 * text_dim)
    b_f = r.f32_array(text_dim)
    seed = r.u64()
    epochs = r.u32()
    r.done()
    return FusionParameters(
        w_g=w_g.astype(np.float64),
        b_g=b_g.astype(np.float64),
        w_f=w_f.astype(np.float64),
        b_f=b_f.astype(np.float64),
        seed=seed,
        epochs_trained=epochs,
    )


def params_fingerprint(params: FusionParameters) -> int:
    """64-bit fingerprint of the serialized checkpoint, for index compatibility.

    Hashing a multi-megabyte checkpoint is not free, so the value is cached on
    the instance; any optimizer step on the instance clears the cache.
    """
    cached = params.__dict__.get("_fp_cache")
    if cached is None:
        cached = fnv1a64(params_bytes(params))
        params.__dict__["_fp_cache"] = cached
    return cached


def invalidate_fingerprint(params: FusionParameters) -> None:
    params.__dict__.pop("_fp_cache", None)
