"""Training loop for the fusion network.

Positive/negative cross-domain pairs are scored with a margin-based cosine
embedding loss; one shared set of fusion parameters transforms both sides of
every pair. Optimization is AdamW with decoupled weight decay, global-norm
gradient clipping, and a per-epoch cosine-annealing schedule with warm
restarts. Everything is seeded and single-threaded, so a fixed seed gives a
bit-identical checkpoint.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import fusion
from .catalog import Item, Rating
from .embeddings import EncoderProvider, GenreEmbeddingModel, embed_genre_set
from .errors import (
    DivergedLoss,
    EmptyInput,
    NonFiniteGradient,
    NoPositivePairs,
    ShapeMismatch,
    UnknownSeedId,
)

log = logging.getLogger(__name__)

_NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class TrainingPair:
    source_id: str
    target_id: str
    label: int  # +1 positive, -1 negative


@dataclass
class TrainConfig:
    epochs: int = 2
    batch_size: int = 32
    base_lr: float = 2e-5
    margin: float = 0.5
    max_grad_norm: float = 1.0
    t0: int = 10
    t_mult: int = 2
    eta_min: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.base_lr <= 0:
            raise ValueError("base_lr must be > 0")
        if not 0.0 <= self.margin < 1.0:
            raise ValueError("margin must be in [0, 1)")
        if self.t0 < 1 or self.t_mult < 1:
            raise ValueError("t0 and t_mult must be >= 1")


@dataclass
class PairSamplingConfig:
    jaccard_threshold: float = 0.25
    negatives_per_positive: int = 1
    max_positives: int | None = None
    seed: int = 0


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01


def fresh_optimizer_state(
    params: fusion.FusionParameters, weight_decay: float = 0.01
) -> OptimizerState:
    return OptimizerState(
        m={k: np.zeros_like(v) for k, v in params.blocks().items()},
        v={k: np.zeros_like(v) for k, v in params.blocks().items()},
        weight_decay=weight_decay,
    )


def cosine_embedding_loss(
    f_m: np.ndarray, f_b: np.ndarray, y: int, margin: float
) -> float:
    """Margin loss on cosine similarity: pulls positives to 1, pushes negatives
    below the margin. Zero vectors are scored as similarity 0 (warned)."""
    f_m = np.asarray(f_m, dtype=np.float64)
    f_b = np.asarray(f_b, dtype=np.float64)
    if f_m.shape != f_b.shape:
        raise ShapeMismatch(f"pair shapes differ: {f_m.shape} vs {f_b.shape}")
    na = np.linalg.norm(f_m)
    nb = np.linalg.norm(f_b)
    if na < _NORM_FLOOR or nb < _NORM_FLOOR:
        log.warning("cosine embedding loss saw a zero vector; using similarity 0")
        sim = 0.0
    else:
        sim = float(f_m @ f_b / (na * nb))
    if y == 1:
        return 1.0 - sim
    return max(0.0, sim - margin)


def _batch_loss_and_feature_grads(
    fm: np.ndarray, fb: np.ndarray, labels: np.ndarray, margin: float
) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean pair loss over a batch plus gradients w.r.t. both feature matrices."""
    n = fm.shape[0]
    na = np.linalg.norm(fm, axis=1)
    nb = np.linalg.norm(fb, axis=1)
    ok = (na > _NORM_FLOOR) & (nb > _NORM_FLOOR)
    if not ok.all():
        log.warning("%d/%d pairs had a zero-norm side; scored as similarity 0",
                    int((~ok).sum()), n)
    sa = np.where(ok, na, 1.0)
    sb = np.where(ok, nb, 1.0)
    sim = np.where(ok, np.einsum("ij,ij->i", fm, fb) / (sa * sb), 0.0)

    pos = labels == 1
    per_pair = np.where(pos, 1.0 - sim, np.maximum(0.0, sim - margin))
    loss = float(per_pair.mean())

    dsim = np.zeros(n)
    dsim[pos] = -1.0
    dsim[~pos & (sim > margin)] = 1.0
    dsim[~ok] = 0.0
    dsim /= n

    inv = 1.0 / (sa * sb)
    dfm = dsim[:, None] * (fb * inv[:, None] - fm * (sim / sa**2)[:, None])
    dfb = dsim[:, None] * (fm * inv[:, None] - fb * (sim / sb**2)[:, None])
    dfm[~ok] = 0.0
    dfb[~ok] = 0.0
    return loss, dfm, dfb


def batch_loss_and_grads(
    params: fusion.FusionParameters,
    em: np.ndarray,
    gm: np.ndarray,
    eb: np.ndarray,
    gb: np.ndarray,
    labels: np.ndarray,
    margin: float,
) -> tuple[float, fusion.FusionGradients]:
    """Forward both sides through the shared parameters and backpropagate the
    mean cosine embedding loss. This is the exact path the train loop takes."""
    fm = fusion.forward(params, em, gm)
    fb = fusion.forward(params, eb, gb)
    loss, dfm, dfb = _batch_loss_and_feature_grads(fm, fb, labels, margin)
    grads_m, _ = fusion.backward(params, em, gm, dfm)
    grads_b, _ = fusion.backward(params, eb, gb, dfb)
    total = fusion.FusionGradients(
        w_g=grads_m.w_g + grads_b.w_g,
        b_g=grads_m.b_g + grads_b.b_g,
        w_f=grads_m.w_f + grads_b.w_f,
        b_f=grads_m.b_f + grads_b.b_f,
    )
    return loss, total


def restart_position(cumulative_epoch: int, config: TrainConfig) -> tuple[int, int]:
    """Map a cumulative epoch count to (T_cur, T_i) across warm restarts.

    With t0=10 and t_mult=2 the restarts land at cumulative epochs 10, 30, 70.
    """
    t_cur, t_i = cumulative_epoch, config.t0
    while t_cur >= t_i:
        t_cur -= t_i
        t_i *= config.t_mult
    return t_cur, t_i


def scheduled_lr(t_cur: float, t_i: float, config: TrainConfig) -> float:
    """Cosine annealing within one period: base_lr at T_cur=0, eta_min at T_cur=T_i."""
    if not 0 <= t_cur <= t_i:
        raise ValueError(f"need 0 <= T_cur <= T_i, got {t_cur}, {t_i}")
    span = config.base_lr - config.eta_min
    return config.eta_min + span * (1.0 + math.cos(math.pi * t_cur / t_i)) / 2.0


def lr_at_epoch(cumulative_epoch: int, config: TrainConfig) -> float:
    t_cur, t_i = restart_position(cumulative_epoch, config)
    return scheduled_lr(t_cur, t_i, config)


def clip_gradients(
    grads: fusion.FusionGradients, max_norm: float = 1.0
) -> fusion.FusionGradients:
    """Scale all blocks by max_norm/N when the global L2 norm N exceeds max_norm."""
    total = 0.0
    for name, g in grads.blocks().items():
        if not np.isfinite(g).all():
            raise NonFiniteGradient(f"gradient block {name} contains non-finite values")
        total += float(np.sum(g * g))
    norm = math.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.blocks().values():
            g *= scale
    return grads


def adamw_step(
    state: OptimizerState,
    params: fusion.FusionParameters,
    grads: fusion.FusionGradients,
    lr: float,
) -> tuple[fusion.FusionParameters, OptimizerState]:
    """One AdamW update with decoupled weight decay; mutates params and state."""
    fusion.invalidate_fingerprint(params)
    t = state.step_count + 1
    for name, g in grads.blocks().items():
        p = params.blocks()[name]
        if p.shape != g.shape:
            raise ShapeMismatch(f"{name}: param shape {p.shape} vs grad shape {g.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        p -= lr * (m_hat / (np.sqrt(v_hat) + state.eps) + state.weight_decay * p)
    state.step_count = t
    return params, state


def _genre_token_sets(items: list[Item]) -> list[frozenset[str]]:
    return [frozenset(item.genres) for item in items]


def _jaccard_matrix(
    source_items: list[Item], target_items: list[Item]
) -> np.ndarray:
    src_sets = _genre_token_sets(source_items)
    tgt_sets = _genre_token_sets(target_items)
    vocab = sorted(set().union(*src_sets, *tgt_sets)) if src_sets else []
    tok2col = {t: i for i, t in enumerate(vocab)}
    a = np.zeros((len(src_sets), len(vocab)))
    b = np.zeros((len(tgt_sets), len(vocab)))
    for i, s in enumerate(src_sets):
        for t in s:
            a[i, tok2col[t]] = 1.0
    for j, s in enumerate(tgt_sets):
        for t in s:
            b[j, tok2col[t]] = 1.0
    inter = a @ b.T
    union = a.sum(axis=1)[:, None] + b.sum(axis=1)[None, :] - inter
    return np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)


def sample_pairs(
    source_items: list[Item],
    target_items: list[Item],
    ratings: list[Rating] | None = None,
    config: PairSamplingConfig | None = None,
) -> list[TrainingPair]:
    """Build training pairs: genre-overlapping (or co-liked) cross-domain items
    are positives, and negatives are drawn uniformly from low-overlap pairs."""
    config = config or PairSamplingConfig()
    if not source_items or not target_items:
        raise EmptyInput("both catalogs must be non-empty to sample pairs")

    jac = _jaccard_matrix(source_items, target_items)
    tau = config.jaccard_threshold
    positive_ij = [tuple(ij) for ij in np.argwhere(jac >= tau)]

    if ratings:
        src_pos = {item.id: i for i, item in enumerate(source_items)}
        tgt_pos = {item.id: j for j, item in enumerate(target_items)}
        by_user: dict[str, dict[str, list[int]]] = {}
        for r in ratings:
            if r.rating < 4.0:
                continue
            entry = by_user.setdefault(r.user_id, {"source": [], "target": []})
            if r.domain == "source" and r.item_id in src_pos:
                entry["source"].append(src_pos[r.item_id])
            elif r.domain == "target" and r.item_id in tgt_pos:
                entry["target"].append(tgt_pos[r.item_id])
        for user_id in sorted(by_user):
            entry = by_user[user_id]
            for i in sorted(set(entry["source"])):
                for j in sorted(set(entry["target"])):
                    positive_ij.append((i, j))

    positive_ij = list(dict.fromkeys(positive_ij))
    if not positive_ij:
        raise NoPositivePairs(
            f"no pair reached genre Jaccard {tau} and no users co-liked items"
        )

    rng = np.random.default_rng(config.seed)
    if config.max_positives is not None and len(positive_ij) > config.max_positives:
        keep = rng.choice(len(positive_ij), size=config.max_positives, replace=False)
        keep.sort()
        positive_ij = [positive_ij[k] for k in keep]

    n_neg_wanted = config.negatives_per_positive * len(positive_ij)
    eligible = int((jac < tau).sum())
    negatives: list[tuple[int, int]] = []
    if eligible == 0:
        log.warning("no pair has genre Jaccard below %.3f; training without negatives", tau)
    else:
        n_neg_wanted = min(n_neg_wanted, eligible)
        chosen: set[tuple[int, int]] = set()
        attempts = 0
        limit = 50 * n_neg_wanted + 1000
        while len(negatives) < n_neg_wanted and attempts < limit:
            i = int(rng.integers(len(source_items)))
            j = int(rng.integers(len(target_items)))
            attempts += 1
            if jac[i, j] < tau and (i, j) not in chosen:
                chosen.add((i, j))
                negatives.append((i, j))
        if len(negatives) < n_neg_wanted:
            log.warning("negative sampling stopped early: %d of %d drawn",
                        len(negatives), n_neg_wanted)

    pairs = [
        TrainingPair(source_items[i].id, target_items[j].id, 1)
        for i, j in positive_ij
    ]
    pairs.extend(
        TrainingPair(source_items[i].id, target_items[j].id, -1)
        for i, j in negatives
    )
    return pairs


@dataclass
class TrainingReport:
    epoch_mean_losses: list[float]
    lr_by_epoch: list[float]
    positive_pairs: int
    negative_pairs: int
    seed: int
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "epoch_mean_losses": self.epoch_mean_losses,
            "lr_by_epoch": self.lr_by_epoch,
            "pair_counts": {
                "positive": self.positive_pairs,
                "negative": self.negative_pairs,
            },
            "seed": self.seed,
            "config": self.config,
        }


def _item_features(
    items_by_id: dict[str, Item],
    ids: list[str],
    encoder: EncoderProvider,
    genre_model: GenreEmbeddingModel,
    side: str,
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    feats = {}
    missing = [i for i in ids if i not in items_by_id]
    if missing:
        raise UnknownSeedId(missing, domain=side)
    for item_id in ids:
        item = items_by_id[item_id]
        e_d = np.asarray(encoder.encode(item), dtype=np.float64)
        gv = np.asarray(embed_genre_set(genre_model, list(item.genres)), dtype=np.float64)
        feats[item_id] = (e_d, gv)
    return feats


def train(
    source_items: list[Item],
    target_items: list[Item],
    encoder: EncoderProvider,
    genre_model: GenreEmbeddingModel,
    pairs: list[TrainingPair],
    config: TrainConfig | None = None,
) -> tuple[fusion.FusionParameters, TrainingReport]:
    """Train the fusion parameters on the given pairs.

    Each epoch shuffles the pairs (seeded), iterates fixed-size batches, and
    applies clip + AdamW per batch with the epoch's scheduled learning rate.
    """
    config = config or TrainConfig()
    if not pairs:
        raise EmptyInput("no training pairs supplied")

    src_by_id = {item.id: item for item in source_items}
    tgt_by_id = {item.id: item for item in target_items}
    src_ids = list(dict.fromkeys(p.source_id for p in pairs))
    tgt_ids = list(dict.fromkeys(p.target_id for p in pairs))
    src_feats = _item_features(src_by_id, src_ids, encoder, genre_model, "source")
    tgt_feats = _item_features(tgt_by_id, tgt_ids, encoder, genre_model, "target")

    em_all = np.stack([src_feats[p.source_id][0] for p in pairs])
    gm_all = np.stack([src_feats[p.source_id][1] for p in pairs])
    eb_all = np.stack([tgt_feats[p.target_id][0] for p in pairs])
    gb_all = np.stack([tgt_feats[p.target_id][1] for p in pairs])
    labels_all = np.array([p.label for p in pairs])

    params = fusion.init_params(config.seed, text_dim=encoder.dim, genre_dim=genre_model.dim)
    state = fresh_optimizer_state(params)
    rng = np.random.default_rng(config.seed)

    epoch_losses: list[float] = []
    lrs: list[float] = []
    n = len(pairs)
    for epoch in range(config.epochs):
        lr = lr_at_epoch(epoch, config)
        lrs.append(lr)
        order = rng.permutation(n)
        loss_sum = 0.0
        for start in range(0, n, config.batch_size):
            batch = order[start : start + config.batch_size]
            loss, grads = batch_loss_and_grads(
                params,
                em_all[batch],
                gm_all[batch],
                eb_all[batch],
                gb_all[batch],
                labels_all[batch],
                config.margin,
            )
            loss_sum += loss * len(batch)
            grads = clip_gradients(grads, config.max_grad_norm)
            params, state = adamw_step(state, params, grads, lr)
        mean_loss = loss_sum / n
        if not math.isfinite(mean_loss):
            raise DivergedLoss(f"epoch {epoch} mean loss is {mean_loss}")
        epoch_losses.append(mean_loss)
        log.info("epoch %d: mean loss %.6f (lr %.3g)", epoch, mean_loss, lr)

    params.epochs_trained = config.epochs
    report = TrainingReport(
        epoch_mean_losses=epoch_losses,
        lr_by_epoch=lrs,
        positive_pairs=sum(1 for p in pairs if p.label == 1),
        negative_pairs=sum(1 for p in pairs if p.label == -1),
        seed=config.seed,
        config=asdict(config),
    )
    return params, report
