"""Virtual-user generation by dual attention over overlapping users.

Two softmax channels score every overlapping user against a query user: one
on target-domain user embeddings, one on aggregated item profiles. The mixed
weights combine value-projected source embeddings into a virtual source
embedding. A non-learned top-N cosine generator is kept as an ablation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import CrossDomainDataset, DomainDataset
from .params import GEN, ParameterStore

CHANNELS = ("user", "item")

GEN_TENSORS = (
    "gen_wv",
    "gen_bv",
    "gen_wq_user",
    "gen_bq_user",
    "gen_wk_user",
    "gen_bk_user",
    "gen_wq_item",
    "gen_bq_item",
    "gen_wk_item",
    "gen_bk_item",
)


@dataclass
class GeneratorParams:
    """Handle to the GEN-partition tensors plus the channel mix weight.

    gamma1 mixes the two attention channels and is a hyperparameter (grid
    searched, not optimized), so it lives here rather than in the store.
    """

    store: ParameterStore
    d: int
    gamma1: float
    top_m: int | None = None

    def __post_init__(self):
        if not (0.0 <= self.gamma1 <= 1.0):
            raise ValueError(f"gamma1 must lie in [0, 1], got {self.gamma1}")
        if self.top_m is not None and self.top_m < 1:
            raise ValueError(f"top_m must be >= 1 when set, got {self.top_m}")

    @classmethod
    def create(
        cls,
        store: ParameterStore,
        d: int,
        gamma1: float = 0.5,
        seed: int = 0,
        init_noise: float = 0.0,
        top_m: int | None = None,
    ) -> "GeneratorParams":
        """Register GEN tensors. Matrices start at identity (+ optional
        jitter), biases at zero: the untrained generator then reduces to
        similarity-weighted averaging of raw source embeddings.
        """
        rng = np.random.default_rng(seed)
        for name in GEN_TENSORS:
            if name.startswith("gen_b"):
                value = np.zeros(d)
            else:
                value = np.eye(d)
                if init_noise:
                    value = value + init_noise * rng.standard_normal((d, d))
            store.add(name, value, GEN)
        return cls(store=store, d=d, gamma1=gamma1, top_m=top_m)

    def wq(self, channel: str) -> np.ndarray:
        return self.store.get(f"gen_wq_{channel}")

    def bq(self, channel: str) -> np.ndarray:
        return self.store.get(f"gen_bq_{channel}")

    def wk(self, channel: str) -> np.ndarray:
        return self.store.get(f"gen_wk_{channel}")

    def bk(self, channel: str) -> np.ndarray:
        return self.store.get(f"gen_bk_{channel}")

    @property
    def wv(self) -> np.ndarray:
        return self.store.get("gen_wv")

    @property
    def bv(self) -> np.ndarray:
        return self.store.get("gen_bv")


@dataclass
class AttentionBreakdown:
    """Per-query attention internals over the overlapping users."""

    beta_user: np.ndarray
    beta_item: np.ndarray
    alpha_user: np.ndarray
    alpha_item: np.ndarray
    alpha: np.ndarray


def channel_logits(gp: GeneratorParams, channel: str, queries: np.ndarray, keys: np.ndarray) -> np.ndarray:
    """beta = (W_q q + b_q) . (W_k k + b_k) / sqrt(d), batched over rows."""
    if channel not in CHANNELS:
        raise ValueError(f"channel must be one of {CHANNELS}")
    keys = np.atleast_2d(np.asarray(keys, dtype=np.float64))
    if keys.shape[0] == 0:
        raise ValueError("attention needs at least one overlapping user")
    queries = np.asarray(queries, dtype=np.float64)
    single = queries.ndim == 1
    q = np.atleast_2d(queries)
    if q.shape[1] != gp.d or keys.shape[1] != gp.d:
        raise ValueError(f"embedding dim must be {gp.d}")
    qt = q @ gp.wq(channel).T + gp.bq(channel)
    kt = keys @ gp.wk(channel).T + gp.bk(channel)
    beta = (qt @ kt.T) / np.sqrt(gp.d)
    return beta[0] if single else beta


def user_attention_logits(gp: GeneratorParams, e_non: np.ndarray, overlap_target_embs: np.ndarray) -> np.ndarray:
    return channel_logits(gp, "user", e_non, overlap_target_embs)


def item_attention_logits(gp: GeneratorParams, g_non: np.ndarray, overlap_profiles: np.ndarray) -> np.ndarray:
    return channel_logits(gp, "item", g_non, overlap_profiles)


def item_profile(ds, item_embs: np.ndarray, u: int) -> np.ndarray:
    """Mean embedding of the user's train-positive items.

    `ds` may be a DomainDataset (its adjacency is used) or a per-user list of
    item-index lists.
    """
    items = ds.adjacency[u] if isinstance(ds, DomainDataset) else ds[u]
    if len(items) == 0:
        raise ValueError(f"user {u} has no interactions; cannot build an item profile")
    return np.mean(np.asarray(item_embs, dtype=np.float64)[items], axis=0)


def compute_item_profiles(train_by_user: list[list[int]], item_embs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Profile matrix for all users plus a validity mask (False = no items)."""
    n = len(train_by_user)
    item_embs = np.asarray(item_embs, dtype=np.float64)
    counts = np.fromiter((len(lst) for lst in train_by_user), dtype=np.int64, count=n)
    flat_users = np.repeat(np.arange(n), counts)
    flat_items = np.concatenate([np.asarray(lst, dtype=np.int64) for lst in train_by_user]) \
        if counts.sum() else np.empty(0, dtype=np.int64)
    profiles = np.zeros((n, item_embs.shape[1]))
    np.add.at(profiles, flat_users, item_embs[flat_items])
    valid = counts > 0
    profiles[valid] /= counts[valid, None]
    return profiles, valid


def _masked_softmax(beta: np.ndarray, top_m: int | None) -> np.ndarray:
    """Row-wise stabilized softmax, optionally restricted to the top_m logits."""
    b = beta.copy()
    if top_m is not None and top_m < b.shape[1]:
        # keep the top_m largest per row, mask the rest out
        kth = np.partition(b, -top_m, axis=1)[:, -top_m][:, None]
        b[b < kth] = -np.inf
    b -= b.max(axis=1, keepdims=True)
    np.exp(b, out=b)
    b /= b.sum(axis=1, keepdims=True)
    return b


def attention_weights(gp: GeneratorParams, beta_user: np.ndarray, beta_item: np.ndarray) -> AttentionBreakdown:
    """Per-channel softmax then the gamma1 convex mix."""
    bu = np.atleast_2d(np.asarray(beta_user, dtype=np.float64))
    bi = np.atleast_2d(np.asarray(beta_item, dtype=np.float64))
    if bu.shape != bi.shape or bu.shape[1] < 1:
        raise ValueError("logit vectors must share a length >= 1")
    au = _masked_softmax(bu, gp.top_m)
    ai = _masked_softmax(bi, gp.top_m)
    a = gp.gamma1 * au + (1.0 - gp.gamma1) * ai
    if np.asarray(beta_user).ndim == 1:
        return AttentionBreakdown(bu[0], bi[0], au[0], ai[0], a[0])
    return AttentionBreakdown(bu, bi, au, ai, a)


def generate_virtual(gp: GeneratorParams, alpha: np.ndarray, overlap_source_embs: np.ndarray) -> np.ndarray:
    """e' = sum_u alpha_u (W_v e^S_u + b_v)."""
    alpha = np.asarray(alpha, dtype=np.float64)
    s = np.atleast_2d(np.asarray(overlap_source_embs, dtype=np.float64))
    if alpha.shape[-1] != s.shape[0]:
        raise ValueError(f"{alpha.shape[-1]} weights for {s.shape[0]} source embeddings")
    if s.shape[1] != gp.d:
        raise ValueError(f"source embedding dim {s.shape[1]} != {gp.d}")
    if not np.allclose(alpha.sum(axis=-1), 1.0, atol=1e-6):
        raise ValueError("attention weights must sum to 1")
    return alpha @ (s @ gp.wv.T + gp.bv)


@dataclass
class AttentionCache:
    """Forward intermediates needed by the backward pass."""

    q_user: np.ndarray
    q_item: np.ndarray
    k_user: np.ndarray
    k_item: np.ndarray
    s: np.ndarray
    qt: dict
    kt: dict
    alpha_c: dict
    alpha: np.ndarray
    values: np.ndarray


def attention_forward(
    gp: GeneratorParams,
    q_user: np.ndarray,
    q_item: np.ndarray,
    k_user: np.ndarray,
    k_item: np.ndarray,
    source_embs: np.ndarray,
    need_cache: bool = True,
) -> tuple[np.ndarray, AttentionCache | None]:
    """Batched dual-attention pass: rows of q_* are query users, rows of k_*
    and source_embs are the overlapping users. Returns (E', cache).

    need_cache=False skips the backward bookkeeping and reuses the logit
    buffers in place; use it for consumption-only passes.
    """
    if k_user.shape[0] == 0:
        raise ValueError("attention needs at least one overlapping user")
    qt, kt, alpha_c = {}, {}, {}
    sq = np.sqrt(gp.d)
    for ch, q, k in (("user", q_user, k_user), ("item", q_item, k_item)):
        qt[ch] = q @ gp.wq(ch).T + gp.bq(ch)
        kt[ch] = k @ gp.wk(ch).T + gp.bk(ch)
        alpha_c[ch] = _masked_softmax((qt[ch] @ kt[ch].T) / sq, gp.top_m)
    values = source_embs @ gp.wv.T + gp.bv
    if not need_cache:
        alpha = alpha_c["user"]
        alpha *= gp.gamma1
        ai = alpha_c["item"]
        ai *= 1.0 - gp.gamma1
        alpha += ai
        return alpha @ values, None
    alpha = gp.gamma1 * alpha_c["user"] + (1.0 - gp.gamma1) * alpha_c["item"]
    out = alpha @ values
    cache = AttentionCache(q_user, q_item, k_user, k_item, source_embs, qt, kt, alpha_c, alpha, values)
    return out, cache


def attention_backward(gp: GeneratorParams, cache: AttentionCache, d_out: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of sum(d_out * E') with respect to every GEN tensor.

    Query/key/source embeddings are treated as constants: during generator
    steps the MAIN partition is frozen, so their gradients are never applied.
    """
    grads: dict[str, np.ndarray] = {}
    d_values = cache.alpha.T @ d_out
    grads["gen_wv"] = d_values.T @ cache.s
    grads["gen_bv"] = d_values.sum(axis=0)
    d_alpha = d_out @ cache.values.T
    sq = np.sqrt(gp.d)
    mix = {"user": gp.gamma1, "item": 1.0 - gp.gamma1}
    q_in = {"user": cache.q_user, "item": cache.q_item}
    k_in = {"user": cache.k_user, "item": cache.k_item}
    for ch in CHANNELS:
        a = cache.alpha_c[ch]
        d_ac = mix[ch] * d_alpha
        d_beta = a * (d_ac - (d_ac * a).sum(axis=1, keepdims=True))
        d_qt = (d_beta @ cache.kt[ch]) / sq
        d_kt = (d_beta.T @ cache.qt[ch]) / sq
        grads[f"gen_wq_{ch}"] = d_qt.T @ q_in[ch]
        grads[f"gen_bq_{ch}"] = d_qt.sum(axis=0)
        grads[f"gen_wk_{ch}"] = d_kt.T @ k_in[ch]
        grads[f"gen_bk_{ch}"] = d_kt.sum(axis=0)
    return grads


def forward_users(
    gp: GeneratorParams,
    users: np.ndarray,
    cross: CrossDomainDataset,
    tgt_user_embs: np.ndarray,
    src_user_embs: np.ndarray,
    profiles: np.ndarray,
    valid: np.ndarray,
    need_cache: bool = True,
) -> tuple[np.ndarray, AttentionCache | None]:
    """Generate virtual source embeddings for the given target users."""
    users = np.asarray(users, dtype=np.int64)
    ov_t = cross.overlap_tgt
    ov_s = cross.overlap_src
    if len(ov_t) == 0:
        raise ValueError("attention needs at least one overlapping user")
    bad = users[~valid[users]]
    if len(bad):
        raise ValueError(f"users without item profiles: {bad[:5].tolist()}")
    if not valid[ov_t].all():
        raise ValueError("some overlapping users lack item profiles")
    return attention_forward(
        gp,
        tgt_user_embs[users],
        profiles[users],
        tgt_user_embs[ov_t],
        profiles[ov_t],
        src_user_embs[ov_s],
        need_cache=need_cache,
    )


def generate_all(
    gp: GeneratorParams,
    cross: CrossDomainDataset,
    tgt_user_embs: np.ndarray,
    src_user_embs: np.ndarray,
    profiles: np.ndarray,
    valid: np.ndarray,
) -> tuple[dict[int, np.ndarray], dict[int, np.ndarray]]:
    """Virtual embeddings for every non-overlapping user (consumed by the
    recommender) and every overlapping user (supervision targets).
    """
    out_non: dict[int, np.ndarray] = {}
    out_ov: dict[int, np.ndarray] = {}
    non = np.asarray(cross.target_nonoverlap, dtype=np.int64)
    if len(non):
        e_non, _ = forward_users(gp, non, cross, tgt_user_embs, src_user_embs, profiles, valid)
        out_non = {int(u): e_non[b] for b, u in enumerate(non)}
    ov = cross.overlap_tgt
    if len(ov):
        e_ov, _ = forward_users(gp, ov, cross, tgt_user_embs, src_user_embs, profiles, valid)
        out_ov = {int(u): e_ov[b] for b, u in enumerate(ov)}
    return out_non, out_ov


def breakdown_for_user(
    gp: GeneratorParams,
    u: int,
    cross: CrossDomainDataset,
    tgt_user_embs: np.ndarray,
    profiles: np.ndarray,
) -> AttentionBreakdown:
    """Single-user attention introspection (for debug dumps)."""
    ov_t = cross.overlap_tgt
    bu = channel_logits(gp, "user", tgt_user_embs[u], tgt_user_embs[ov_t])
    bi = channel_logits(gp, "item", profiles[u], profiles[ov_t])
    return attention_weights(gp, bu, bi)


def knn_generate(
    cross: CrossDomainDataset,
    target_embs: np.ndarray,
    source_embs: np.ndarray,
    u_non: int,
    n_neighbors: int,
) -> np.ndarray:
    """Mean source embedding of the top-N overlapping users by cosine
    similarity of target embeddings; ties broken by ascending overlap index.
    """
    if n_neighbors < 1:
        raise ValueError(f"n_neighbors must be >= 1, got {n_neighbors}")
    ov_t = cross.overlap_tgt
    ov_s = cross.overlap_src
    if len(ov_t) == 0:
        raise ValueError("knn_generate needs a non-empty overlap set")
    q = np.asarray(target_embs, dtype=np.float64)[u_non]
    keys = np.asarray(target_embs, dtype=np.float64)[ov_t]
    qn = np.linalg.norm(q)
    kn = np.linalg.norm(keys, axis=1)
    denom = qn * kn
    cos = np.where(denom > 0, (keys @ q) / np.where(denom > 0, denom, 1.0), 0.0)
    n = min(n_neighbors, len(ov_t))
    order = np.lexsort((np.arange(len(cos)), -cos))[:n]
    return np.asarray(source_embs, dtype=np.float64)[ov_s[order]].mean(axis=0)


def knn_generate_all(
    cross: CrossDomainDataset,
    target_embs: np.ndarray,
    source_embs: np.ndarray,
    n_neighbors: int,
) -> dict[int, np.ndarray]:
    return {
        int(u): knn_generate(cross, target_embs, source_embs, int(u), n_neighbors)
        for u in cross.target_nonoverlap
    }
