"""Dual-embedding matrix factorization backbone with cross-domain coupling.

Target score is (e^T_u + lam * ehat^S_u) . e^T_i, where ehat^S_u is the
user's true source embedding (overlapping user), a supplied virtual source
embedding, or zero. Source-domain scoring is plain MF on the source tables.
Both domains train jointly with BPR.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import CrossDomainDataset, SplitDataset
from .params import MAIN, ParameterStore, init_embeddings

TARGET_ONLY = "TARGET_ONLY"
CDR = "CDR"
CDR_VUG = "CDR_VUG"
MODES = (TARGET_ONLY, CDR, CDR_VUG)

SRC_USER = "emb_src_user"
TGT_USER = "emb_tgt_user"
SRC_ITEM = "emb_src_item"
TGT_ITEM = "emb_tgt_item"

SOURCE = "source"
TARGET = "target"


def softplus(x: np.ndarray) -> np.ndarray:
    # log(1 + e^x) without overflow for large |x|
    return np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class VirtualTable:
    """Dense packing of a {target user -> virtual source embedding} map so
    batched lookups avoid per-row dict probes.
    """

    def __init__(self, n_users: int, d: int):
        self.vec = np.zeros((n_users, d))
        self.has = np.zeros(n_users, dtype=bool)

    @classmethod
    def from_map(cls, n_users: int, d: int, mapping: dict[int, np.ndarray]) -> "VirtualTable":
        vt = cls(n_users, d)
        for u, v in mapping.items():
            vt.vec[u] = v
            vt.has[u] = True
        return vt

    def get(self, u: int):
        return self.vec[u] if self.has[u] else None

    def __bool__(self) -> bool:
        return bool(self.has.any())


@dataclass
class TrainBatch:
    """BPR triples within one domain."""

    domain: str
    users: np.ndarray
    pos: np.ndarray
    neg: np.ndarray

    def __post_init__(self):
        if self.domain not in (SOURCE, TARGET):
            raise ValueError(f"unknown domain tag {self.domain!r}")
        self.users = np.asarray(self.users, dtype=np.int64)
        self.pos = np.asarray(self.pos, dtype=np.int64)
        self.neg = np.asarray(self.neg, dtype=np.int64)
        if not (len(self.users) == len(self.pos) == len(self.neg)):
            raise ValueError("users/pos/neg must have equal length")

    def __len__(self) -> int:
        return len(self.users)


class CdrModel:
    """Four embedding tables in the MAIN partition plus the coupling weight."""

    def __init__(
        self,
        store: ParameterStore,
        d: int,
        lam: float,
        mode: str,
        src_of_tgt: np.ndarray,
    ):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        if not np.isfinite(lam) or not (0.0 <= lam <= 1.0):
            raise ValueError(f"lam must be finite in [0, 1], got {lam}")
        shapes = {store.get(n).shape[1] for n in (SRC_USER, TGT_USER, SRC_ITEM, TGT_ITEM)}
        if shapes != {d}:
            raise ValueError(f"embedding dim mismatch: tables have dims {shapes}, d={d}")
        self.store = store
        self.d = d
        self.lam = float(lam)
        self.mode = mode
        self.src_of_tgt = np.asarray(src_of_tgt, dtype=np.int64)

    @classmethod
    def create(
        cls,
        cross: CrossDomainDataset,
        d: int,
        lam: float = 0.5,
        mode: str = CDR,
        seed: int = 0,
        store: ParameterStore | None = None,
    ) -> "CdrModel":
        store = store if store is not None else ParameterStore()
        sizes = [
            (SRC_USER, cross.source.n_users),
            (TGT_USER, cross.target.n_users),
            (SRC_ITEM, cross.source.n_items),
            (TGT_ITEM, cross.target.n_items),
        ]
        for offset, (name, n) in enumerate(sizes):
            store.add(name, init_embeddings(n, d, seed + offset), MAIN)
        return cls(store, d, lam, mode, cross.src_of_tgt())

    @property
    def effective_lam(self) -> float:
        # TARGET_ONLY disables the cross-domain flow entirely
        return 0.0 if self.mode == TARGET_ONLY else self.lam

    @property
    def n_target_items(self) -> int:
        return self.store.get(TGT_ITEM).shape[0]

    def _ehat(self, u: int, virtual_source: np.ndarray | None) -> np.ndarray:
        s = self.src_of_tgt[u]
        if s >= 0:
            return self.store.get(SRC_USER)[s]
        if virtual_source is not None:
            virtual_source = np.asarray(virtual_source, dtype=np.float64)
            if virtual_source.shape != (self.d,):
                raise ValueError(
                    f"virtual_source shape {virtual_source.shape} != ({self.d},)"
                )
            return virtual_source
        return np.zeros(self.d)

    def score(self, u: int, i: int, virtual_source: np.ndarray | None = None) -> float:
        q = self.store.get(TGT_USER)[u] + self.effective_lam * self._ehat(u, virtual_source)
        return float(q @ self.store.get(TGT_ITEM)[i])

    def score_items(self, u: int, virtual_source: np.ndarray | None = None) -> np.ndarray:
        """Scores of every target item for user u."""
        q = self.store.get(TGT_USER)[u] + self.effective_lam * self._ehat(u, virtual_source)
        return self.store.get(TGT_ITEM) @ q

    def query_rows(
        self,
        users: np.ndarray,
        virtual_sources: "dict[int, np.ndarray] | VirtualTable | None",
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Batched (e^T_u + lam*ehat) rows.

        Returns (q, src_rows, virtual_mask): src_rows[b] is the source index
        feeding row b or -1; virtual_mask marks rows that consumed a virtual
        source embedding.
        """
        lam = self.effective_lam
        et = self.store.get(TGT_USER)[users]
        src_rows = self.src_of_tgt[users]
        ehat = np.zeros_like(et)
        ov = src_rows >= 0
        ehat[ov] = self.store.get(SRC_USER)[src_rows[ov]]
        vmask = np.zeros(len(users), dtype=bool)
        if virtual_sources:
            if isinstance(virtual_sources, VirtualTable):
                vmask = (src_rows < 0) & virtual_sources.has[users]
                ehat[vmask] = virtual_sources.vec[users[vmask]]
            else:
                for b, u in enumerate(users):
                    if src_rows[b] < 0:
                        v = virtual_sources.get(int(u))
                        if v is not None:
                            ehat[b] = v
                            vmask[b] = True
        return et + lam * ehat, src_rows, vmask

    def bpr_loss(
        self,
        batch: TrainBatch,
        virtual_sources: "dict[int, np.ndarray] | VirtualTable | None" = None,
        want_virtual_grads: bool = True,
    ) -> tuple[float, dict[str, np.ndarray], dict[int, np.ndarray]]:
        """Mean BPR loss -ln sigma(s+ - s-) over the batch.

        Returns (loss, grads by tensor name, pass-through grads keyed by
        target user index for rows that consumed a virtual source). Callers
        that treat virtual sources as constants can turn the third result off.
        """
        if len(batch) == 0:
            raise ValueError("bpr_loss needs a non-empty batch")
        if batch.domain == SOURCE:
            return self._bpr_source(batch)
        return self._bpr_target(batch, virtual_sources, want_virtual_grads)

    def _bpr_source(self, batch):
        eu = self.store.get(SRC_USER)
        ei = self.store.get(SRC_ITEM)
        q = eu[batch.users]
        vp = ei[batch.pos]
        vn = ei[batch.neg]
        x = np.einsum("bd,bd->b", q, vp - vn)
        loss = float(np.mean(softplus(-x)))
        g = -sigmoid(-x) / len(batch)
        dq = g[:, None] * (vp - vn)
        du = np.zeros_like(eu)
        di = np.zeros_like(ei)
        np.add.at(du, batch.users, dq)
        np.add.at(di, batch.pos, g[:, None] * q)
        np.add.at(di, batch.neg, -g[:, None] * q)
        return loss, {SRC_USER: du, SRC_ITEM: di}, {}

    def _bpr_target(self, batch, virtual_sources, want_virtual_grads=True):
        lam = self.effective_lam
        ei = self.store.get(TGT_ITEM)
        q, src_rows, vmask = self.query_rows(batch.users, virtual_sources)
        vp = ei[batch.pos]
        vn = ei[batch.neg]
        x = np.einsum("bd,bd->b", q, vp - vn)
        loss = float(np.mean(softplus(-x)))
        g = -sigmoid(-x) / len(batch)
        dq = g[:, None] * (vp - vn)
        dtu = np.zeros_like(self.store.get(TGT_USER))
        dti = np.zeros_like(ei)
        np.add.at(dtu, batch.users, dq)
        np.add.at(dti, batch.pos, g[:, None] * q)
        np.add.at(dti, batch.neg, -g[:, None] * q)
        grads = {TGT_USER: dtu, TGT_ITEM: dti}
        virtual_grads: dict[int, np.ndarray] = {}
        if lam != 0.0:
            dsu = np.zeros_like(self.store.get(SRC_USER))
            ov = src_rows >= 0
            np.add.at(dsu, src_rows[ov], lam * dq[ov])
            grads[SRC_USER] = dsu
            if want_virtual_grads and vmask.any():
                vu = batch.users[vmask]
                uniq, inv = np.unique(vu, return_inverse=True)
                acc = np.zeros((len(uniq), dq.shape[1]))
                np.add.at(acc, inv, lam * dq[vmask])
                virtual_grads = {int(u): acc[j] for j, u in enumerate(uniq)}
        return loss, grads, virtual_grads

    def recommend_topk(
        self,
        u: int,
        K: int,
        exclude: set[int] | np.ndarray | list[int],
        virtual_source: np.ndarray | None = None,
    ) -> list[int]:
        """Top-K target items by score, excluded items removed, ties broken
        by ascending item index.
        """
        if K < 1:
            raise ValueError(f"K must be >= 1, got {K}")
        scores = self.score_items(u, virtual_source)
        excl = np.zeros(len(scores), dtype=bool)
        idx = np.fromiter(exclude, dtype=np.int64) if not isinstance(exclude, np.ndarray) else exclude
        if len(idx):
            excl[idx] = True
        cand = np.flatnonzero(~excl)
        if len(cand) == 0:
            return []
        order = np.lexsort((cand, -scores[cand]))
        return [int(cand[j]) for j in order[:K]]


def sample_negatives(
    split: SplitDataset, u: int, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Uniform rejection draws over target items outside u's train positives."""
    pos = {i for uu, i in split.train if uu == u}
    if len(pos) >= split.n_items:
        raise ValueError(f"user {u} has no eligible negative item")
    out = np.empty(count, dtype=np.int64)
    filled = 0
    while filled < count:
        draw = rng.integers(0, split.n_items, size=count - filled)
        good = draw[[int(d) not in pos for d in draw]]
        out[filled : filled + len(good)] = good
        filled += len(good)
    return out


def sample_negatives_batch(
    pos_sets: list[frozenset[int]],
    n_items: int,
    users: np.ndarray,
    rng: np.random.Generator,
    pos_mask: np.ndarray | None = None,
) -> np.ndarray:
    """One negative per row of `users`, rejected against per-user positives.

    `pos_mask` is an optional dense (n_users, n_items) bool view of
    `pos_sets`; membership tests vectorize through it when given. The draw
    sequence is identical either way.
    """
    n = len(users)
    out = rng.integers(0, n_items, size=n)
    if pos_mask is not None:
        bad = pos_mask[users, out]
        while bad.any():
            idx = np.flatnonzero(bad)
            out[idx] = rng.integers(0, n_items, size=len(idx))
            bad[idx] = pos_mask[users[idx], out[idx]]
        return out
    bad = np.array([int(out[b]) in pos_sets[users[b]] for b in range(n)])
    while bad.any():
        idx = np.flatnonzero(bad)
        out[idx] = rng.integers(0, n_items, size=len(idx))
        bad[idx] = [int(out[b]) in pos_sets[users[b]] for b in idx]
    return out


# dense positive masks above this cell count fall back to set probing
_POS_MASK_CELL_LIMIT = 50_000_000


@dataclass
class PositivePool:
    """Per-domain training positives in flat and per-user set form."""

    users: np.ndarray
    items: np.ndarray
    pos_sets: list[frozenset[int]] = field(repr=False, default_factory=list)
    n_items: int = 0
    pos_mask: np.ndarray | None = field(repr=False, default=None)

    @classmethod
    def from_split(cls, split: SplitDataset) -> "PositivePool":
        users = np.asarray([u for u, _ in split.train], dtype=np.int64)
        items = np.asarray([i for _, i in split.train], dtype=np.int64)
        by_user = split.by_user("train")
        mask = None
        if split.n_users * split.n_items <= _POS_MASK_CELL_LIMIT:
            mask = np.zeros((split.n_users, split.n_items), dtype=bool)
            mask[users, items] = True
        return cls(
            users=users,
            items=items,
            pos_sets=[frozenset(lst) for lst in by_user],
            n_items=split.n_items,
            pos_mask=mask,
        )

    def iter_batches(self, batch_size: int, rng: np.random.Generator):
        """Shuffled BPR batches with freshly sampled negatives."""
        perm = rng.permutation(len(self.users))
        for lo in range(0, len(perm), batch_size):
            rows = perm[lo : lo + batch_size]
            u = self.users[rows]
            yield u, self.items[rows], sample_negatives_batch(
                self.pos_sets, self.n_items, u, rng, pos_mask=self.pos_mask
            )
