"""Alternating optimization: BPR steps on the MAIN partition with the
generator frozen, limiter steps on the GEN partition with everything else
frozen. Each partition keeps its own Adam state and step counter, so a step
of one leaves the other bit-identical.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .data import CrossDomainDataset, SplitDataset
from .generator import (
    GeneratorParams,
    attention_backward,
    compute_item_profiles,
    forward_users,
    knn_generate_all,
)
from .limiter import LimiterConfig, constrain_loss, super_loss
from .metrics import EvalReport, evaluate
from .model import (
    CDR,
    CDR_VUG,
    SOURCE,
    SRC_USER,
    TARGET,
    TARGET_ONLY,
    TGT_ITEM,
    TGT_USER,
    CdrModel,
    PositivePool,
    TrainBatch,
    VirtualTable,
)
from .params import GEN, MAIN, AdamConfig, ParameterStore

KNN_VUG = "KNN_VUG"
TRAIN_MODES = (TARGET_ONLY, CDR, CDR_VUG, KNN_VUG)


class TrainingDiverged(RuntimeError):
    """Non-finite loss; carries a parameter snapshot for diagnosis."""

    def __init__(self, message: str, snapshot=None, losses=None):
        super().__init__(message)
        self.snapshot = snapshot
        self.losses = losses


@dataclass
class TrainConfig:
    mode: str = CDR
    epochs: int = 30
    batch_size: int = 2048
    d: int = 64
    lam: float = 0.5
    gamma1: float = 0.5
    gamma2: float = 0.5
    adam_main: AdamConfig = field(default_factory=AdamConfig)
    adam_gen: AdamConfig = field(default_factory=AdamConfig)
    eval_every: int = 5
    patience: int = 20
    seed: int = 0
    warmup_epochs: int = 0
    gen_every: int = 1
    constrain_sample: int = 256
    super_sample: int = 256
    knn_neighbors: int = 10
    detach_virtual: bool = True
    eval_ks: tuple = (10, 20)

    def validate(self):
        if self.mode not in TRAIN_MODES:
            raise ValueError(f"mode must be one of {TRAIN_MODES}, got {self.mode!r}")
        for name in ("epochs", "eval_every", "warmup_epochs"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        for name in ("batch_size", "d", "patience", "gen_every", "knn_neighbors"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("gamma1", "gamma2", "lam"):
            if not (0.0 <= getattr(self, name) <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.constrain_sample < 2:
            raise ValueError("constrain_sample must be >= 2")
        if 10 not in self.eval_ks:
            raise ValueError("eval_ks must include 10 (checkpoint selection metric)")
        self.adam_main.validate()
        self.adam_gen.validate()


@dataclass
class TrainLog:
    steps: list[dict] = field(default_factory=list)
    epochs: list[dict] = field(default_factory=list)
    evals: list[dict] = field(default_factory=list)

    def append_step(self, rec: dict):
        if self.steps and rec["step"] <= self.steps[-1]["step"]:
            raise ValueError("step counter must be strictly increasing")
        self.steps.append(rec)

    def save_jsonl(self, path: str):
        with open(path, "w", encoding="utf-8") as fh:
            for kind, rows in (("step", self.steps), ("epoch", self.epochs), ("eval", self.evals)):
                for row in rows:
                    fh.write(json.dumps({"kind": kind, **row}, sort_keys=True) + "\n")


class Trainer:
    def __init__(
        self,
        cross: CrossDomainDataset,
        split_src: SplitDataset,
        split_tgt: SplitDataset,
        cfg: TrainConfig,
    ):
        cfg.validate()
        self.cross = cross
        self.split_src = split_src
        self.split_tgt = split_tgt
        self.cfg = cfg
        model_mode = CDR_VUG if cfg.mode == KNN_VUG else cfg.mode
        self.store = ParameterStore()
        self.model = CdrModel.create(
            cross, cfg.d, cfg.lam, model_mode, seed=cfg.seed, store=self.store
        )
        self.gen = (
            GeneratorParams.create(self.store, cfg.d, cfg.gamma1, seed=cfg.seed + 17)
            if cfg.mode == CDR_VUG
            else None
        )
        self.limcfg = LimiterConfig(gamma2=cfg.gamma2, pair_sample=cfg.constrain_sample)
        self.pool_src = PositivePool.from_split(split_src)
        self.pool_tgt = PositivePool.from_split(split_tgt)
        self.train_by_user = split_tgt.by_user("train")
        streams = np.random.SeedSequence(cfg.seed).spawn(3)
        self.rng_src = np.random.default_rng(streams[0])
        self.rng_tgt = np.random.default_rng(streams[1])
        self.rng_gen = np.random.default_rng(streams[2])
        self.log = TrainLog()
        self.global_step = 0
        self.virtual: VirtualTable | None = None
        self.profiles: np.ndarray | None = None
        self.profile_valid: np.ndarray | None = None
        self._epoch_active = cfg.warmup_epochs == 0
        self._pending_gen: dict[str, np.ndarray] | None = None

    @property
    def needs_virtual(self) -> bool:
        return self.cfg.mode in (CDR_VUG, KNN_VUG)

    def refresh_virtuals(self):
        """Recompute item profiles and the per-user virtual embedding map
        from the current tables (once per epoch and before evaluations).
        """
        tgt_u = self.store.get(TGT_USER)
        src_u = self.store.get(SRC_USER)
        self.profiles, self.profile_valid = compute_item_profiles(
            self.train_by_user, self.store.get(TGT_ITEM)
        )
        vt = VirtualTable(self.cross.target.n_users, self.cfg.d)
        if self.cfg.mode == CDR_VUG:
            # only the non-overlap map is consumed during training; the
            # overlap-side forward pass is left to the supervision step
            non = self.cross.target_nonoverlap
            if len(non):
                e_non, _ = forward_users(
                    self.gen, non, self.cross, tgt_u, src_u,
                    self.profiles, self.profile_valid, need_cache=False,
                )
                vt.vec[non] = e_non
                vt.has[non] = True
        elif self.cfg.mode == KNN_VUG:
            knn = knn_generate_all(self.cross, tgt_u, src_u, self.cfg.knn_neighbors)
            for u, v in knn.items():
                vt.vec[u] = v
                vt.has[u] = True
        self.virtual = vt

    def _check_finite(self, losses: dict):
        if all(np.isfinite(v) for v in losses.values() if v is not None):
            return
        raise TrainingDiverged(
            f"non-finite loss at step {self.global_step}: {losses}",
            snapshot=self.store.snapshot(),
            losses=losses,
        )

    def _target_loss(self, batch_tgt: TrainBatch):
        """Target-domain BPR; optionally routes virtual-source gradients
        back into GEN tensors when detach_virtual is off (ablation path).
        """
        cfg = self.cfg
        consume = self.virtual if self._epoch_active else None
        e2e = (
            self.gen is not None
            and not cfg.detach_virtual
            and self._epoch_active
            and self.profiles is not None
        )
        if not e2e:
            return self.model.bpr_loss(batch_tgt, consume, want_virtual_grads=False)
        users = np.unique(batch_tgt.users)
        non = users[(self.model.src_of_tgt[users] < 0) & self.profile_valid[users]]
        if len(non) == 0:
            return self.model.bpr_loss(batch_tgt, consume)
        rows, cache = forward_users(
            self.gen, non, self.cross,
            self.store.get(TGT_USER), self.store.get(SRC_USER),
            self.profiles, self.profile_valid,
        )
        fresh = {int(u): rows[j] for j, u in enumerate(non)}
        loss, grads, vgrads = self.model.bpr_loss(batch_tgt, fresh)
        if vgrads:
            d_out = np.zeros_like(rows)
            index = {int(u): j for j, u in enumerate(non)}
            for u, g in vgrads.items():
                d_out[index[u]] += g
            pend = attention_backward(self.gen, cache, d_out)
            if self._pending_gen is None:
                self._pending_gen = pend
            else:
                for name, g in pend.items():
                    self._pending_gen[name] += g
        return loss, grads, vgrads

    def _gen_step(self) -> tuple[float, float, float]:
        """One limiter step on the GEN partition (MAIN stays untouched).

        Both loss terms run through a single attention pass (supervision
        queries first, spread queries after); one backward on the
        gamma2-weighted upstream gradients equals the weighted sum of
        per-term gradients because the backward is linear in d_out.
        """
        cfg = self.cfg
        cross = self.cross
        tgt_u = self.store.get(TGT_USER)
        src_u = self.store.get(SRC_USER)
        ov_t, ov_s = cross.overlap_tgt, cross.overlap_src
        m = len(ov_t)
        k_sup = m if cfg.super_sample <= 0 else min(cfg.super_sample, m)
        posn = self.rng_gen.permutation(m)[:k_sup]
        non = np.asarray(cross.target_nonoverlap, dtype=np.int64)
        k_con = min(cfg.constrain_sample, len(non)) if len(non) >= 2 else 0
        users_c = non[self.rng_gen.permutation(len(non))[:k_con]] if k_con else non[:0]
        rows, cache = forward_users(
            self.gen, np.concatenate([ov_t[posn], users_c]), cross,
            tgt_u, src_u, self.profiles, self.profile_valid,
        )
        l_sup, d_sup = super_loss(rows[:k_sup], src_u[ov_s[posn]])
        d_out = np.empty_like(rows)
        d_out[:k_sup] = self.limcfg.gamma2 * d_sup
        if k_con:
            l_con, d_con = constrain_loss(rows[k_sup:])
            d_out[k_sup:] = (1.0 - self.limcfg.gamma2) * d_con
        else:
            l_con = 0.0
        obj = self.limcfg.gamma2 * l_sup + (1.0 - self.limcfg.gamma2) * l_con
        grads = attention_backward(self.gen, cache, d_out)
        if self._pending_gen is not None:
            for name, g in self._pending_gen.items():
                grads[name] += g
            self._pending_gen = None
        self._check_finite({"l_super": l_sup, "l_constrain": l_con, "objective": obj})
        self.store.adam_step(grads, cfg.adam_gen, GEN)
        return l_sup, l_con, obj

    def train_step(self, batch_src: TrainBatch, batch_tgt: TrainBatch) -> float:
        """(a) one Adam step of the MAIN partition on both domains' BPR;
        (b) one Adam step of the GEN partition on the limiter objective,
        when the mode and cadence call for it. Returns seconds spent in (b).
        """
        cfg = self.cfg
        grads = self.store.zero_grads(MAIN)
        l_src, g_src, _ = self.model.bpr_loss(batch_src)
        l_tgt, g_tgt, _ = self._target_loss(batch_tgt)
        for part in (g_src, g_tgt):
            for name, g in part.items():
                grads[name] += g
        self._check_finite({"l_src": l_src, "l_tgt": l_tgt})
        self.store.adam_step(grads, cfg.adam_main, MAIN)
        self.global_step += 1

        l_sup = l_con = obj = None
        gen_seconds = 0.0
        if self.gen is not None and self._epoch_active and (
            self.global_step % cfg.gen_every == 0
        ):
            t0 = time.perf_counter()
            l_sup, l_con, obj = self._gen_step()
            gen_seconds = time.perf_counter() - t0
        self.log.append_step(
            {
                "step": self.global_step,
                "l_cdr": l_src + l_tgt,
                "l_super": l_sup,
                "l_constrain": l_con,
                "objective": obj,
            }
        )
        return gen_seconds

    def _validate_now(self) -> EvalReport:
        if self.needs_virtual and self._epoch_active:
            self.refresh_virtuals()
        virtual = self.virtual if self._epoch_active else None
        return evaluate(
            self.model, self.cross, self.split_tgt,
            ks=self.cfg.eval_ks, virtual_sources=virtual, part="valid",
        )

    def fit(self) -> tuple[CdrModel, GeneratorParams | None, TrainLog]:
        """Epoch loop with periodic validation; restores the parameters of
        the best validation NDCG@10 before returning.
        """
        cfg = self.cfg
        if cfg.epochs == 0:
            return self.model, self.gen, self.log
        best_val = -np.inf
        best_snap = None
        bad_evals = 0
        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            gen_seconds = 0.0
            self._epoch_active = epoch >= cfg.warmup_epochs
            if self.needs_virtual and self._epoch_active:
                g0 = time.perf_counter()
                self.refresh_virtuals()
                gen_seconds += time.perf_counter() - g0
            batches_src = list(self.pool_src.iter_batches(cfg.batch_size, self.rng_src))
            batches_tgt = list(self.pool_tgt.iter_batches(cfg.batch_size, self.rng_tgt))
            n_steps = max(len(batches_src), len(batches_tgt))
            for k in range(n_steps):
                bs = TrainBatch(SOURCE, *batches_src[k % len(batches_src)])
                bt = TrainBatch(TARGET, *batches_tgt[k % len(batches_tgt)])
                gen_seconds += self.train_step(bs, bt)
            self.log.epochs.append(
                {
                    "epoch": epoch,
                    "seconds": time.perf_counter() - t0,
                    "gen_seconds": gen_seconds,
                }
            )
            last = epoch == cfg.epochs - 1
            due = cfg.eval_every > 0 and ((epoch + 1) % cfg.eval_every == 0 or last)
            if due:
                report = self._validate_now()
                val = report.value("ndcg", 10)
                self.log.evals.append(
                    {"epoch": epoch, "val_ndcg10": val, "report": report.to_dict()}
                )
                if val > best_val:
                    best_val, best_snap, bad_evals = val, self.store.snapshot(), 0
                else:
                    bad_evals += 1
                    if bad_evals >= cfg.patience:
                        break
        if best_snap is not None:
            self.store.restore(best_snap)
            if self.needs_virtual and self._epoch_active:
                self.refresh_virtuals()
        return self.model, self.gen, self.log

    def resume_from(self, path: str):
        """Replace parameters and optimizer state with a saved checkpoint."""
        loaded = ParameterStore.load(path)
        if set(loaded.names()) != set(self.store.names()):
            raise ValueError("checkpoint tensors do not match this configuration")
        self.store = loaded
        self.model.store = loaded
        if self.gen is not None:
            self.gen.store = loaded


def fit(
    cross: CrossDomainDataset,
    split_src: SplitDataset,
    split_tgt: SplitDataset,
    cfg: TrainConfig,
) -> tuple[CdrModel, GeneratorParams | None, TrainLog]:
    return Trainer(cross, split_src, split_tgt, cfg).fit()
