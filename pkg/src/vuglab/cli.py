"""Experiment runner: synthetic data generation, pipeline orchestration
(ingest -> split -> train -> evaluate), gamma grid search, the channel-lab
report, and report emission.

Exit codes: 0 success, 2 config error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import channels
from .data import (
    CrossDomainDataset,
    DomainDataset,
    SplitDataset,
    binarize,
    build_cross,
    dataset_stats,
    dedupe,
    k_core_filter,
    load_interactions,
    split_per_user,
)
from .generator import breakdown_for_user
from .metrics import evaluate
from .model import CDR, CDR_VUG, TARGET_ONLY
from .params import AdamConfig
from .training import KNN_VUG, Trainer, TrainConfig

log = logging.getLogger(__name__)

MODE_MAP = {
    "target-only": TARGET_ONLY,
    "cdr": CDR,
    "cdr-vug": CDR_VUG,
    "knn-vug": KNN_VUG,
}


class ConfigError(ValueError):
    pass


@dataclass
class SyntheticCdrSpec:
    """Shared-latent synthetic CDR data with controllable overlap.

    Every person has one latent preference vector; a domain-specific linear
    transform of it scores that domain's items, and the top-L items under
    noisy affinity become the person's positives.
    """

    n_source_users: int = 2000
    n_target_users: int = 2000
    overlap_ratio: float = 0.3
    n_items_source: int = 500
    n_items_target: int = 500
    latent_dim: int = 8
    interactions_per_user: int = 20
    noise: float = 0.1
    seed: int = 0
    identical_transforms: bool = False

    def validate(self):
        for name in ("n_source_users", "n_target_users", "n_items_source",
                     "n_items_target", "latent_dim", "interactions_per_user"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not (0.0 <= self.overlap_ratio <= 1.0):
            raise ConfigError("overlap_ratio must lie in [0, 1]")
        if self.noise < 0:
            raise ConfigError("noise must be >= 0")
        if self.n_overlap > min(self.n_source_users, self.n_target_users):
            raise ConfigError("overlap exceeds a domain's user count")
        if self.interactions_per_user > min(self.n_items_source, self.n_items_target):
            raise ConfigError("interactions_per_user exceeds the item count")

    @property
    def n_overlap(self) -> int:
        return int(round(self.overlap_ratio * self.n_target_users))


def synth_cdr(spec: SyntheticCdrSpec) -> CrossDomainDataset:
    """Deterministic synthetic cross-domain dataset: overlapping persons
    act in both domains from one latent vector.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n_ov = spec.n_overlap
    n_src_only = spec.n_source_users - n_ov
    n_tgt_only = spec.n_target_users - n_ov
    n_persons = n_ov + n_src_only + n_tgt_only
    latents = rng.standard_normal((n_persons, spec.latent_dim))
    item_latents = rng.standard_normal(
        (max(spec.n_items_source, spec.n_items_target), spec.latent_dim)
    )
    m_source = rng.standard_normal((spec.latent_dim, spec.latent_dim)) / np.sqrt(spec.latent_dim)
    if spec.identical_transforms:
        m_target = m_source.copy()
    else:
        m_target = rng.standard_normal((spec.latent_dim, spec.latent_dim)) / np.sqrt(spec.latent_dim)

    src_persons = np.concatenate([np.arange(n_ov), n_ov + np.arange(n_src_only)])
    tgt_persons = np.concatenate([np.arange(n_ov), n_ov + n_src_only + np.arange(n_tgt_only)])

    def domain(persons: np.ndarray, transform: np.ndarray, n_items: int) -> DomainDataset:
        affinity = (latents[persons] @ transform.T) @ item_latents[:n_items].T
        if spec.noise:
            affinity = affinity + spec.noise * rng.standard_normal(affinity.shape)
        top = np.argsort(-affinity, axis=1, kind="stable")[:, : spec.interactions_per_user]
        users = {f"p{p}": idx for idx, p in enumerate(persons)}
        items = {f"i{j}": j for j in range(n_items)}
        interactions = [
            (u_idx, int(j)) for u_idx in range(len(persons)) for j in top[u_idx]
        ]
        return DomainDataset(users=users, items=items, interactions=interactions)

    source = domain(src_persons, m_source, spec.n_items_source)
    target = domain(tgt_persons, m_target, spec.n_items_target)
    return build_cross(source, target)


def prepare_splits(
    cross: CrossDomainDataset,
    seed: int,
    target_ratios=(0.8, 0.1, 0.1),
    source_ratios=(0.8, 0.2, 0.0),
) -> tuple[SplitDataset, SplitDataset]:
    split_src = split_per_user(cross.source, source_ratios, seed=seed + 11)
    split_tgt = split_per_user(cross.target, target_ratios, seed=seed + 13)
    return split_src, split_tgt


@dataclass
class ExperimentConfig:
    synthetic: SyntheticCdrSpec | None = field(default_factory=SyntheticCdrSpec)
    source_path: str | None = None
    target_path: str | None = None
    modes: list[str] = field(default_factory=lambda: ["target-only", "cdr", "cdr-vug"])
    train: TrainConfig = field(default_factory=TrainConfig)
    ks: tuple = (10, 20)
    out_dir: str = "runs"
    seeds: list[int] = field(default_factory=lambda: [0])
    max_users: int | None = None
    rating_threshold: float = 3.0
    k_core: int = 5

    def validate(self):
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        for m in self.modes:
            if m not in MODE_MAP:
                raise ConfigError(f"unknown mode {m!r}; valid: {sorted(MODE_MAP)}")
        if (self.source_path is None) != (self.target_path is None):
            raise ConfigError("source_path and target_path must be given together")
        if self.source_path is None and self.synthetic is None:
            raise ConfigError("either dataset paths or a synthetic spec is required")
        try:
            self.train.validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.synthetic is not None:
            self.synthetic.validate()


def _from_dict(cls, data: dict):
    """Build a (possibly nested) dataclass from plain dicts, rejecting
    unknown keys so config typos fail loudly.
    """
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        ftype = fields[name].type
        if isinstance(value, dict) and "Adam" in str(ftype):
            kwargs[name] = _from_dict(AdamConfig, value)
        elif isinstance(value, dict) and "TrainConfig" in str(ftype):
            kwargs[name] = _from_dict(TrainConfig, value)
        elif isinstance(value, dict) and "SyntheticCdrSpec" in str(ftype):
            kwargs[name] = _from_dict(SyntheticCdrSpec, value)
        elif name == "ks" or name == "eval_ks":
            try:
                kwargs[name] = tuple(value)
            except TypeError as exc:
                raise ConfigError(f"bad {cls.__name__}: {name} must be a list") from exc
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad {cls.__name__}: {exc}") from exc


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return _from_dict(ExperimentConfig, raw)


def _atomic_write(path: str, text: str):
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _write_json(path: str, obj):
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def subsample_users(ds: DomainDataset, n: int) -> DomainDataset:
    """Keep the first n users (by dense index) and their interactions."""
    if n >= ds.n_users:
        return ds
    user_ids = ds.user_ids()
    item_ids = ds.item_ids()
    inter = [(u, i) for u, i in ds.interactions if u < n]
    live_items = sorted({i for _, i in inter})
    i_map = {old: new for new, old in enumerate(live_items)}
    return DomainDataset(
        users={user_ids[u]: u for u in range(n)},
        items={item_ids[old]: new for old, new in i_map.items()},
        interactions=[(u, i_map[i]) for u, i in inter],
    )


def load_domain(path: str, threshold: float, k: int) -> DomainDataset:
    records = binarize(dedupe(load_interactions(path)), threshold)
    return k_core_filter(DomainDataset.from_records(records), k)


def build_data(cfg: ExperimentConfig, seed: int) -> CrossDomainDataset:
    if cfg.source_path is not None:
        source = load_domain(cfg.source_path, cfg.rating_threshold, cfg.k_core)
        target = load_domain(cfg.target_path, cfg.rating_threshold, cfg.k_core)
        if cfg.max_users is not None:
            source = subsample_users(source, cfg.max_users)
            target = subsample_users(target, cfg.max_users)
        return build_cross(source, target)
    spec = dataclasses.replace(cfg.synthetic, seed=seed)
    return synth_cdr(spec)


def run_single(
    cfg: ExperimentConfig, mode_str: str, seed: int, out_dir: str, dump_attention: bool = False
) -> dict:
    """Train one (mode, seed) pair, evaluate on test, write its artifacts."""
    cross = build_data(cfg, seed)
    split_src, split_tgt = prepare_splits(cross, seed)
    tcfg = dataclasses.replace(cfg.train, mode=MODE_MAP[mode_str], seed=seed)
    trainer = Trainer(cross, split_src, split_tgt, tcfg)
    model, gen, tlog = trainer.fit()
    report = evaluate(
        model, cross, split_tgt, ks=cfg.ks, virtual_sources=trainer.virtual, part="test"
    )
    wrapper = {
        "mode": mode_str,
        "seed": seed,
        "lambda_effective": model.effective_lam,
        "report": report.to_dict(),
    }
    if mode_str == "target-only":
        wrapper["provenance"] = "target-only: cross-domain flow disabled (lambda=0)"
    os.makedirs(out_dir, exist_ok=True)
    _write_json(os.path.join(out_dir, f"report_{mode_str}_{seed}.json"), wrapper)
    tlog.save_jsonl(os.path.join(out_dir, f"trainlog_{mode_str}_{seed}.jsonl"))
    if dump_attention and gen is not None and trainer.profiles is not None:
        non = list(cross.target_nonoverlap)[:50]
        dump = []
        for u in non:
            bd = breakdown_for_user(
                gen, int(u), cross, trainer.store.get("emb_tgt_user"), trainer.profiles
            )
            top = np.argsort(-bd.alpha, kind="stable")[:10]
            dump.append(
                {
                    "user": int(u),
                    "top_alpha": [
                        [int(cross.overlap_tgt[j]), float(bd.alpha[j])] for j in top
                    ],
                }
            )
        _write_json(os.path.join(out_dir, f"attention_{mode_str}_{seed}.json"), dump)
    return wrapper


def _metric_fields(report_dict: dict) -> dict:
    """Flatten an EvalReport dict into {'hr@10': {'all':..,'ugf':..}, ...}."""
    out = {}
    for row in report_dict["rows"]:
        out[f"{row['metric']}@{row['K']}"] = {
            k: row[k] for k in ("all", "overlap", "nonoverlap", "ugf")
        }
    return out


def summarize(results: dict[str, list[dict]]) -> dict:
    """Cross-seed mean/std per mode, metric, and field."""
    summary = {}
    for mode, runs in results.items():
        flat = [_metric_fields(r["report"]) for r in runs]
        mode_sum = {}
        for key in flat[0]:
            mode_sum[key] = {}
            for fld in ("all", "overlap", "nonoverlap", "ugf"):
                vals = [f[key][fld] for f in flat]
                if any(v is None for v in vals):
                    mode_sum[key][fld] = None
                else:
                    mode_sum[key][fld] = {
                        "mean": float(np.mean(vals)),
                        "std": float(np.std(vals)),
                        "per_seed": [float(v) for v in vals],
                    }
        summary[mode] = mode_sum
    return summary


def comparison_table(summary: dict, base: str = "cdr", treated: str = "cdr-vug") -> dict:
    """Accuracy and fairness deltas of VUG over the plain CDR baseline,
    with both absolute and relative aggregate improvement fields.
    """
    if base not in summary or treated not in summary:
        return {"note": f"needs both {base!r} and {treated!r} runs"}
    rows = []
    acc_rel, acc_abs, fair_rel, fair_abs = [], [], [], []
    for key in summary[base]:
        b_all = summary[base][key]["all"]["mean"]
        t_all = summary[treated][key]["all"]["mean"]
        b_ugf = summary[base][key]["ugf"]
        t_ugf = summary[treated][key]["ugf"]
        row = {
            "metric": key,
            "accuracy_without_vug": b_all,
            "accuracy_with_vug": t_all,
            "accuracy_abs_delta": t_all - b_all,
            "accuracy_rel_delta_pct": (100.0 * (t_all - b_all) / b_all) if b_all else None,
        }
        acc_abs.append(row["accuracy_abs_delta"])
        if row["accuracy_rel_delta_pct"] is not None:
            acc_rel.append(row["accuracy_rel_delta_pct"])
        if b_ugf is not None and t_ugf is not None:
            bu, tu = b_ugf["mean"], t_ugf["mean"]
            row["ugf_without_vug"] = bu
            row["ugf_with_vug"] = tu
            row["ugf_abs_reduction"] = bu - tu
            row["ugf_rel_reduction_pct"] = (100.0 * (bu - tu) / bu) if bu else None
            fair_abs.append(row["ugf_abs_reduction"])
            if row["ugf_rel_reduction_pct"] is not None:
                fair_rel.append(row["ugf_rel_reduction_pct"])
        rows.append(row)
    return {
        "rows": rows,
        "accuracy_improvement_pct": float(np.mean(acc_rel)) if acc_rel else None,
        "accuracy_improvement_abs": float(np.mean(acc_abs)) if acc_abs else None,
        "fairness_improvement_pct": float(np.mean(fair_rel)) if fair_rel else None,
        "fairness_improvement_abs": float(np.mean(fair_abs)) if fair_abs else None,
    }


def run_experiment(cfg: ExperimentConfig, dump_attention: bool = False) -> dict:
    cfg.validate()
    os.makedirs(cfg.out_dir, exist_ok=True)
    t0 = time.time()
    results: dict[str, list[dict]] = {m: [] for m in cfg.modes}
    for seed in cfg.seeds:
        for mode_str in cfg.modes:
            results[mode_str].append(
                run_single(cfg, mode_str, seed, cfg.out_dir, dump_attention)
            )
    summary = summarize(results)
    _write_json(os.path.join(cfg.out_dir, "summary.json"), summary)
    comparison = comparison_table(summary)
    _write_json(os.path.join(cfg.out_dir, "comparison.json"), comparison)
    _write_json(
        os.path.join(cfg.out_dir, "run_meta.json"),
        {"seconds": time.time() - t0, "finished_unix": time.time()},
    )
    return {"summary": summary, "comparison": comparison}


def grid_search(cfg: ExperimentConfig, g1_grid, g2_grid) -> tuple[tuple[float, float], list[dict]]:
    """Train cdr-vug per grid point on one shared data build; select by
    validation NDCG@10; emit the full table.
    """
    cfg.validate()
    if not g1_grid or not g2_grid:
        raise ConfigError("grids must be non-empty")
    if any(not 0 <= g <= 1 for g in list(g1_grid) + list(g2_grid)):
        raise ConfigError("grid values must lie in [0, 1]")
    seed = cfg.seeds[0]
    cross = build_data(cfg, seed)
    split_src, split_tgt = prepare_splits(cross, seed)
    table = []
    best = None
    for g1 in g1_grid:
        for g2 in g2_grid:
            tcfg = dataclasses.replace(
                cfg.train, mode=CDR_VUG, gamma1=float(g1), gamma2=float(g2), seed=seed
            )
            trainer = Trainer(cross, split_src, split_tgt, tcfg)
            trainer.fit()
            val = max((e["val_ndcg10"] for e in trainer.log.evals), default=float("nan"))
            table.append({"gamma1": float(g1), "gamma2": float(g2), "val_ndcg10": val})
            if best is None or val > best[2]:
                best = (float(g1), float(g2), val)
    os.makedirs(cfg.out_dir, exist_ok=True)
    path = os.path.join(cfg.out_dir, "grid.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=["gamma1", "gamma2", "val_ndcg10"])
        writer.writeheader()
        writer.writerows(table)
    return (best[0], best[1]), table


def write_synth_tsv(cross: CrossDomainDataset, out_dir: str):
    """Materialize a synthetic dataset as loadable interaction files."""
    os.makedirs(out_dir, exist_ok=True)
    for name, ds in (("source", cross.source), ("target", cross.target)):
        user_ids = ds.user_ids()
        item_ids = ds.item_ids()
        lines = [f"{user_ids[u]}\t{item_ids[i]}\t5.0" for u, i in ds.interactions]
        _atomic_write(os.path.join(out_dir, f"{name}.tsv"), "\n".join(lines) + "\n")
    stats = [
        dataset_stats(cross.source, "source", len(cross.overlap)),
        dataset_stats(cross.target, "target", len(cross.overlap)),
    ]
    _write_json(os.path.join(out_dir, "stats.json"), stats)


def infolab_report(args) -> dict:
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            raw = json.load(fh)
        spec = channels.ChannelSpec(
            prior=np.asarray(raw["prior"]),
            p_s=np.asarray(raw["p_s"]),
            p_t=np.asarray(raw["p_t"]),
            n=raw.get("n", 100_000),
            seed=raw.get("seed", 0),
        )
    else:
        # binary symmetric demo: uniform latent, 10% flip on both sides
        spec = channels.ChannelSpec(
            prior=[0.5, 0.5], p_s=[[0.9, 0.1], [0.1, 0.9]], p_t=[[0.9, 0.1], [0.1, 0.9]]
        )
    report = channels.bias_experiment(spec)
    os.makedirs(args.out, exist_ok=True)
    _write_json(os.path.join(args.out, "infolab_report.json"), report)
    if args.sweep:
        rng = np.random.default_rng(args.seed)
        rows = []
        for _ in range(args.sweep):
            s = channels.random_spec(rng)
            r = channels.bias_experiment(s)
            rows.append(
                {
                    "n_z": s.n_z,
                    "v_s": s.v_s,
                    "v_t": s.v_t,
                    "h_cond_overlapping": r["overlapping"]["h_cond"],
                    "h_cond_nonoverlapping": r["nonoverlapping"]["h_cond"],
                    "bayes_overlapping": r["overlapping"]["bayes_error"],
                    "bayes_nonoverlapping": r["nonoverlapping"]["bayes_error"],
                    "fano_overlapping": r["overlapping"]["fano_lower_bound"],
                    "fano_nonoverlapping": r["nonoverlapping"]["fano_lower_bound"],
                }
            )
        path = os.path.join(args.out, "infolab_sweep.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
            writer.writeheader()
            writer.writerows(rows)
    return report


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.seed is not None:
        cfg.seeds = [args.seed]
    if args.mode is not None:
        cfg.modes = [args.mode]
    if args.out is not None:
        cfg.out_dir = args.out
    if args.max_users is not None:
        cfg.max_users = args.max_users
    train_updates = {}
    if args.gamma1 is not None:
        train_updates["gamma1"] = args.gamma1
    if args.gamma2 is not None:
        train_updates["gamma2"] = args.gamma2
    if train_updates:
        cfg.train = dataclasses.replace(cfg.train, **train_updates)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vuglab",
        description="Fairness-aware cross-domain recommendation lab",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--mode", choices=sorted(MODE_MAP), default=None)
        p.add_argument("--gamma1", type=float, default=None)
        p.add_argument("--gamma2", type=float, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--max-users", type=int, default=None)
        p.add_argument("--dump-attention", action="store_true")

    p_synth = sub.add_parser("synth", help="generate synthetic data files")
    common(p_synth)
    p_train = sub.add_parser("train", help="train and evaluate per config")
    common(p_train)
    p_train.add_argument("--resume", help="checkpoint to restore before training")
    p_eval = sub.add_parser("eval", help="evaluate a saved checkpoint")
    common(p_eval)
    p_eval.add_argument("--checkpoint", required=True)
    p_grid = sub.add_parser("grid", help="gamma1/gamma2 grid search")
    common(p_grid)
    p_grid.add_argument("--grid-step", type=float, default=0.1)
    p_info = sub.add_parser("infolab", help="latent-channel bias report")
    p_info.add_argument("--spec", help="JSON ChannelSpec")
    p_info.add_argument("--sweep", type=int, default=0, help="random specs for a CSV sweep")
    p_info.add_argument("--seed", type=int, default=0)
    p_info.add_argument("--out", default="runs")
    return parser


def _load_cfg(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    cfg = _apply_overrides(cfg, args)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "infolab":
            report = infolab_report(args)
            print(json.dumps(report, indent=2, sort_keys=True))
            return 0
        cfg = _load_cfg(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 3
    try:
        if args.command == "synth":
            seed = cfg.seeds[0]
            spec = dataclasses.replace(cfg.synthetic, seed=seed)
            write_synth_tsv(synth_cdr(spec), cfg.out_dir)
            print(f"wrote synthetic data to {cfg.out_dir}")
        elif args.command == "train":
            if getattr(args, "resume", None):
                cross = build_data(cfg, cfg.seeds[0])
                split_src, split_tgt = prepare_splits(cross, cfg.seeds[0])
                tcfg = dataclasses.replace(
                    cfg.train, mode=MODE_MAP[cfg.modes[0]], seed=cfg.seeds[0]
                )
                trainer = Trainer(cross, split_src, split_tgt, tcfg)
                trainer.resume_from(args.resume)
                trainer.fit()
                report = evaluate(
                    trainer.model, cross, split_tgt, ks=cfg.ks,
                    virtual_sources=trainer.virtual, part="test",
                )
                os.makedirs(cfg.out_dir, exist_ok=True)
                _write_json(
                    os.path.join(cfg.out_dir, "report_resumed.json"), report.to_dict()
                )
            else:
                out = run_experiment(cfg, dump_attention=args.dump_attention)
                print(json.dumps(out["comparison"], indent=2, sort_keys=True))
        elif args.command == "eval":
            seed = cfg.seeds[0]
            cross = build_data(cfg, seed)
            split_src, split_tgt = prepare_splits(cross, seed)
            tcfg = dataclasses.replace(cfg.train, mode=MODE_MAP[cfg.modes[0]], seed=seed)
            trainer = Trainer(cross, split_src, split_tgt, tcfg)
            trainer.resume_from(args.checkpoint)
            if trainer.needs_virtual:
                trainer.refresh_virtuals()
            report = evaluate(
                trainer.model, cross, split_tgt, ks=cfg.ks,
                virtual_sources=trainer.virtual, part="test",
            )
            os.makedirs(cfg.out_dir, exist_ok=True)
            _write_json(os.path.join(cfg.out_dir, "report_eval.json"), report.to_dict())
            print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
        elif args.command == "grid":
            step = args.grid_step
            grid = [round(step * i, 10) for i in range(int(round(1.0 / step)) + 1)]
            best, _ = grid_search(cfg, grid, grid)
            print(f"best (gamma1, gamma2) = {best}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure: report stage and fail loudly
        print(f"runtime failure in {args.command}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
