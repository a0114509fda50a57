"""End-to-end orchestration: synth, inject, audit, train all requested
mitigation modes, evaluate against both references, separability, report.

Every stage writes its artifacts under the output directory; repeated
runs with the same configuration produce byte-identical files. Clean
masks are touched only by clean-reference evaluation.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .audit import run_audit
from .config import RunConfig, derive_seed
from .corpus import generate, read_manifest, write_manifest
from .evaluation import aggregate_reports, evaluate
from .inject import inject
from .learner import auto_condition_train, gap_features, save_model, train, write_history
from .report import audit_row, mode_row, write_report
from .separability import separability_report
from .stats import bias_indicators
from .utils import thread_map

__all__ = ["run_pipeline", "run_seed", "train_mode", "compute_embeddings"]


def train_mode(corpus, run_cfg: RunConfig, mode: str, seed: int):
    """Train one mitigation mode; returns (model, history, clean group used
    at inference, extra metadata)."""
    biased_group = run_cfg.bias_spec().target_group
    meta = {}
    if mode == "auto":
        cfg = run_cfg.train_config(seed=seed, mitigation="auto")
        result = auto_condition_train(corpus, cfg)
        meta["discovered_clean_group"] = result.clean_group
        meta["low_confidence"] = result.low_confidence
        return result.model, result.history, result.clean_group, meta
    if mode in ("asym_mask", "combined"):
        cfg = run_cfg.train_config(seed=seed, mitigation=mode, biased_group=biased_group)
    else:
        cfg = run_cfg.train_config(seed=seed, mitigation=mode)
    model, history = train(corpus, cfg)
    return model, history, corpus.clean_group, meta


def compute_embeddings(model, corpus):
    vectors = np.stack([gap_features(model, s.image) for s in corpus])
    groups = np.array([s.group for s in corpus])
    ids = [s.id for s in corpus]
    return vectors, groups, ids


def run_seed(run_cfg: RunConfig, seed: int, out_dir: str) -> dict:
    """One full pipeline pass for a single seed; returns summary data."""
    os.makedirs(out_dir, exist_ok=True)
    corpus = generate(run_cfg.gen_config(seed=seed))
    write_manifest(corpus, os.path.join(out_dir, "corpus"))
    spec = run_cfg.bias_spec(seed=seed)
    biased, record = inject(corpus, spec)
    write_manifest(biased, os.path.join(out_dir, "biased"))
    record.write(os.path.join(out_dir, "biased", "injection.json"))

    audit_cfg = run_cfg.audit_train_config(seed=seed)
    audit = run_audit(
        biased, int(run_cfg.raw["audit"]["folds"]), audit_cfg, seed=derive_seed(seed, "folds")
    )
    audit.indicators = bias_indicators(audit.joints, biased.clean_group)
    audit.write(out_dir, save_maps=bool(run_cfg.raw["audit"]["save_maps"]), corpus=biased)

    modes = list(run_cfg.raw["pipeline"]["modes"])
    evals = {}
    baseline_model = None
    for mode in modes:
        model, history, force_group, meta = train_mode(biased, run_cfg, mode, seed)
        save_model(model, os.path.join(out_dir, f"model_{mode}.json"))
        write_history(os.path.join(out_dir, f"history_{mode}.csv"), history)
        if meta:
            with open(os.path.join(out_dir, f"train_{mode}.json"), "w", encoding="ascii") as f:
                json.dump(meta, f, indent=2)
                f.write("\n")
        if mode == "none":
            baseline_model = model
        evals[mode] = {}
        for reference in ("observed", "clean"):
            rep = evaluate(biased, model=model, reference=reference, force_group=force_group)
            rep.write(out_dir, stem=f"eval_{mode}_{reference}")
            evals[mode][reference] = rep

    sep_dict = None
    if run_cfg.raw["separability"].get("folds"):
        if baseline_model is None:
            baseline_model, _, _, _ = train_mode(biased, run_cfg, "none", seed)
        vectors, groups, ids = compute_embeddings(baseline_model, biased)
        sep = separability_report(
            vectors,
            groups,
            folds=int(run_cfg.raw["separability"]["folds"]),
            n_permutations=int(run_cfg.raw["separability"]["n_permutations"]),
            seed=derive_seed(seed, "separability"),
        )
        sep.write(out_dir, ids=ids, groups=groups)
        sep_dict = sep.to_dict()

    return {
        "seed": seed,
        "audit": audit.to_dict(),
        "clean_group": biased.clean_group,
        "evals": {
            mode: {ref: rep.to_dict() for ref, rep in refs.items()} for mode, refs in evals.items()
        },
        "eval_reports": evals,
        "separability": sep_dict,
    }


def run_pipeline(run_cfg: RunConfig) -> str:
    """All seeds plus the aggregated report; returns the report path."""
    out = run_cfg.out
    os.makedirs(out, exist_ok=True)
    seeds = run_cfg.seeds
    results = thread_map(
        lambda s: run_seed(run_cfg, s, os.path.join(out, f"seed_{s}")), seeds
    )

    audit_rows = []
    spec = run_cfg.bias_spec()
    label_base = f"{spec.operator} beta={spec.beta} r={spec.radius}"
    for res in results:
        audit_rows.append(audit_row(f"{label_base} seed={res['seed']}", res["audit"], res["clean_group"]))

    mode_rows = []
    modes = list(run_cfg.raw["pipeline"]["modes"])
    for mode in modes:
        clean_reps = [r["eval_reports"][mode]["clean"] for r in results]
        obs_reps = [r["eval_reports"][mode]["observed"] for r in results]
        agg_clean = aggregate_reports(clean_reps)
        agg_obs = aggregate_reports(obs_reps)
        agg_clean.write(out, stem=f"eval_{mode}_clean")
        agg_obs.write(out, stem=f"eval_{mode}_observed")
        mode_rows.append(mode_row(mode, agg_clean.to_dict(), agg_obs.to_dict()))

    return write_report(out, audit_rows, mode_rows)
