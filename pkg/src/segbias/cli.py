"""Command-line interface.

Configuration comes from an optional JSON file plus ``--section.key``
flags mirroring its leaf keys; flags win. Exit codes: 0 success, 2 on
configuration or usage errors, 1 on runtime failures.
"""

from __future__ import annotations

import csv as _csv
import functools
import json
import os
import sys

import click
import numpy as np

from . import __version__, backend_name
from .audit import run_audit
from .config import default_config, load_config
from .corpus import generate, read_manifest, write_manifest
from .errors import ConfigError, SegbiasError
from .evaluation import evaluate
from .inject import inject
from .learner import load_model, save_model, write_history
from .pgm import read_pgm, read_ppm
from .pipeline import compute_embeddings, run_pipeline, run_seed, train_mode
from .report import audit_row, mode_row, write_report
from .separability import separability_report
from .stats import bias_indicators
from .tone import assign_tone


def config_options(fn):
    """Attach --config/--out/--seeds plus one flag per config leaf."""
    fn = click.option("--config", "config_path", type=click.Path(exists=True), default=None,
                      help="JSON run configuration.")(fn)
    fn = click.option("--out", default=None, help="Output directory.")(fn)
    fn = click.option("--seeds", default=None, help="Comma-separated run seeds.")(fn)
    for section, body in default_config().items():
        if not isinstance(body, dict):
            continue
        for key in body:
            fn = click.option(f"--{section}.{key}", f"{section}__{key}", default=None,
                              help=f"Override {section}.{key}.")(fn)
    return fn


def build_config(kwargs):
    config_path = kwargs.pop("config_path", None)
    out = kwargs.pop("out", None)
    seeds = kwargs.pop("seeds", None)
    overrides = {}
    for name, value in list(kwargs.items()):
        if "__" in name:
            kwargs.pop(name)
            if value is not None:
                overrides[name.replace("__", ".")] = value
    cfg = load_config(config_path, overrides)
    if out is not None:
        cfg.raw["out"] = out
    if seeds is not None:
        cfg.raw["seeds"] = [int(s) for s in str(seeds).split(",") if s.strip()]
    return cfg


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as exc:
            click.echo(f"configuration error: {exc}", err=True)
            sys.exit(2)
        except SegbiasError as exc:
            click.echo(f"error [{exc.__class__.__name__}]: {exc}", err=True)
            sys.exit(1)

    return wrapper


@click.group()
@click.version_option(__version__, message=f"segbias {__version__} (backend: {backend_name()})")
def main():
    """Detect and mitigate group-conditional label bias in segmentation."""


@main.command()
@config_options
@handle_errors
def synth(**kwargs):
    """Generate a synthetic corpus and write its manifest."""
    cfg = build_config(kwargs)
    corpus = generate(cfg.gen_config())
    path = write_manifest(corpus, os.path.join(cfg.out, "corpus"))
    click.echo(path)


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True))
@config_options
@handle_errors
def inject_cmd(manifest, **kwargs):
    """Apply group-conditional corruption to a corpus."""
    cfg = build_config(kwargs)
    corpus = read_manifest(manifest)
    biased, record = inject(corpus, cfg.bias_spec())
    out_dir = os.path.join(cfg.out, "biased")
    path = write_manifest(biased, out_dir)
    record.write(os.path.join(out_dir, "injection.json"))
    click.echo(path)


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--mode", default=None, help="Mitigation mode (defaults to train.mitigation).")
@config_options
@handle_errors
def train(manifest, mode, **kwargs):
    """Train the conditioned segmenter on a corpus."""
    cfg = build_config(kwargs)
    corpus = read_manifest(manifest)
    mode = mode or cfg.raw["train"]["mitigation"]
    model, history, force_group, meta = train_mode(corpus, cfg, mode, seed=cfg.seeds[0])
    os.makedirs(cfg.out, exist_ok=True)
    model_path = os.path.join(cfg.out, f"model_{mode}.json")
    save_model(model, model_path)
    write_history(os.path.join(cfg.out, f"history_{mode}.csv"), history)
    if meta:
        with open(os.path.join(cfg.out, f"train_{mode}.json"), "w", encoding="ascii") as f:
            json.dump(meta, f, indent=2)
            f.write("\n")
    click.echo(model_path)


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True))
@config_options
@handle_errors
def audit(manifest, **kwargs):
    """Run the confident-label audit over a corpus."""
    cfg = build_config(kwargs)
    corpus = read_manifest(manifest)
    result = run_audit(
        corpus, int(cfg.raw["audit"]["folds"]), cfg.audit_train_config(seed=cfg.seeds[0]),
        seed=cfg.seeds[0],
    )
    result.indicators = bias_indicators(result.joints, corpus.clean_group)
    path = result.write(cfg.out, save_maps=bool(cfg.raw["audit"]["save_maps"]), corpus=corpus)
    click.echo(path)


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", default=None, type=click.Path(exists=True),
              help="Checkpoint to embed with; trains an unconditioned model when omitted.")
@config_options
@handle_errors
def separability(manifest, model_path, **kwargs):
    """Embedding separability metrics between the two groups."""
    cfg = build_config(kwargs)
    corpus = read_manifest(manifest)
    if model_path:
        model = load_model(model_path)
    else:
        model, _, _, _ = train_mode(corpus, cfg, "none", seed=cfg.seeds[0])
    vectors, groups, ids = compute_embeddings(model, corpus)
    rep = separability_report(
        vectors, groups,
        folds=int(cfg.raw["separability"]["folds"]),
        n_permutations=int(cfg.raw["separability"]["n_permutations"]),
        seed=cfg.seeds[0],
    )
    path = rep.write(cfg.out, ids=ids, groups=groups)
    click.echo(path)


@main.command()
@click.option("--manifest", required=True, type=click.Path(exists=True))
@click.option("--model", "model_path", required=True, type=click.Path(exists=True))
@click.option("--reference", type=click.Choice(["observed", "clean"]), default="observed")
@click.option("--force-group", type=int, default=None, help="Conditioning group at inference.")
@config_options
@handle_errors
def evaluate_cmd(manifest, model_path, reference, force_group, **kwargs):
    """Score a trained model against observed or clean masks."""
    cfg = build_config(kwargs)
    corpus = read_manifest(manifest)
    model = load_model(model_path)
    rep = evaluate(corpus, model=model, reference=reference, force_group=force_group)
    path = rep.write(cfg.out, stem=f"eval_{reference}")
    click.echo(path)


@main.command()
@click.argument("pairs", nargs=-1, required=True)
@click.option("--out", "out_csv", default=None, help="CSV path (stdout when omitted).")
@click.option("--seed", default=0, type=int)
@handle_errors
def tone(pairs, out_csv, seed):
    """Skin-tone grouping from IMAGE.ppm MASK.pgm pairs."""
    if len(pairs) % 2 != 0:
        raise click.UsageError("tone expects IMAGE MASK pairs")
    rows = []
    for img_path, mask_path in zip(pairs[::2], pairs[1::2]):
        rgb = read_ppm(img_path)
        lesion = read_pgm(mask_path)
        color, angle, group = assign_tone(rgb, (lesion > 127).astype(np.uint8), seed=seed)
        rows.append([os.path.splitext(os.path.basename(img_path))[0],
                     repr(color.L), repr(color.a), repr(color.b), repr(angle), group.value])
    target = open(out_csv, "w", newline="", encoding="ascii") if out_csv else sys.stdout
    try:
        writer = _csv.writer(target)
        writer.writerow(["id", "L", "a", "b", "ita", "group"])
        writer.writerows(rows)
    finally:
        if out_csv:
            target.close()
            click.echo(out_csv)


@main.command()
@config_options
@handle_errors
def pipeline(**kwargs):
    """Full flow: synth, inject, audit, train all modes, evaluate, report."""
    cfg = build_config(kwargs)
    path = run_pipeline(cfg)
    click.echo(path)


@main.command()
@click.option("--run", "run_dir", required=True, type=click.Path(exists=True),
              help="Output directory of a previous pipeline run.")
@handle_errors
def report(run_dir):
    """Re-render report.md/report.csv from a pipeline run's artifacts."""
    seeds = sorted(
        d for d in os.listdir(run_dir) if d.startswith("seed_") and os.path.isdir(os.path.join(run_dir, d))
    )
    if not seeds:
        raise ConfigError(f"{run_dir} has no seed_* subdirectories")
    audit_rows = []
    for sd in seeds:
        audit_path = os.path.join(run_dir, sd, "audit.json")
        if not os.path.exists(audit_path):
            continue
        with open(audit_path, encoding="ascii") as f:
            audit_data = json.load(f)
        manifest = json.load(open(os.path.join(run_dir, sd, "biased", "manifest.json"), encoding="ascii"))
        audit_rows.append(audit_row(sd, audit_data, manifest["clean_group"]))
    mode_rows = []
    for name in sorted(os.listdir(run_dir)):
        if name.startswith("eval_") and name.endswith("_clean.json"):
            mode = name[len("eval_") : -len("_clean.json")]
            clean = json.load(open(os.path.join(run_dir, name), encoding="ascii"))
            obs_path = os.path.join(run_dir, f"eval_{mode}_observed.json")
            obs = json.load(open(obs_path, encoding="ascii")) if os.path.exists(obs_path) else None
            mode_rows.append(mode_row(mode, clean, obs))
    path = write_report(run_dir, audit_rows, mode_rows)
    click.echo(path)


main.add_command(inject_cmd, name="inject")
main.add_command(evaluate_cmd, name="evaluate")

if __name__ == "__main__":
    main()
