"""Command-line pipeline driver.

Subcommands cover the full offline loop: ``generate`` synthetic engagement
data, ``train`` a model variant, ``evaluate`` a checkpoint, ``compare`` two
reports, ``ablate`` the variant ladder and the prediction heads, ``cluster``
user intent embeddings, and ``inspect`` any produced artifact. Every
artifact-writing command drops a manifest recording the resolved config,
its hash, the seed, and content hashes of the outputs.

Exit codes: 0 success, 2 configuration error, 3 data validation error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np
import yaml

from . import __version__
from .analytics import (adjusted_rand_index, attention_report, cluster_purity,
                        collect_intent_embeddings, kmeans_pp, pca_project)
from .config import Config, config_from_dict, load_config
from .data import (MONTH, WEEK, read_catalog, read_jsonl, read_latents,
                   generate_dataset, split_users, write_catalog, write_jsonl,
                   write_latents)
from .errors import ConfigError, DataValidationError, NumericError, ShapeError
from .manifest import file_sha256, load_manifest, verify_manifest, write_manifest
from .metrics import EvalReport, compare_reports, evaluate
from .models import RecModel
from .training import (apply_checkpoint, load_checkpoint, save_checkpoint,
                       train, write_loss_csv)

ARCH_ROWS = ("v0", "v1", "v2", "v3-1w", "v3-1m")
HEAD_ROWS = ("only-action_type", "only-genre", "only-movie_show", "only-tsr", "all")


# ---------------------------------------------------------------------------
# configuration plumbing

def _scalar(text: str):
    """Interpret a CLI override value with YAML scalar rules, so numbers,
    booleans, and lists come through typed."""
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError:
        return text


def _build_config(args, extra: dict | None = None) -> Config:
    overrides: dict = {}
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        overrides[key] = _scalar(value)
    if getattr(args, "seed", None) is not None:
        overrides["training.seed"] = args.seed
    if getattr(args, "threads", None) is not None:
        overrides["training.threads"] = args.threads
    overrides.update(extra or {})
    if args.config is not None and not os.path.exists(args.config):
        raise ConfigError(f"config file not found: {args.config}")
    return load_config(args.config, overrides)


def config_from_manifest(path) -> Config:
    """Rebuild the exact configuration a previous run recorded."""
    return config_from_dict(load_manifest(path)["config"])


def _config_for_checkpoint(args) -> Config:
    if args.config is not None:
        return _build_config(args)
    sibling = os.path.join(os.path.dirname(os.path.abspath(args.checkpoint)),
                           "manifest.json")
    if not os.path.exists(sibling):
        raise ConfigError(
            "no --config given and no manifest.json next to the checkpoint; "
            "pass --config explicitly")
    return config_from_manifest(sibling)


def _prepare_out(args, *filenames: str, command: str) -> str:
    out = args.out
    if out is None:
        raise ConfigError(f"{command} requires --out")
    os.makedirs(out, exist_ok=True)
    if command == "generate":
        existing = sorted(os.listdir(out))
        if existing and not args.force:
            raise ConfigError(
                f"output directory {out} is not empty ({existing[0]}, ...); "
                "pass --force to overwrite")
    else:
        clashes = [f for f in filenames if os.path.exists(os.path.join(out, f))]
        if clashes and not args.force:
            raise ConfigError(
                f"refusing to overwrite {', '.join(clashes)} in {out}; pass --force")
    return out


def _thread_pool(cfg: Config) -> ThreadPoolExecutor | None:
    n = cfg.training.threads
    return ThreadPoolExecutor(max_workers=n) if n > 1 else None


# ---------------------------------------------------------------------------
# generate

def cmd_generate(args) -> int:
    cfg = _build_config(args)
    seed = cfg.training.seed
    out = _prepare_out(args, command="generate")
    catalog, users, latents = generate_dataset(cfg.data, seed)
    states_by_user = {u.user_id: s for u, s in zip(users, latents)}
    train_u, val_u, test_u = split_users(users, cfg.data.split_ratios, seed)

    artifacts = {}
    cat_path = os.path.join(out, "catalog.jsonl")
    write_catalog(cat_path, catalog)
    artifacts["catalog"] = cat_path
    counts = {}
    for name, subset in (("train", train_u), ("val", val_u), ("test", test_u)):
        path = os.path.join(out, f"{name}.jsonl")
        write_jsonl(path, subset)
        latent_path = os.path.join(out, f"{name}.latent.jsonl")
        write_latents(latent_path, subset, [states_by_user[u.user_id] for u in subset])
        artifacts[name] = path
        artifacts[f"{name}_latents"] = latent_path
        counts[name] = {"users": len(subset),
                        "interactions": sum(len(u) for u in subset)}
    write_manifest(out, "generate", cfg, artifacts, extra={"counts": counts})
    total = sum(c["interactions"] for c in counts.values())
    print(f"wrote {out}: {len(catalog.items)} items, "
          + ", ".join(f"{name}={c['users']} users" for name, c in counts.items())
          + f", {total} interactions (seed {seed})")
    return 0


# ---------------------------------------------------------------------------
# train

def _load_split(data_dir, split: str, cfg: Config):
    path = os.path.join(data_dir, f"{split}.jsonl")
    if not os.path.exists(path):
        raise DataValidationError(f"dataset file not found: {path}")
    return read_jsonl(path, cfg.data.num_items)


def cmd_train(args) -> int:
    extra: dict = {}
    if args.variant is not None:
        extra["variant.kind"] = args.variant
    if args.heads is not None:
        heads = args.heads.strip()
        extra["variant.heads"] = heads if heads == "all" else [
            h.strip() for h in heads.split(",") if h.strip()]
    if args.lam is not None:
        extra["training.intent_weight"] = args.lam
    if args.epochs is not None:
        extra["training.epochs"] = args.epochs
    cfg = _build_config(args, extra)
    out = _prepare_out(args, "checkpoint.json", "loss.csv", "manifest.json",
                       command="train")
    users = _load_split(args.data, "train", cfg)

    model = RecModel(cfg, np.random.default_rng(cfg.training.seed))
    epoch_offset = 0
    prior_rows: list[str] = []
    if args.resume is not None:
        apply_checkpoint(model, load_checkpoint(args.resume, cfg))
        prior_csv = os.path.join(os.path.dirname(os.path.abspath(args.resume)),
                                 "loss.csv")
        if os.path.exists(prior_csv):
            with open(prior_csv) as fh:
                prior_rows = fh.read().splitlines()[1:]
            epoch_offset = len(prior_rows)
        print(f"resuming from {args.resume} at epoch {epoch_offset}")

    pool = _thread_pool(cfg)
    try:
        trace = train(model, users, epoch_offset=epoch_offset, pool=pool,
                      progress=lambda s: print(
                          f"epoch {s.epoch}: item={s.item:.4f} total={s.total:.4f}",
                          flush=True))
    finally:
        if pool is not None:
            pool.shutdown()

    ckpt = os.path.join(out, "checkpoint.json")
    save_checkpoint(ckpt, model)
    loss_csv = os.path.join(out, "loss.csv")
    write_loss_csv(loss_csv, trace, [h.name for h in model.heads])
    if prior_rows:
        with open(loss_csv) as fh:
            lines = fh.read().splitlines()
        with open(loss_csv, "w") as fh:
            fh.write("\n".join([lines[0]] + prior_rows + lines[1:]) + "\n")

    extra_info = {
        "epochs_trained": epoch_offset + len(trace),
        "final_item_loss": trace[-1].item if trace else None,
        "final_total_loss": trace[-1].total if trace else None,
        "inputs": {"train": file_sha256(os.path.join(args.data, "train.jsonl"))},
    }
    write_manifest(out, "train", cfg, {"checkpoint": ckpt, "loss_csv": loss_csv},
                   extra=extra_info)
    if trace:
        print(f"trained {cfg.variant.kind} for {len(trace)} epochs: "
              f"final item loss {trace[-1].item:.4f}, checkpoint {ckpt}")
    return 0


# ---------------------------------------------------------------------------
# evaluate / compare

def cmd_evaluate(args) -> int:
    cfg = _config_for_checkpoint(args)
    out = _prepare_out(args, "report.json", "report.csv", "manifest.json",
                       command="evaluate")
    model = RecModel(cfg, np.random.default_rng(cfg.training.seed))
    apply_checkpoint(model, load_checkpoint(args.checkpoint, cfg))
    users = _load_split(args.data, args.split, cfg)
    report = evaluate(model, users)
    report.validate()
    report_json = os.path.join(out, "report.json")
    report.save_json(report_json)
    report_csv = os.path.join(out, "report.csv")
    report.save_csv(report_csv)
    write_manifest(out, "evaluate", cfg,
                   {"report_json": report_json, "report_csv": report_csv},
                   extra={"split": args.split, "checkpoint": args.checkpoint,
                          "item_mrr": report.item_mrr,
                          "item_wmrr": report.item_wmrr})
    print(f"{args.split}: item MRR {report.item_mrr:.4f}, "
          f"WMRR {report.item_wmrr:.4f} over {len(report.per_user)} users")
    for name in sorted(report.intent_mrr):
        print(f"  intent {name}: MRR {report.intent_mrr[name]:.4f} "
              f"({report.counts.get(name, 0)} users)")
    return 0


def cmd_compare(args) -> int:
    baseline = EvalReport.load_json(args.baseline)
    candidate = EvalReport.load_json(args.candidate)
    doc = compare_reports(baseline, candidate)
    for metric in ("item_mrr", "item_wmrr"):
        m = doc[metric]
        print(f"{metric}: {m['baseline']:.4f} -> {m['candidate']:.4f} "
              f"({m['pct_delta']:+.2f}%)")
    t = doc["item_t_test"]
    if t["degenerate"]:
        print("paired t-test: degenerate (per-user differences have zero variance)")
    else:
        print(f"paired t-test: t={t['t']:.3f}, p={t['p']:.4g}, df={t['df']}")
    for name, m in sorted(doc["intent_mrr"].items()):
        print(f"intent {name}: {m['baseline']:.4f} -> {m['candidate']:.4f} "
              f"({m['pct_delta']:+.2f}%)")
    if args.out is not None:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "comparison.json")
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {path}")
    return 0


# ---------------------------------------------------------------------------
# ablate

def row_config(cfg: Config, row: str) -> Config:
    """Config for one ablation-table row, derived from the base config."""
    if row == "v0":
        return cfg.with_variant("v0")
    if row in ("v1", "v2"):
        return cfg.with_variant(row)
    if row == "v3-1w":
        return replace(cfg.with_variant("v3"),
                       features=replace(cfg.features, window=WEEK))
    if row == "v3-1m":
        return replace(cfg.with_variant("v3"),
                       features=replace(cfg.features, window=MONTH))
    if row == "all":
        return cfg.with_variant("v3")
    if row.startswith("only-"):
        return cfg.with_variant("v3", (row[len("only-"):],))
    raise ConfigError(f"unknown ablation row {row!r}")


def train_and_score(cfg: Config, train_users, test_users,
                    pool: ThreadPoolExecutor | None = None) -> EvalReport:
    model = RecModel(cfg, np.random.default_rng(cfg.training.seed))
    train(model, train_users, pool=pool)
    return evaluate(model, test_users)


def _ablation_data(cfg: Config, seed: int, data_dir):
    if data_dir is not None:
        train_u = read_jsonl(os.path.join(data_dir, "train.jsonl"), cfg.data.num_items)
        test_u = read_jsonl(os.path.join(data_dir, "test.jsonl"), cfg.data.num_items)
        return train_u, test_u
    _, users, _ = generate_dataset(cfg.data, seed)
    train_u, _, test_u = split_users(users, cfg.data.split_ratios, seed)
    return train_u, test_u


def run_ablation(cfg: Config, seeds, mode: str = "both", data_dir=None,
                 pool: ThreadPoolExecutor | None = None, log=None) -> dict:
    """Train every table row over the given seeds and aggregate the scores.

    Architecture rows are scored against the flat multi-task variant (v1);
    head rows against the item-only variant (v0). Rows whose configs hash
    identically share one training run per seed.
    """
    want_arch = mode in ("architecture", "both")
    want_heads = mode in ("heads", "both")
    if not (want_arch or want_heads):
        raise ConfigError(f"unknown ablation mode {mode!r}")
    needed: set[str] = set()
    if want_arch:
        needed.update(ARCH_ROWS)
    if want_heads:
        needed.update(HEAD_ROWS)
        needed.add("v0")
    scores: dict[str, dict[str, list[float]]] = {
        row: {"mrr": [], "wmrr": []} for row in needed}

    for seed in seeds:
        seeded = replace(cfg, training=replace(cfg.training, seed=seed))
        train_u, test_u = _ablation_data(seeded, seed, data_dir)
        cache: dict[str, EvalReport] = {}
        for row in sorted(needed):
            rcfg = row_config(seeded, row)
            key = rcfg.hash()
            if key not in cache:
                if log:
                    log(f"[seed {seed}] training {row} "
                        f"({len(train_u)} train users)")
                cache[key] = train_and_score(rcfg, train_u, test_u, pool)
            report = cache[key]
            scores[row]["mrr"].append(report.item_mrr)
            scores[row]["wmrr"].append(report.item_wmrr)

    def avg(row, metric):
        vals = scores[row][metric]
        return math.fsum(vals) / len(vals)

    def table(rows, baseline_row):
        base_mrr = avg(baseline_row, "mrr")
        base_wmrr = avg(baseline_row, "wmrr")
        out_rows = []
        for row in rows:
            m, w = avg(row, "mrr"), avg(row, "wmrr")
            out_rows.append({
                "row": row,
                "item_mrr": m,
                "item_wmrr": w,
                "pct_mrr_vs_baseline": 100.0 * (m - base_mrr) / base_mrr,
                "pct_wmrr_vs_baseline": 100.0 * (w - base_wmrr) / base_wmrr,
                "per_seed_mrr": scores[row]["mrr"],
                "per_seed_wmrr": scores[row]["wmrr"],
            })
        return {"baseline": baseline_row,
                "baseline_item_mrr": base_mrr,
                "baseline_item_wmrr": base_wmrr,
                "rows": out_rows}

    doc: dict = {"seeds": list(seeds), "mode": mode}
    if want_arch:
        doc["architecture"] = table(ARCH_ROWS, "v1")
    if want_heads:
        doc["heads"] = table(HEAD_ROWS, "v0")
    return doc


def _markdown_table(title: str, section: dict) -> str:
    lines = [f"## {title}", "",
             f"Baseline: {section['baseline']} "
             f"(item MRR {section['baseline_item_mrr']:.4f}, "
             f"WMRR {section['baseline_item_wmrr']:.4f})", "",
             "| variant | item MRR | item WMRR | MRR vs baseline | WMRR vs baseline |",
             "|---|---|---|---|---|"]
    for r in section["rows"]:
        lines.append(f"| {r['row']} | {r['item_mrr']:.4f} | {r['item_wmrr']:.4f} "
                     f"| {r['pct_mrr_vs_baseline']:+.2f}% "
                     f"| {r['pct_wmrr_vs_baseline']:+.2f}% |")
    lines.append("")
    return "\n".join(lines)


def _write_ablation_files(out: str, doc: dict) -> dict[str, str]:
    artifacts = {}
    json_path = os.path.join(out, "ablation.json")
    with open(json_path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    artifacts["ablation_json"] = json_path

    md = [f"# Ablation over seeds {doc['seeds']}", ""]
    if "architecture" in doc:
        md.append(_markdown_table("Variant ladder", doc["architecture"]))
    if "heads" in doc:
        md.append(_markdown_table("Prediction heads", doc["heads"]))
    md_path = os.path.join(out, "ablation.md")
    with open(md_path, "w") as fh:
        fh.write("\n".join(md))
    artifacts["ablation_md"] = md_path

    csv_path = os.path.join(out, "ablation.csv")
    with open(csv_path, "w") as fh:
        fh.write("table,row,item_mrr,item_wmrr,pct_mrr_vs_baseline,pct_wmrr_vs_baseline\n")
        for table_name in ("architecture", "heads"):
            if table_name not in doc:
                continue
            for r in doc[table_name]["rows"]:
                fh.write(f"{table_name},{r['row']},{repr(r['item_mrr'])},"
                         f"{repr(r['item_wmrr'])},{repr(r['pct_mrr_vs_baseline'])},"
                         f"{repr(r['pct_wmrr_vs_baseline'])}\n")
    artifacts["ablation_csv"] = csv_path
    return artifacts


def cmd_ablate(args) -> int:
    extra: dict = {}
    if args.epochs is not None:
        extra["training.epochs"] = args.epochs
    cfg = _build_config(args, extra)
    out = _prepare_out(args, "ablation.json", "ablation.md", "ablation.csv",
                       "manifest.json", command="ablate")
    if args.seeds is not None:
        seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    else:
        seeds = [cfg.training.seed]
    pool = _thread_pool(cfg)
    try:
        doc = run_ablation(cfg, seeds, mode=args.mode, data_dir=args.data,
                           pool=pool, log=lambda msg: print(msg, flush=True))
    finally:
        if pool is not None:
            pool.shutdown()
    artifacts = _write_ablation_files(out, doc)
    write_manifest(out, "ablate", cfg, artifacts,
                   extra={"seeds": seeds, "mode": args.mode,
                          "data_dir": args.data})
    with open(artifacts["ablation_md"]) as fh:
        print(fh.read())
    return 0


# ---------------------------------------------------------------------------
# cluster

def cmd_cluster(args) -> int:
    cfg = _config_for_checkpoint(args)
    out = _prepare_out(args, "assignments.csv", "clusters.json", "attention.json",
                       "manifest.json", command="cluster")
    model = RecModel(cfg, np.random.default_rng(cfg.training.seed))
    apply_checkpoint(model, load_checkpoint(args.checkpoint, cfg))
    users = _load_split(args.data, args.split, cfg)
    latent_path = os.path.join(args.data, f"{args.split}.latent.jsonl")
    latents = read_latents(latent_path) if os.path.exists(latent_path) else None

    embeddings = collect_intent_embeddings(model, users, latents)
    points = np.array([e.z for e in embeddings])
    result = kmeans_pp(points, args.k, seed=cfg.training.seed)
    projection = pca_project(points, out_dim=2)

    csv_path = os.path.join(out, "assignments.csv")
    with open(csv_path, "w") as fh:
        fh.write("user_id,cluster,x,y\n")
        for emb, cluster, (x, y) in zip(embeddings, result.assignments,
                                        projection.projected):
            fh.write(f"{emb.user_id},{cluster},{repr(float(x))},{repr(float(y))}\n")

    sizes = {str(c): int((result.assignments == c).sum()) for c in range(args.k)}
    summary = {
        "k": args.k,
        "users": len(embeddings),
        "inertia": result.inertia,
        "sizes": sizes,
        "explained_variance_ratio": [float(r) for r in projection.explained_ratio],
    }
    labels = [e.latent for e in embeddings]
    if all(lab is not None for lab in labels):
        summary["purity"] = cluster_purity(result.assignments, labels)
        summary["adjusted_rand_index"] = adjusted_rand_index(result.assignments, labels)
    json_path = os.path.join(out, "clusters.json")
    with open(json_path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")

    report = attention_report(embeddings, [h.name for h in model.heads],
                              top_k=args.top_k)
    att_path = os.path.join(out, "attention.json")
    with open(att_path, "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")

    write_manifest(out, "cluster", cfg,
                   {"assignments": csv_path, "clusters": json_path,
                    "attention": att_path},
                   extra={"split": args.split, "k": args.k,
                          "checkpoint": args.checkpoint})
    line = f"clustered {len(embeddings)} users into {args.k} groups, inertia {result.inertia:.3f}"
    if "purity" in summary:
        line += (f", purity {summary['purity']:.3f}, "
                 f"ARI {summary['adjusted_rand_index']:.3f}")
    print(line)
    print("attention histogram: "
          + ", ".join(f"{k}={v}" for k, v in sorted(report["histogram"].items())))
    return 0


# ---------------------------------------------------------------------------
# inspect

def _inspect_manifest(path) -> int:
    manifest = load_manifest(path)
    print(f"manifest: {manifest['command']} run, engine {manifest.get('engine_version')}")
    print(f"  created: {manifest.get('created_utc')}")
    print(f"  seed {manifest.get('seed')}, variant {manifest.get('variant')}, "
          f"config hash {manifest['config_hash']}")
    for name, entry in sorted(manifest["artifacts"].items()):
        print(f"  artifact {name}: {entry['path']} ({entry['bytes']} bytes)")
    problems = verify_manifest(path)
    if problems:
        for p in problems:
            print(f"  MISMATCH {p}")
        return 3
    print("  all artifact hashes verified")
    return 0


def _inspect_jsonl(path) -> int:
    with open(path) as fh:
        first = ""
        for line in fh:
            if line.strip():
                first = line
                break
    if not first:
        print(f"{path}: empty file")
        return 0
    keys = set(json.loads(first))
    if "item_id" in keys:
        catalog = read_catalog(path)
        shows = sum(1 for it in catalog.items if it.movie_show == 1)
        print(f"catalog: {len(catalog.items)} items "
              f"({len(catalog.items) - shows} movies, {shows} shows)")
        return 0
    if "latents" in keys:
        latents = read_latents(path)
        states = sorted({s for v in latents.values() for s in v})
        print(f"latent labels: {len(latents)} users, states {states}")
        return 0
    users = read_jsonl(path)
    lengths = [len(u) for u in users]
    total = sum(lengths)
    print(f"dataset: {len(users)} users, {total} interactions, "
          f"length min/mean/max = {min(lengths)}/{total / len(users):.1f}/{max(lengths)}")
    return 0


def _inspect_json(path) -> int:
    with open(path) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataValidationError(f"{path}: invalid JSON ({exc})") from exc
    if "params" in doc and "format_version" in doc:
        shapes = {name: tuple(p["shape"]) for name, p in doc["params"].items()}
        total = sum(int(np.prod(s)) for s in shapes.values())
        print(f"checkpoint: format {doc['format_version']}, "
              f"config hash {doc.get('config_hash')}, "
              f"{len(shapes)} tensors, {total} parameters")
        return 0
    if "item_mrr" in doc:
        print(f"report: item MRR {doc['item_mrr']:.4f}, "
              f"WMRR {doc['item_wmrr']:.4f}, {len(doc.get('per_user', []))} users")
        for name, v in sorted(doc.get("intent_mrr", {}).items()):
            print(f"  intent {name}: MRR {v:.4f}")
        return 0
    print(f"{path}: JSON with top-level keys {sorted(doc)}")
    return 0


def cmd_inspect(args) -> int:
    path = args.path
    if os.path.isdir(path):
        manifest = os.path.join(path, "manifest.json")
        if not os.path.exists(manifest):
            raise DataValidationError(f"{path}: directory has no manifest.json")
        return _inspect_manifest(manifest)
    if not os.path.exists(path):
        raise DataValidationError(f"no such artifact: {path}")
    name = os.path.basename(path)
    if name == "manifest.json":
        return _inspect_manifest(path)
    if name.endswith(".jsonl"):
        return _inspect_jsonl(path)
    if name.endswith(".json"):
        return _inspect_json(path)
    if name.endswith(".csv"):
        with open(path) as fh:
            lines = fh.read().splitlines()
        print(f"csv: {len(lines) - 1} rows, columns {lines[0] if lines else ''}")
        return 0
    raise DataValidationError(f"cannot inspect {path}: unknown artifact type")


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML config file (defaults when omitted)")
    common.add_argument("--seed", type=int, help="override training.seed")
    common.add_argument("--out", help="output directory")
    common.add_argument("--force", action="store_true",
                        help="overwrite existing outputs")
    common.add_argument("--threads", type=int,
                        help="worker threads for gradient computation")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override any config value, repeatable")

    parser = argparse.ArgumentParser(
        prog="sessionrec",
        description="hierarchical multi-task session recommender pipeline")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", parents=[common],
                       help="write a synthetic dataset with planted intents")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", parents=[common], help="train a model variant")
    p.add_argument("--data", required=True, help="directory from `generate`")
    p.add_argument("--variant", choices=("v0", "v1", "v2", "v3"))
    p.add_argument("--heads",
                   help="comma-separated intent heads, or `all` (default)")
    p.add_argument("--lambda", dest="lam", type=float,
                   help="weight on the intent losses in the joint objective")
    p.add_argument("--epochs", type=int)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common],
                       help="rank held-out items with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", parents=[common],
                       help="relative deltas and a paired t-test between two reports")
    p.add_argument("baseline", help="report.json of the baseline run")
    p.add_argument("candidate", help="report.json of the candidate run")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("ablate", parents=[common],
                       help="train the variant ladder and head subsets, tabulate deltas")
    p.add_argument("--data", help="fixed dataset directory (generated per seed when omitted)")
    p.add_argument("--mode", default="both",
                   choices=("architecture", "heads", "both"))
    p.add_argument("--seeds", help="comma-separated seeds, e.g. 0,1,2")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("cluster", parents=[common],
                       help="k-means over user intent embeddings plus attention report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--k", type=int, default=10, help="number of clusters")
    p.add_argument("--top-k", type=int, default=10,
                   help="exemplar users per head in the attention report")
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("inspect", parents=[common],
                       help="summarize a dataset, checkpoint, report, or manifest")
    p.add_argument("path")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataValidationError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, ShapeError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
