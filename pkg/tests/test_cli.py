"""End-to-end command pipeline checks at miniature scale: every subcommand,
exit codes, refusal semantics, manifests, and byte-level reproducibility."""

import json
import os

import pytest

from sessionrec.cli import config_from_manifest, main
from sessionrec.manifest import load_manifest, verify_manifest

MICRO_YAML = """\
data: {num_users: 30, num_items: 20, min_len: 4, max_len: 7, k_latent: 3,
       split_ratios: [0.86, 0.07, 0.07]}
features: {d_item: 6, d_meta: 3, d_short: 6, window: 3600, max_seq: 20}
model:
  intent: {d_model: 8, layers: 1, heads: 2, d_ffn: 12}
  item: {d_model: 10, layers: 1, heads: 2, d_ffn: 12}
  d_proj: 5
  pos_buckets: 8
training: {epochs: 2, batch_size: 8, lr: 0.01, seed: 0}
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def cfg_file(workdir):
    path = workdir / "micro.yaml"
    path.write_text(MICRO_YAML)
    return str(path)


@pytest.fixture(scope="module")
def dataset(workdir, cfg_file):
    out = workdir / "data"
    assert main(["generate", "--config", cfg_file, "--out", str(out)]) == 0
    return str(out)


@pytest.fixture(scope="module")
def trained(workdir, cfg_file, dataset):
    out = workdir / "run_v3"
    assert main(["train", "--config", cfg_file, "--data", dataset,
                 "--out", str(out)]) == 0
    return str(out)


# ---------------------------------------------------------------------------
# generate

def test_generate_writes_all_files_and_split_sizes(dataset):
    for name in ("catalog.jsonl", "train.jsonl", "val.jsonl", "test.jsonl",
                 "train.latent.jsonl", "val.latent.jsonl", "test.latent.jsonl",
                 "manifest.json"):
        assert os.path.exists(os.path.join(dataset, name)), name
    manifest = load_manifest(os.path.join(dataset, "manifest.json"))
    counts = manifest["extra"]["counts"]
    assert counts["train"]["users"] == 26
    assert counts["val"]["users"] == 2
    assert counts["test"]["users"] == 2


def test_generate_refuses_nonempty_dir_without_force(dataset, cfg_file):
    assert main(["generate", "--config", cfg_file, "--out", dataset]) == 2
    assert main(["generate", "--config", cfg_file, "--out", dataset,
                 "--force"]) == 0


def test_generate_is_byte_reproducible(workdir, cfg_file, dataset):
    other = workdir / "data_again"
    assert main(["generate", "--config", cfg_file, "--out", str(other)]) == 0
    for name in ("catalog.jsonl", "train.jsonl", "test.jsonl",
                 "train.latent.jsonl"):
        a = open(os.path.join(dataset, name), "rb").read()
        b = open(other / name, "rb").read()
        assert a == b, name


def test_generate_manifest_verifies(dataset):
    assert verify_manifest(os.path.join(dataset, "manifest.json")) == []


def test_missing_config_file_is_config_error(workdir):
    rc = main(["generate", "--config", str(workdir / "nope.yaml"),
               "--out", str(workdir / "x")])
    assert rc == 2


# ---------------------------------------------------------------------------
# train

def test_train_outputs_and_loss_rows(trained):
    for name in ("checkpoint.json", "loss.csv", "manifest.json"):
        assert os.path.exists(os.path.join(trained, name)), name
    rows = open(os.path.join(trained, "loss.csv")).read().splitlines()
    assert rows[0].startswith("epoch,item_loss,")
    assert len(rows) == 1 + 2  # header + one row per epoch


def test_train_refuses_existing_checkpoint_without_force(trained, cfg_file, dataset):
    rc = main(["train", "--config", cfg_file, "--data", dataset,
               "--out", trained])
    assert rc == 2


def test_train_v0_has_no_intent_columns(workdir, cfg_file, dataset):
    out = workdir / "run_v0"
    assert main(["train", "--config", cfg_file, "--data", dataset,
                 "--out", str(out), "--variant", "v0", "--epochs", "1"]) == 0
    header = open(out / "loss.csv").read().splitlines()[0]
    assert header == "epoch,item_loss,total"


def test_train_rejects_v0_with_heads(workdir, cfg_file, dataset):
    rc = main(["train", "--config", cfg_file, "--data", dataset,
               "--out", str(workdir / "bad"), "--variant", "v0",
               "--heads", "all"])
    assert rc == 2


def test_train_missing_data_dir_is_data_error(workdir, cfg_file):
    rc = main(["train", "--config", cfg_file, "--data", str(workdir / "nodata"),
               "--out", str(workdir / "r")])
    assert rc == 3


def test_train_is_byte_reproducible(workdir, cfg_file, dataset, trained):
    again = workdir / "run_v3_again"
    cfg = config_from_manifest(os.path.join(trained, "manifest.json"))
    # rebuilding from the recorded manifest config must reproduce the run
    assert cfg.hash() == load_manifest(os.path.join(trained, "manifest.json"))["config_hash"]
    assert main(["train", "--config", cfg_file, "--data", dataset,
                 "--out", str(again)]) == 0
    for name in ("checkpoint.json", "loss.csv"):
        a = open(os.path.join(trained, name), "rb").read()
        b = open(again / name, "rb").read()
        assert a == b, name


def test_train_resume_extends_loss_trace(workdir, cfg_file, dataset, trained):
    out = workdir / "run_resumed"
    rc = main(["train", "--config", cfg_file, "--data", dataset,
               "--out", str(out), "--epochs", "1",
               "--resume", os.path.join(trained, "checkpoint.json")])
    assert rc == 0
    rows = open(out / "loss.csv").read().splitlines()
    assert len(rows) == 1 + 3  # two prior epochs spliced in, one new
    assert [r.split(",")[0] for r in rows[1:]] == ["0", "1", "2"]


def test_set_override_lands_in_manifest(workdir, cfg_file, dataset):
    out = workdir / "run_set"
    assert main(["train", "--config", cfg_file, "--data", dataset,
                 "--out", str(out), "--epochs", "1",
                 "--set", "training.lr=0.005"]) == 0
    manifest = load_manifest(os.path.join(out, "manifest.json"))
    assert manifest["config"]["training"]["lr"] == 0.005
    assert manifest["config"]["training"]["epochs"] == 1


# ---------------------------------------------------------------------------
# evaluate / compare

@pytest.fixture(scope="module")
def evaluated(workdir, trained, dataset):
    out = workdir / "eval_v3"
    rc = main(["evaluate", "--checkpoint", os.path.join(trained, "checkpoint.json"),
               "--data", dataset, "--out", str(out)])
    assert rc == 0
    return str(out)


def test_evaluate_outputs(evaluated):
    report = json.load(open(os.path.join(evaluated, "report.json")))
    assert 0.0 <= report["item_mrr"] <= 1.0
    assert len(report["per_user"]) == 2  # the micro test split
    assert os.path.exists(os.path.join(evaluated, "report.csv"))


def test_evaluate_is_byte_reproducible(workdir, trained, dataset, evaluated):
    again = workdir / "eval_again"
    rc = main(["evaluate", "--checkpoint", os.path.join(trained, "checkpoint.json"),
               "--data", dataset, "--out", str(again)])
    assert rc == 0
    a = open(os.path.join(evaluated, "report.json"), "rb").read()
    assert a == open(again / "report.json", "rb").read()


def test_evaluate_shape_mismatch_refused(workdir, trained, dataset, cfg_file):
    rc = main(["evaluate", "--checkpoint", os.path.join(trained, "checkpoint.json"),
               "--data", dataset, "--out", str(workdir / "eval_bad"),
               "--config", cfg_file, "--set", "model.d_proj=7"])
    assert rc == 2


def test_compare_self_is_zero_delta(evaluated, capsys):
    report = os.path.join(evaluated, "report.json")
    assert main(["compare", report, report]) == 0
    out = capsys.readouterr().out
    assert "+0.00%" in out
    assert "degenerate" in out


# ---------------------------------------------------------------------------
# ablate

def test_ablate_architecture_rows(workdir, cfg_file, dataset):
    out = workdir / "ablate_arch"
    rc = main(["ablate", "--config", cfg_file, "--data", dataset,
               "--out", str(out), "--mode", "architecture", "--epochs", "1"])
    assert rc == 0
    doc = json.load(open(out / "ablation.json"))
    rows = [r["row"] for r in doc["architecture"]["rows"]]
    assert rows == ["v0", "v1", "v2", "v3-1w", "v3-1m"]
    v1 = doc["architecture"]["rows"][1]
    assert v1["row"] == "v1" and v1["pct_mrr_vs_baseline"] == 0.0
    table = open(out / "ablation.csv").read()
    assert table.splitlines()[0] == (
        "table,row,item_mrr,item_wmrr,pct_mrr_vs_baseline,pct_wmrr_vs_baseline")
    assert os.path.exists(out / "ablation.md")


def test_ablate_head_rows(workdir, cfg_file, dataset):
    out = workdir / "ablate_heads"
    rc = main(["ablate", "--config", cfg_file, "--data", dataset,
               "--out", str(out), "--mode", "heads", "--epochs", "1"])
    assert rc == 0
    doc = json.load(open(out / "ablation.json"))
    rows = [r["row"] for r in doc["heads"]["rows"]]
    assert rows == ["only-action_type", "only-genre", "only-movie_show",
                    "only-tsr", "all"]
    assert doc["heads"]["baseline"] == "v0"


# ---------------------------------------------------------------------------
# cluster

def test_cluster_outputs(workdir, trained, dataset):
    out = workdir / "cluster"
    rc = main(["cluster", "--checkpoint", os.path.join(trained, "checkpoint.json"),
               "--data", dataset, "--split", "train", "--out", str(out),
               "--k", "3"])
    assert rc == 0
    rows = open(out / "assignments.csv").read().splitlines()
    assert rows[0] == "user_id,cluster,x,y"
    assert len(rows) == 1 + 26
    summary = json.load(open(out / "clusters.json"))
    assert summary["k"] == 3
    assert sum(summary["sizes"].values()) == 26
    assert 0.0 <= summary["purity"] <= 1.0
    att = json.load(open(out / "attention.json"))
    assert sum(att["histogram"].values()) == 26


def test_cluster_k_above_users_is_config_error(workdir, trained, dataset):
    rc = main(["cluster", "--checkpoint", os.path.join(trained, "checkpoint.json"),
               "--data", dataset, "--split", "test",
               "--out", str(workdir / "cluster_bad"), "--k", "50"])
    assert rc == 2


# ---------------------------------------------------------------------------
# inspect

def test_inspect_dataset_checkpoint_report(dataset, trained, evaluated, capsys):
    assert main(["inspect", os.path.join(dataset, "train.jsonl")]) == 0
    assert "dataset: 26 users" in capsys.readouterr().out
    assert main(["inspect", os.path.join(dataset, "catalog.jsonl")]) == 0
    assert "catalog: 20 items" in capsys.readouterr().out
    assert main(["inspect", os.path.join(trained, "checkpoint.json")]) == 0
    assert "checkpoint:" in capsys.readouterr().out
    assert main(["inspect", os.path.join(evaluated, "report.json")]) == 0
    assert "item MRR" in capsys.readouterr().out


def test_inspect_directory_verifies_manifest(trained, capsys):
    assert main(["inspect", trained]) == 0
    assert "all artifact hashes verified" in capsys.readouterr().out


def test_inspect_detects_tampering(workdir, cfg_file):
    out = workdir / "tamper"
    assert main(["generate", "--config", cfg_file, "--out", str(out)]) == 0
    with open(out / "test.jsonl", "a") as fh:
        fh.write("\n")
    assert main(["inspect", str(out)]) == 3


def test_inspect_missing_path_is_data_error(workdir):
    assert main(["inspect", str(workdir / "ghost.json")]) == 3
