"""Provenance records for pipeline runs.

Every command that writes artifacts also writes a ``manifest.json`` next to
them: the resolved configuration and its hash, the seed, the variant, a
content hash per artifact, and the engine version. Wall-clock time appears
only here, so the artifacts themselves stay byte-reproducible.
"""

from __future__ import annotations

import hashlib
import json
import os
from datetime import datetime, timezone

from . import __version__
from .config import Config, config_from_dict
from .errors import DataValidationError

FORMAT_VERSION = "1"


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def build_manifest(command: str, cfg: Config, out_dir,
                   artifacts: dict[str, str], extra: dict | None = None) -> dict:
    """Describe one command's outputs. Artifact paths are stored relative to
    the manifest's directory so the whole directory can be moved."""
    entries = {}
    for name, path in sorted(artifacts.items()):
        entries[name] = {
            "path": os.path.relpath(path, out_dir),
            "sha256": file_sha256(path),
            "bytes": os.path.getsize(path),
        }
    return {
        "format_version": FORMAT_VERSION,
        "engine_version": __version__,
        "command": command,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "seed": cfg.training.seed,
        "variant": cfg.variant.kind,
        "config_hash": cfg.hash(),
        "config": cfg.to_dict(),
        "artifacts": entries,
        "extra": extra or {},
    }


def write_manifest(out_dir, command: str, cfg: Config,
                   artifacts: dict[str, str], extra: dict | None = None) -> str:
    path = os.path.join(out_dir, "manifest.json")
    manifest = build_manifest(command, cfg, out_dir, artifacts, extra)
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_manifest(path) -> dict:
    try:
        with open(path) as fh:
            manifest = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataValidationError(f"{path}: invalid manifest JSON ({exc})") from exc
    for key in ("format_version", "command", "config", "config_hash", "artifacts"):
        if key not in manifest:
            raise DataValidationError(f"{path}: manifest missing field {key!r}")
    return manifest


def verify_manifest(path) -> list[str]:
    """Recompute artifact hashes; return a list of mismatch descriptions
    (empty means everything still matches the recorded state)."""
    manifest = load_manifest(path)
    base = os.path.dirname(os.path.abspath(path))
    problems = []
    for name, entry in sorted(manifest["artifacts"].items()):
        target = os.path.join(base, entry["path"])
        if not os.path.exists(target):
            problems.append(f"{name}: missing file {entry['path']}")
            continue
        actual = file_sha256(target)
        if actual != entry["sha256"]:
            problems.append(f"{name}: hash changed ({entry['sha256'][:12]} -> {actual[:12]})")
    recomputed = config_from_dict(manifest["config"]).hash()
    if recomputed != manifest["config_hash"]:
        problems.append(f"config: hash changed ({manifest['config_hash']} -> {recomputed})")
    return problems
