"""Engagement data: domain types, validation, JSONL persistence, and a
seeded synthetic generator with planted per-user latent preference states.

Every interaction carries the full label set later used as prediction
targets: item id, action type, genres, movie/show flag, and a
time-since-release bucket, plus timestamp, duration, and episode position.

The generator is anchored to a fixed epoch instant so output depends only
on the config and seed, never on the wall clock. Users follow a sticky
Markov chain over global archetypes; each archetype prefers a genre block,
a main action, a movie/show side, a release-age bucket, and has its own
pacing (gap and duration scales). The hidden state per interaction is
written to a sibling file so clustering quality can be scored later.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .config import (
    GeneratorConfig,
    NUM_ACTION_TYPES,
    NUM_GENRES,
    NUM_MOVIE_SHOW,
    NUM_TSR,
    CORE_ACTION_TYPES,
)
from .errors import DataValidationError

ANCHOR_TS = 1_700_000_000  # all generated timestamps sit at or before this
WEEK = 604_800
MONTH = 2_592_000


def tsr_bucket(age_seconds: float) -> int:
    """Release-age bucket: 0 within a week, 1 within a month, 2 older."""
    if age_seconds <= WEEK:
        return 0
    if age_seconds <= MONTH:
        return 1
    return 2


@dataclass(frozen=True)
class Interaction:
    item_id: int
    action_type: int
    genres: tuple[int, ...]
    movie_show: int
    tsr: int
    ts: int
    dur: float
    ep: float  # position within a show as a fraction in [0,1]; 0 for movies


@dataclass
class UserSequence:
    user_id: int
    interactions: list[Interaction]

    def __len__(self):
        return len(self.interactions)


@dataclass(frozen=True)
class CatalogItem:
    item_id: int
    genres: tuple[int, ...]  # primary genre first
    movie_show: int
    release_ts: int


@dataclass
class Catalog:
    items: list[CatalogItem]

    def __len__(self):
        return len(self.items)


def validate_interaction(row: Interaction, num_items: int | None, where: str):
    if num_items is not None and not 0 <= row.item_id < num_items:
        raise DataValidationError(f"{where}: item_id {row.item_id} out of range [0, {num_items})")
    if row.item_id < 0:
        raise DataValidationError(f"{where}: item_id {row.item_id} is negative")
    if not 0 <= row.action_type < NUM_ACTION_TYPES:
        raise DataValidationError(
            f"{where}: action_type {row.action_type} out of range [0, {NUM_ACTION_TYPES})")
    if not 1 <= len(row.genres) <= 3:
        raise DataValidationError(f"{where}: need 1 to 3 genres, got {len(row.genres)}")
    if len(set(row.genres)) != len(row.genres):
        raise DataValidationError(f"{where}: duplicate genres {list(row.genres)}")
    for g in row.genres:
        if not 0 <= g < NUM_GENRES:
            raise DataValidationError(f"{where}: genre {g} out of range [0, {NUM_GENRES})")
    if row.movie_show not in (0, 1):
        raise DataValidationError(f"{where}: movie_show must be 0 or 1, got {row.movie_show}")
    if not 0 <= row.tsr < NUM_TSR:
        raise DataValidationError(f"{where}: tsr {row.tsr} out of range [0, {NUM_TSR})")
    if row.dur < 0:
        raise DataValidationError(f"{where}: dur must be >= 0, got {row.dur}")
    if not 0.0 <= row.ep <= 1.0:
        raise DataValidationError(f"{where}: ep must be in [0, 1], got {row.ep}")


def validate_sequence(user: UserSequence, num_items: int | None = None, where: str = ""):
    label = where or f"user {user.user_id}"
    if len(user.interactions) < 2:
        raise DataValidationError(
            f"{label}: need at least 2 interactions, got {len(user.interactions)}")
    prev_ts = None
    for i, row in enumerate(user.interactions):
        validate_interaction(row, num_items, f"{label}, interaction {i}")
        if prev_ts is not None and row.ts <= prev_ts:
            raise DataValidationError(
                f"{label}, interaction {i}: timestamps must be strictly increasing "
                f"({row.ts} after {prev_ts})")
        prev_ts = row.ts


# ---------------------------------------------------------------------------
# JSONL persistence

def _interaction_to_dict(r: Interaction) -> dict:
    return {"item_id": r.item_id, "action_type": r.action_type, "genres": list(r.genres),
            "movie_show": r.movie_show, "tsr": r.tsr, "ts": r.ts, "dur": r.dur, "ep": r.ep}


def write_jsonl(path, users: list[UserSequence]):
    with open(path, "w") as fh:
        for u in users:
            rec = {"user_id": u.user_id,
                   "interactions": [_interaction_to_dict(r) for r in u.interactions]}
            fh.write(json.dumps(rec, separators=(",", ":")) + "\n")


def _coerce_int(obj: dict, key: str, where: str) -> int:
    v = obj.get(key)
    if isinstance(v, bool) or not isinstance(v, int):
        raise DataValidationError(f"{where}: field {key!r} must be an integer, got {v!r}")
    return v


def _coerce_number(obj: dict, key: str, where: str) -> float:
    v = obj.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise DataValidationError(f"{where}: field {key!r} must be a number, got {v!r}")
    return float(v)


def read_jsonl(path, num_items: int | None = None) -> list[UserSequence]:
    users: list[UserSequence] = []
    seen_ids: set[int] = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{path}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataValidationError(f"{where}: invalid JSON ({exc})") from exc
            if not isinstance(rec, dict) or "user_id" not in rec or "interactions" not in rec:
                raise DataValidationError(f"{where}: record needs 'user_id' and 'interactions'")
            uid = _coerce_int(rec, "user_id", where)
            if uid in seen_ids:
                raise DataValidationError(f"{where}: duplicate user_id {uid}")
            seen_ids.add(uid)
            raw_rows = rec["interactions"]
            if not isinstance(raw_rows, list):
                raise DataValidationError(f"{where}: 'interactions' must be a list")
            rows = []
            for i, obj in enumerate(raw_rows):
                rw = f"{where}, interaction {i}"
                if not isinstance(obj, dict):
                    raise DataValidationError(f"{rw}: must be an object")
                genres = obj.get("genres")
                if not isinstance(genres, list):
                    raise DataValidationError(f"{rw}: field 'genres' must be a list")
                rows.append(Interaction(
                    item_id=_coerce_int(obj, "item_id", rw),
                    action_type=_coerce_int(obj, "action_type", rw),
                    genres=tuple(int(g) for g in genres),
                    movie_show=_coerce_int(obj, "movie_show", rw),
                    tsr=_coerce_int(obj, "tsr", rw),
                    ts=_coerce_int(obj, "ts", rw),
                    dur=_coerce_number(obj, "dur", rw),
                    ep=_coerce_number(obj, "ep", rw)))
            user = UserSequence(uid, rows)
            validate_sequence(user, num_items, where=f"{where} (user {uid})")
            users.append(user)
    return users


def write_latents(path, users: list[UserSequence], latents: list[list[int]]):
    with open(path, "w") as fh:
        for u, states in zip(users, latents):
            fh.write(json.dumps({"user_id": u.user_id, "latents": states},
                                separators=(",", ":")) + "\n")


def read_latents(path) -> dict[int, list[int]]:
    out: dict[int, list[int]] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataValidationError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            out[int(rec["user_id"])] = [int(s) for s in rec["latents"]]
    return out


def write_catalog(path, catalog: Catalog):
    with open(path, "w") as fh:
        for it in catalog.items:
            fh.write(json.dumps({"item_id": it.item_id, "genres": list(it.genres),
                                 "movie_show": it.movie_show, "release_ts": it.release_ts},
                                separators=(",", ":")) + "\n")


def read_catalog(path) -> Catalog:
    items: list[CatalogItem] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataValidationError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            item = CatalogItem(int(rec["item_id"]), tuple(int(g) for g in rec["genres"]),
                               int(rec["movie_show"]), int(rec["release_ts"]))
            if item.item_id != len(items):
                raise DataValidationError(
                    f"{path}:{lineno}: item ids must be dense and ordered, got {item.item_id}")
            items.append(item)
    if not items:
        raise DataValidationError(f"{path}: catalog is empty")
    return Catalog(items)


# ---------------------------------------------------------------------------
# Synthetic generator

@dataclass(frozen=True)
class Archetype:
    genre_block: tuple[int, ...]
    main_action: int
    movie_pref: int
    tsr_pref: int
    dur_scale: float


_DUR_SCALES = (600.0, 1800.0, 4500.0)


def build_archetypes(k_latent: int) -> list[Archetype]:
    """K archetypes with distinct but deliberately overlapping genre tastes.

    Neighboring states share part of their genre block, so one interaction's
    genre rarely pins down the state; the full mixture over a stretch of
    history does. The other preference axes stay distinct per state.
    """
    blocks: list[tuple[int, ...]] = []
    width = min(NUM_GENRES, max(2, round(1.5 * NUM_GENRES / k_latent)))
    for k in range(k_latent):
        start = round(k * NUM_GENRES / k_latent)
        blocks.append(tuple(sorted((start + j) % NUM_GENRES for j in range(width))))
    out = []
    for k in range(k_latent):
        out.append(Archetype(
            genre_block=blocks[k],
            main_action=CORE_ACTION_TYPES[k % len(CORE_ACTION_TYPES)],
            movie_pref=k % NUM_MOVIE_SHOW,
            tsr_pref=k % NUM_TSR,
            dur_scale=_DUR_SCALES[k % len(_DUR_SCALES)]))
    return out


def generate_catalog(cfg: GeneratorConfig, rng: np.random.Generator) -> Catalog:
    """Items with genres, movie/show flag, and release times spread so that
    every release-age bucket is populated near the anchor instant:
    roughly 8% within a week, 12% within a month, the rest older.
    """
    n = cfg.num_items
    n_fresh = max(1, round(0.08 * n))
    n_mid = max(1, round(0.12 * n))
    n_old = max(1, n - n_fresh - n_mid)
    releases = np.concatenate([
        ANCHOR_TS - rng.integers(0, WEEK, size=n_fresh),
        ANCHOR_TS - rng.integers(WEEK + 1, MONTH, size=n_mid),
        ANCHOR_TS - rng.integers(MONTH + 1, 3 * 365 * 86400, size=n_old),
    ])[:n]
    items = []
    for i in range(n):
        primary = int(rng.integers(NUM_GENRES))
        n_extra = int(rng.choice([0, 1, 2], p=[0.5, 0.3, 0.2]))
        pool = [g for g in range(NUM_GENRES) if g != primary]
        extras = rng.choice(pool, size=n_extra, replace=False) if n_extra else []
        items.append(CatalogItem(
            item_id=i,
            genres=(primary, *sorted(int(g) for g in extras)),
            movie_show=int(rng.integers(NUM_MOVIE_SHOW)),
            release_ts=int(releases[i])))
    return Catalog(items)


class _ItemSampler:
    """Latent-conditioned item sampling over a shared popularity prior.

    Filters the catalog by preferred genre block, movie/show side, and
    release-age bucket at the interaction's own timestamp, relaxing
    constraints in that reverse order whenever the pool comes up empty.
    Popularity is one global Zipf ranking, so latent states shape item
    choice only through those categorical filters.
    """

    def __init__(self, catalog: Catalog, exponent: float, rng: np.random.Generator):
        n = len(catalog)
        self.primary = np.array([it.genres[0] for it in catalog.items])
        self.ms = np.array([it.movie_show for it in catalog.items])
        self.release = np.array([it.release_ts for it in catalog.items], dtype=np.int64)
        order = rng.permutation(n)  # popularity ranking independent of item id
        ranks = np.empty(n, dtype=np.int64)
        ranks[order] = np.arange(n)
        self.pop = (ranks + 1.0) ** -exponent

    def sample(self, arch: Archetype, ts: int, cfg: GeneratorConfig,
               rng: np.random.Generator) -> int:
        released = self.release <= ts
        pop = self.pop
        filters = []
        if rng.random() < cfg.genre_focus:
            filters.append(np.isin(self.primary, arch.genre_block))
        if rng.random() < cfg.ms_focus:
            filters.append(self.ms == arch.movie_pref)
        if rng.random() < cfg.recency_strength:
            age = ts - self.release
            buckets = np.where(age <= WEEK, 0, np.where(age <= MONTH, 1, 2))
            filters.append(buckets == arch.tsr_pref)
        for keep in range(len(filters), -1, -1):
            mask = released.copy()
            for f in filters[:keep]:
                mask &= f
            if mask.any():
                w = pop * mask
                return int(rng.choice(len(mask), p=w / w.sum()))
        # degenerate catalog where nothing is released yet
        return int(rng.choice(len(pop), p=pop / pop.sum()))


def _sample_action(arch: Archetype, cfg: GeneratorConfig, rng: np.random.Generator) -> int:
    p = np.empty(NUM_ACTION_TYPES)
    core = list(CORE_ACTION_TYPES)
    other_core = [a for a in core if a != arch.main_action]
    non_core = [a for a in range(NUM_ACTION_TYPES) if a not in core]
    p[:] = 0.0
    p[arch.main_action] = cfg.action_focus
    p[other_core] = 0.15 / len(other_core)
    p[non_core] = (1.0 - cfg.action_focus - 0.15) / len(non_core)
    p = np.clip(p, 0.0, None)
    return int(rng.choice(NUM_ACTION_TYPES, p=p / p.sum()))


def generate_users(cfg: GeneratorConfig, catalog: Catalog,
                   rng: np.random.Generator) -> tuple[list[UserSequence], list[list[int]]]:
    archetypes = build_archetypes(cfg.k_latent)
    sampler = _ItemSampler(catalog, cfg.popularity_exponent, rng)
    users: list[UserSequence] = []
    latents: list[list[int]] = []
    item_by_id = catalog.items
    for u in range(cfg.num_users):
        n = int(rng.integers(cfg.min_len, cfg.max_len + 1))
        # exponential inter-arrival gaps at a per-user pace, drawn
        # log-uniformly so wall-clock windows and position offsets measure
        # genuinely different things across users
        pace = math.exp(rng.uniform(math.log(cfg.gap_hours_min * 3600.0),
                                    math.log(cfg.gap_hours_max * 3600.0)))
        gaps = [max(60, int(rng.exponential(pace))) for _ in range(n - 1)]
        # latent states persist in wall-clock time: the chance of keeping the
        # current state across a gap decays with the gap's length, so heavy
        # users see long same-state runs and sparse users switch often
        tau = cfg.dwell_hours * 3600.0
        states = [int(rng.integers(cfg.k_latent))]
        for g in gaps:
            if rng.random() < math.exp(-g / tau):
                states.append(states[-1])
            else:
                others = [s for s in range(cfg.k_latent) if s != states[-1]]
                states.append(int(rng.choice(others)))
        tail = int(rng.integers(0, 3 * 86400))
        ts = ANCHOR_TS - tail - sum(gaps)
        rows = []
        for i, s in enumerate(states):
            if i > 0:
                ts += gaps[i - 1]
            arch = archetypes[s]
            item = item_by_id[sampler.sample(arch, ts, cfg, rng)]
            action = _sample_action(arch, cfg, rng)
            scale = arch.dur_scale if action in CORE_ACTION_TYPES else arch.dur_scale * 0.1
            dur = float(np.clip(rng.lognormal(math.log(scale), 0.5), 1.0, 1e5))
            rows.append(Interaction(
                item_id=item.item_id,
                action_type=action,
                genres=item.genres,
                movie_show=item.movie_show,
                tsr=tsr_bucket(ts - item.release_ts),
                ts=ts,
                dur=round(dur, 1),
                ep=round(float(rng.uniform(0.01, 1.0)), 3) if item.movie_show == 1 else 0.0))
        user = UserSequence(u, rows)
        validate_sequence(user, len(catalog))
        users.append(user)
        latents.append(states)
    return users, latents


def generate_dataset(cfg: GeneratorConfig, seed: int):
    """Catalog plus users plus per-interaction latent states, all seeded."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    catalog = generate_catalog(cfg, rng)
    users, latents = generate_users(cfg, catalog, rng)
    return catalog, users, latents


def split_users(users: list[UserSequence], ratios=(0.86, 0.07, 0.07), seed: int = 0):
    """Deterministic user-level split into train/validation/test.

    Bucket sizes come from rounding each ratio, with the remainder folded
    into the training bucket, so 100 users at 0.86/0.07/0.07 give 86/7/7.
    """
    n = len(users)
    counts = [round(r * n) for r in ratios]
    counts[0] += n - sum(counts)
    if min(counts) < 0:
        raise DataValidationError(f"split of {n} users by {ratios} leaves a negative bucket")
    order = np.random.default_rng(seed).permutation(n)
    picked = [users[i] for i in order]
    train = picked[:counts[0]]
    val = picked[counts[0]:counts[0] + counts[1]]
    test = picked[counts[0] + counts[1]:]
    return train, val, test
