"""Training: duration-weighted losses over shifted targets, joint loss
assembly, Adam, the epoch loop, and parameter checkpoints.

Position k of a user's sequence predicts interaction k+1's item and
metadata, so the last position carries no loss. Every contributing
position is weighted by log1p of its own interaction's duration, rescaled
to mean 1 across the batch, and batch losses are normalized by the count
of contributing positions so hyperparameters transfer across batch sizes.

Gradients are accumulated per user in a fixed order, which makes the
optional thread pool produce bit-identical results to the serial path.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import Config, HeadConfig
from .data import Interaction, UserSequence
from .errors import ConfigError, DataValidationError, NumericError
from .models import RecModel, ModelOutput
from . import tensor as T
from .tensor import Tensor

CHECKPOINT_VERSION = "1"


# ---------------------------------------------------------------------------
# loss pieces (all return unnormalized weighted sums over the given rows)

def duration_weights(durs_per_user: list[np.ndarray]):
    """log1p duration weights rescaled to mean 1 over all given positions.

    Falls back to uniform weights when every duration is zero. Returns the
    per-user weight arrays and the total position count.
    """
    raw = [np.log1p(np.asarray(d, dtype=np.float64)) for d in durs_per_user]
    count = sum(a.size for a in raw)
    total = float(sum(a.sum() for a in raw))
    if count == 0:
        return raw, 0
    if total <= 0.0:
        return [np.ones_like(a) for a in raw], count
    scale = count / total
    return [a * scale for a in raw], count


def single_label_loss(logits: Tensor, targets: np.ndarray, weights: np.ndarray) -> Tensor:
    """Weighted cross-entropy sum: -sum_k w_k log softmax(logits)_k[target_k]."""
    picked = logits.log_softmax().gather_per_row(targets)
    return -(picked * T.constant(weights)).sum()


def item_loss(logits: Tensor, targets: np.ndarray, weights: np.ndarray) -> Tensor:
    return single_label_loss(logits, targets, weights)


def multi_label_loss(logits: Tensor, positives: list, weights: np.ndarray) -> Tensor:
    """Weighted sum of -log sigmoid(logit) over each row's positive labels.

    Only positive labels contribute; absent labels are not pushed down.
    """
    m, c = logits.shape
    indicator = np.zeros((m, c))
    for k, pos in enumerate(positives):
        if len(pos) == 0:
            raise DataValidationError(f"row {k}: multi-label target has no positive labels")
        indicator[k, list(pos)] = 1.0
    indicator *= np.asarray(weights, dtype=np.float64)[:, None]
    return -(logits.log_sigmoid() * T.constant(indicator)).sum()


def total_loss(item: Tensor, intents: dict[str, Tensor], lam: float) -> Tensor:
    out = item
    if intents and lam != 0.0:
        acc = None
        for t in intents.values():
            acc = t if acc is None else acc + t
        out = out + acc.scale(lam)
    return out


def intent_targets(head: HeadConfig, interactions: list[Interaction]):
    """Shifted metadata targets for positions 0..n-2."""
    nxt = interactions[1:]
    if head.name == "action_type":
        return np.array([r.action_type for r in nxt])
    if head.name == "genre":
        return [r.genres for r in nxt]
    if head.name == "movie_show":
        return np.array([r.movie_show for r in nxt])
    if head.name == "tsr":
        return np.array([r.tsr for r in nxt])
    raise ConfigError(f"no target extractor for head {head.name!r}")


def user_loss_terms(model: RecModel, interactions: list[Interaction],
                    weights: np.ndarray, out: ModelOutput | None = None):
    """Weighted loss sums for one user: (item_term, {head: intent_term})."""
    out = out or model.forward(interactions)
    n = out.seq.n
    rows = interactions[-n:]
    ctx_logits = out.item_logits.slice_rows(0, n - 1)
    item_term = item_loss(ctx_logits, np.array([r.item_id for r in rows[1:]]), weights)
    intent_terms: dict[str, Tensor] = {}
    if out.intent is not None:
        for h in model.heads:
            lg = out.intent.head_logits[h.name].slice_rows(0, n - 1)
            tg = intent_targets(h, rows)
            if h.multi_label:
                intent_terms[h.name] = multi_label_loss(lg, tg, weights)
            else:
                intent_terms[h.name] = single_label_loss(lg, tg, weights)
    return item_term, intent_terms


# ---------------------------------------------------------------------------
# optimizer

class Adam:
    def __init__(self, params: list[Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in params]
        self.v = [np.zeros_like(p.data) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray]):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)


# ---------------------------------------------------------------------------
# the training loop

@dataclass
class EpochStats:
    epoch: int
    item: float
    intents: dict[str, float] = field(default_factory=dict)
    total: float = 0.0


def _user_grad_and_losses(model: RecModel, rows: list[Interaction],
                          weights: np.ndarray, lam: float, params: list[Tensor]):
    item_term, intent_terms = user_loss_terms(model, rows, weights)
    tot = total_loss(item_term, intent_terms, lam)
    if not np.isfinite(tot.data).all():
        probe = T.first_nonfinite(tot)
        where = probe.op if probe is not None else "loss"
        raise NumericError(f"non-finite loss; first bad tensor is op {where!r}")
    grads = T.compute_grads(tot, params)
    return grads, float(item_term.data), {k: float(v.data) for k, v in intent_terms.items()}


def train(model: RecModel, users: list[UserSequence], *,
          epochs: int | None = None, epoch_offset: int = 0,
          pool: ThreadPoolExecutor | None = None,
          progress=None) -> list[EpochStats]:
    """Mini-batch Adam over shuffled users; returns the per-epoch loss trace.

    Deterministic for a fixed config seed. When a thread pool is supplied,
    per-user gradients are computed concurrently but merged in user order,
    so the result is identical to the serial path.
    """
    cfg = model.cfg.training
    lam = cfg.intent_weight
    max_seq = model.cfg.features.max_seq
    epochs = cfg.epochs if epochs is None else epochs
    params = model.params()
    opt = Adam(params, cfg.lr)
    rng = np.random.default_rng([cfg.seed, epoch_offset])
    trace: list[EpochStats] = []
    truncated = [u.interactions[-max_seq:] for u in users]

    for epoch in range(epoch_offset, epoch_offset + epochs):
        order = rng.permutation(len(users))
        sums = EpochStats(epoch, 0.0, {h.name: 0.0 for h in model.heads})
        positions = 0
        for lo in range(0, len(order), cfg.batch_size):
            batch = [truncated[i] for i in order[lo:lo + cfg.batch_size]]
            wts, count = duration_weights([[r.dur for r in rows[:-1]] for rows in batch])
            if count == 0:
                continue
            work = [(rows, w) for rows, w in zip(batch, wts)]
            if pool is None:
                results = [_user_grad_and_losses(model, rows, w, lam, params)
                           for rows, w in work]
            else:
                results = list(pool.map(
                    lambda rw: _user_grad_and_losses(model, rw[0], rw[1], lam, params),
                    work))
            acc = [np.zeros_like(p.data) for p in params]
            for grads, item_val, intent_vals in results:
                for a, g in zip(acc, grads):
                    a += g
                sums.item += item_val
                for k, v in intent_vals.items():
                    sums.intents[k] += v
            inv = 1.0 / count
            for a in acc:
                a *= inv
            opt.step(acc)
            positions += count
        if positions:
            sums.item /= positions
            for k in sums.intents:
                sums.intents[k] /= positions
        sums.total = sums.item + lam * sum(sums.intents.values())
        trace.append(sums)
        if progress is not None:
            progress(sums)
    return trace


def write_loss_csv(path, trace: list[EpochStats], head_names: list[str]):
    with open(path, "w") as fh:
        cols = ["epoch", "item_loss"] + [f"intent_{n}" for n in head_names] + ["total"]
        fh.write(",".join(cols) + "\n")
        for row in trace:
            vals = [str(row.epoch), repr(row.item)]
            vals += [repr(row.intents[n]) for n in head_names]
            vals.append(repr(row.total))
            fh.write(",".join(vals) + "\n")


# ---------------------------------------------------------------------------
# checkpoints

def save_checkpoint(path, model: RecModel):
    doc = {
        "format_version": CHECKPOINT_VERSION,
        "config_hash": model.cfg.model_hash(),
        "params": {name: {"shape": list(p.shape), "data": p.data.ravel().tolist()}
                   for name, p in model.named_params().items()},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, separators=(",", ":"))


def load_checkpoint(path, cfg: Config) -> dict[str, np.ndarray]:
    with open(path) as fh:
        doc = json.load(fh)
    version = doc.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ConfigError(f"checkpoint {path}: format version {version!r}, "
                          f"expected {CHECKPOINT_VERSION!r}")
    got, want = doc.get("config_hash"), cfg.model_hash()
    if got != want:
        raise ConfigError(f"checkpoint {path} was written under config hash {got}, "
                          f"current config hash is {want}; refusing to load")
    out = {}
    for name, entry in doc["params"].items():
        arr = np.asarray(entry["data"], dtype=np.float64)
        shape = tuple(entry["shape"])
        if arr.size != int(np.prod(shape)):
            raise ConfigError(f"checkpoint {path}: parameter {name!r} has {arr.size} "
                              f"values but declares shape {shape}")
        out[name] = arr.reshape(shape)
    return out


def apply_checkpoint(model: RecModel, loaded: dict[str, np.ndarray]):
    named = model.named_params()
    missing = sorted(set(named) - set(loaded))
    extra = sorted(set(loaded) - set(named))
    if missing or extra:
        raise ConfigError(f"checkpoint does not match model: missing {missing}, "
                          f"unexpected {extra}")
    for name, p in named.items():
        if loaded[name].shape != p.shape:
            raise ConfigError(f"checkpoint parameter {name!r} has shape "
                              f"{loaded[name].shape}, model expects {p.shape}")
        p.data[:] = loaded[name]
