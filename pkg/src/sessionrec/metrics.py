"""Ranking metrics and evaluation reports.

Each test user's last interaction is the target; the model scores it from
everything before. Ranks use the expected-rank tie rule: rank = 1 + number
of strictly higher scores + half the remaining ties, which makes shuffled
equal scores average out instead of rewarding index order. The weighted
variant weights each user by the target interaction's duration.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .config import HeadConfig
from .data import UserSequence
from .errors import DataValidationError
from .models import RecModel


def expected_rank(scores: np.ndarray, index: int) -> float:
    s = np.asarray(scores, dtype=np.float64)
    t = s[index]
    higher = int((s > t).sum())
    equal = int((s == t).sum())  # includes the target itself
    return 1.0 + higher + (equal - 1) / 2.0


def reciprocal_rank(scores: np.ndarray, target: int) -> float:
    if not 0 <= target < len(scores):
        raise IndexError(f"target {target} outside score vector of length {len(scores)}")
    return 1.0 / expected_rank(scores, target)


def multi_label_reciprocal_rank(scores: np.ndarray, positives) -> float:
    """Reciprocal of the best (smallest) expected rank among positive labels."""
    if len(positives) == 0:
        raise DataValidationError("multi-label target has no positive labels")
    return 1.0 / min(expected_rank(scores, int(j)) for j in positives)


def mrr(rrs) -> float:
    rrs = list(rrs)
    if not rrs:
        raise DataValidationError("mrr needs at least one reciprocal rank")
    return math.fsum(rrs) / len(rrs)


def wmrr(rrs, durations) -> float:
    rrs, durations = list(rrs), list(durations)
    if len(rrs) != len(durations):
        raise DataValidationError(f"wmrr got {len(rrs)} ranks but {len(durations)} durations")
    total = math.fsum(durations)
    if total <= 0.0:
        raise DataValidationError("wmrr needs positive total duration")
    return math.fsum(r * d for r, d in zip(rrs, durations)) / total


# ---------------------------------------------------------------------------
# significance

@dataclass
class TTestResult:
    t: float | None
    p: float | None
    df: int
    mean_diff: float
    degenerate: bool

    def to_dict(self) -> dict:
        return {"t": self.t, "p": self.p, "df": self.df,
                "mean_diff": self.mean_diff, "degenerate": self.degenerate}


def paired_t_test(a, b) -> TTestResult:
    """Two-sided paired t-test on per-user differences."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or len(a) < 2:
        raise DataValidationError(
            f"paired test needs two equal-length vectors of >= 2 values, got {a.shape} vs {b.shape}")
    d = a - b
    n = len(d)
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        return TTestResult(t=None, p=None, df=n - 1, mean_diff=mean, degenerate=True)
    t = mean / (sd / math.sqrt(n))
    p = 2.0 * float(stats.t.sf(abs(t), df=n - 1))
    return TTestResult(t=t, p=p, df=n - 1, mean_diff=mean, degenerate=False)


# ---------------------------------------------------------------------------
# evaluation

@dataclass
class UserResult:
    user_id: int
    item_rr: float
    duration: float
    intent_rr: dict[str, float | None] = field(default_factory=dict)


@dataclass
class EvalReport:
    item_mrr: float
    item_wmrr: float
    intent_mrr: dict[str, float]
    counts: dict[str, int]
    per_user: list[UserResult]

    def validate(self):
        for label, v in [("item_mrr", self.item_mrr), ("item_wmrr", self.item_wmrr),
                         *self.intent_mrr.items()]:
            if not 0.0 <= v <= 1.0:
                raise DataValidationError(f"metric {label} = {v} outside [0, 1]")
        if self.counts["item"] != len(self.per_user):
            raise DataValidationError("per-user record count disagrees with item count")
        return self

    def to_dict(self) -> dict:
        return {
            "item_mrr": self.item_mrr,
            "item_wmrr": self.item_wmrr,
            "intent_mrr": self.intent_mrr,
            "counts": self.counts,
            "per_user": [{"user_id": u.user_id, "item_rr": u.item_rr,
                          "duration": u.duration, "intent_rr": u.intent_rr}
                         for u in self.per_user],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        users = [UserResult(u["user_id"], u["item_rr"], u["duration"],
                            dict(u.get("intent_rr", {})))
                 for u in doc["per_user"]]
        return cls(doc["item_mrr"], doc["item_wmrr"], dict(doc["intent_mrr"]),
                   {k: int(v) for k, v in doc["counts"].items()}, users)

    def save_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, separators=(",", ":"))

    @classmethod
    def load_json(cls, path) -> "EvalReport":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def save_csv(self, path):
        heads = sorted(self.intent_mrr)
        with open(path, "w") as fh:
            fh.write(",".join(["user_id", "item_rr", "duration"]
                              + [f"intent_rr_{h}" for h in heads]) + "\n")
            for u in self.per_user:
                cells = [str(u.user_id), repr(u.item_rr), repr(u.duration)]
                cells += ["" if u.intent_rr.get(h) is None else repr(u.intent_rr[h])
                          for h in heads]
                fh.write(",".join(cells) + "\n")


def _head_rr(head: HeadConfig, scores: np.ndarray, target) -> float | None:
    """None means this user does not count for this head's metric."""
    if head.multi_label:
        return multi_label_reciprocal_rank(scores, target)
    if head.core_labels is not None and target not in head.core_labels:
        return None
    return reciprocal_rank(scores, int(target))


def evaluate(model: RecModel, test_users: list[UserSequence]) -> EvalReport:
    if not test_users:
        raise DataValidationError("evaluation needs at least one test user")
    max_seq = model.cfg.features.max_seq
    results: list[UserResult] = []
    for user in test_users:
        context = user.interactions[:-1][-max_seq:]
        target = user.interactions[-1]
        out = model.forward(context)
        item_rr = reciprocal_rank(out.item_logits.data[-1], target.item_id)
        res = UserResult(user.user_id, item_rr, float(target.dur))
        if out.intent is not None:
            for h in model.heads:
                scores = out.intent.head_scores[h.name].data[-1]
                tgt = target.genres if h.multi_label else getattr(target, _FIELD[h.name])
                res.intent_rr[h.name] = _head_rr(h, scores, tgt)
        results.append(res)
    intent_mrr: dict[str, float] = {}
    counts = {"item": len(results)}
    for h in model.heads:
        vals = [r.intent_rr[h.name] for r in results if r.intent_rr.get(h.name) is not None]
        counts[h.name] = len(vals)
        if vals:
            intent_mrr[h.name] = mrr(vals)
    report = EvalReport(
        item_mrr=mrr([r.item_rr for r in results]),
        item_wmrr=wmrr([r.item_rr for r in results], [r.duration for r in results]),
        intent_mrr=intent_mrr,
        counts=counts,
        per_user=results,
    )
    return report.validate()


_FIELD = {"action_type": "action_type", "movie_show": "movie_show", "tsr": "tsr"}


# ---------------------------------------------------------------------------
# report comparison

def pct_delta(baseline: float, candidate: float) -> float:
    if baseline == 0.0:
        raise DataValidationError("cannot compute a relative delta against a zero baseline")
    return 100.0 * (candidate - baseline) / baseline


def compare_reports(baseline: EvalReport, candidate: EvalReport) -> dict:
    """Relative deltas plus a paired test over matched per-user item ranks."""
    ids_a = [u.user_id for u in baseline.per_user]
    ids_b = [u.user_id for u in candidate.per_user]
    if set(ids_a) != set(ids_b):
        raise DataValidationError("reports cover different test users; cannot pair them")
    by_id = {u.user_id: u for u in candidate.per_user}
    rr_a = [u.item_rr for u in baseline.per_user]
    rr_b = [by_id[u.user_id].item_rr for u in baseline.per_user]
    out = {
        "item_mrr": {"baseline": baseline.item_mrr, "candidate": candidate.item_mrr,
                     "pct_delta": pct_delta(baseline.item_mrr, candidate.item_mrr)},
        "item_wmrr": {"baseline": baseline.item_wmrr, "candidate": candidate.item_wmrr,
                      "pct_delta": pct_delta(baseline.item_wmrr, candidate.item_wmrr)},
        "item_t_test": paired_t_test(rr_b, rr_a).to_dict(),
        "intent_mrr": {},
    }
    for name in sorted(set(baseline.intent_mrr) & set(candidate.intent_mrr)):
        out["intent_mrr"][name] = {
            "baseline": baseline.intent_mrr[name],
            "candidate": candidate.intent_mrr[name],
            "pct_delta": pct_delta(baseline.intent_mrr[name], candidate.intent_mrr[name]),
        }
    return out
