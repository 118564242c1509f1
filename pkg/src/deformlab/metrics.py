"""Recognizability metrics over episode records.

Per-step classification (TP/FP/TN/FN) of the judge against ground
truth, cumulative per-k series with carry-forward for terminated
episodes, and the stage success rates. Two independent implementations
of the series computation (streaming counters vs. materialized
episode-by-step matrix) must agree exactly; the brute-force one exists
to keep the streaming one honest.

Definitions, with N = number of usable episodes:
    rr(k)  = (TP(k) + FN(k)) / N      -- fraction in ground-truth-recognizable states
    car(k) = (TP(k) + TN(k)) / N      -- judge correctness
    fnr(k) = FN(k) / (TP(k) + FN(k))  -- undefined (None) when the denominator is 0

Episodes that terminate before step k carry their final classification
forward. Termination happens on a YES verdict (so carried values are TP
or FP) or on budget exhaustion (the step-20 classification persists, a
declared extension).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from fractions import Fraction

TP, FP, TN, FN = "TP", "FP", "TN", "FN"
CLASSES = (TP, FP, TN, FN)

CSV_HEADER = ["k", "rr", "car", "fnr", "tp", "fp", "tn", "fn"]


class InconsistentN(ValueError):
    """Record set unusable: empty, or steps beyond k_max."""


def classify_step(gt: bool, judged: bool) -> str:
    if gt and judged:
        return TP
    if gt and not judged:
        return FN
    if not gt and judged:
        return FP
    return TN


@dataclass(frozen=True)
class MetricSeries:
    k_max: int
    n: int
    counts: list[dict[str, int]]  # per k: {"TP": ..., "FP": ..., "TN": ..., "FN": ...}
    rr: list[float]
    car: list[float]
    fnr: list[float | None]
    n_excluded: int = 0  # harness-error episodes left out of N

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(CSV_HEADER)
            for k in range(self.k_max + 1):
                c = self.counts[k]
                fnr = "" if self.fnr[k] is None else repr(self.fnr[k])
                w.writerow(
                    [k, repr(self.rr[k]), repr(self.car[k]), fnr, c[TP], c[FP], c[TN], c[FN]]
                )


def _usable(records) -> list:
    return [r for r in records if r.terminal != "harness_error"]


def _episode_class_by_k(record) -> list[str]:
    """Last classification at each exploration count, 0..k_last, no gaps."""
    by_k: dict[int, str] = {}
    for s in record.steps:
        by_k[s.step_index] = s.classification
    k_last = max(by_k)
    return [by_k[k] for k in range(k_last + 1)]


def series(records, k_max: int = 20) -> MetricSeries:
    """Streaming implementation: one pass over episodes, running counters."""
    usable = _usable(records)
    if not usable:
        raise InconsistentN("no usable episode records")
    counts = [{c: 0 for c in CLASSES} for _ in range(k_max + 1)]
    for rec in usable:
        classes = _episode_class_by_k(rec)
        if len(classes) - 1 > k_max:
            raise InconsistentN(
                f"episode {rec.episode_id} has steps beyond k_max={k_max}"
            )
        for k in range(k_max + 1):
            cls = classes[k] if k < len(classes) else classes[-1]  # carry forward
            counts[k][cls] += 1
    return _series_from_counts(counts, len(usable), k_max, len(records) - len(usable))


def series_bruteforce(records, k_max: int = 20) -> MetricSeries:
    """Independent recount: materialize the full episode-by-k matrix by
    rescanning the step list for every (episode, k) pair."""
    usable = _usable(records)
    if not usable:
        raise InconsistentN("no usable episode records")
    matrix: list[list[str]] = []
    for rec in usable:
        if max(s.step_index for s in rec.steps) > k_max:
            raise InconsistentN(
                f"episode {rec.episode_id} has steps beyond k_max={k_max}"
            )
        row = []
        for k in range(k_max + 1):
            at_k = [s.classification for s in rec.steps if s.step_index == k]
            if at_k:
                row.append(at_k[-1])
            else:
                row.append(rec.steps[-1].classification)
        matrix.append(row)
    counts = []
    for k in range(k_max + 1):
        column = [row[k] for row in matrix]
        counts.append({c: column.count(c) for c in CLASSES})
    return _series_from_counts(counts, len(usable), k_max, len(records) - len(usable))


def _series_from_counts(counts, n, k_max, n_excluded) -> MetricSeries:
    rr, car, fnr = [], [], []
    for k in range(k_max + 1):
        c = counts[k]
        total = sum(c.values())
        assert total == n, f"classification counts at k={k} do not sum to N"
        rr.append((c[TP] + c[FN]) / n)
        car.append((c[TP] + c[TN]) / n)
        denom = c[TP] + c[FN]
        fnr.append(c[FN] / denom if denom else None)
    return MetricSeries(
        k_max=k_max, n=n, counts=counts, rr=rr, car=car, fnr=fnr, n_excluded=n_excluded
    )


@dataclass(frozen=True)
class RateSummary:
    n: int  # usable episodes (harness errors excluded)
    transitions: int  # terminal=transitioned with verified bottleneck hold
    completions: int  # task success among transitions
    harness_errors: int

    @property
    def transition_rate(self) -> Fraction:
        return Fraction(self.transitions, self.n) if self.n else Fraction(0)

    @property
    def completion_rate(self) -> Fraction | None:
        """Task completion given transition; undefined with zero transitions."""
        if self.transitions == 0:
            return None
        return Fraction(self.completions, self.transitions)

    @property
    def final_success_rate(self) -> Fraction:
        return Fraction(self.completions, self.n) if self.n else Fraction(0)

    def to_dict(self) -> dict:
        comp = self.completion_rate
        return {
            "n": self.n,
            "harness_errors": self.harness_errors,
            "transition": {"count": self.transitions, "rate": float(self.transition_rate)},
            "completion_given_transition": {
                "count": self.completions,
                "rate": None if comp is None else float(comp),
                "undefined": comp is None,
            },
            "final_success": {
                "count": self.completions,
                "rate": float(self.final_success_rate),
            },
        }

    def to_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")


def rates(records) -> RateSummary:
    usable = _usable(records)
    transitions = sum(
        1 for r in usable if r.terminal == "transitioned" and r.bottleneck_verified
    )
    completions = sum(1 for r in usable if r.final_task_success)
    return RateSummary(
        n=len(usable),
        transitions=transitions,
        completions=completions,
        harness_errors=len(records) - len(usable),
    )
