"""Structured pass/fail/inconclusive reports with their numeric evidence."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Any, Sequence

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"

__all__ = ["ConditionVerdict", "PASS", "FAIL", "INCONCLUSIVE", "trend_verdict", "is_nonincreasing"]


def _fmt(v: Any) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


@dataclass
class ConditionVerdict:
    """Outcome of one audited assumption.

    ``evidence`` is a list of rows (dicts with identical keys where possible);
    ``thresholds`` records every tolerance the decision used.
    """

    assumption: str
    verdict: str
    evidence: list[dict[str, Any]]
    thresholds: dict[str, Any] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)
    details: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.verdict not in (PASS, FAIL, INCONCLUSIVE):
            raise ValueError(f"unknown verdict {self.verdict!r}")
        if not self.evidence:
            raise ValueError(f"verdict for {self.assumption} carries no evidence")

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def columns(self) -> list[str]:
        cols: list[str] = []
        for row in self.evidence:
            for k in row:
                if k not in cols:
                    cols.append(k)
        return cols

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = self.columns()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for row in self.evidence:
            w.writerow([_fmt(row.get(c, "")) for c in cols])
        return buf.getvalue()

    def report(self) -> str:
        lines = [f"[{self.verdict.upper()}] {self.assumption}"]
        for k, v in self.thresholds.items():
            lines.append(f"  threshold {k} = {_fmt(v)}")
        for note in self.notes:
            lines.append(f"  note: {note}")
        cols = self.columns()
        lines.append("  " + " | ".join(cols))
        for row in self.evidence:
            lines.append("  " + " | ".join(_short(row.get(c, "")) for c in cols))
        return "\n".join(lines)


def _short(v: Any) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def is_nonincreasing(values: Sequence[float], rel: float = 1e-12) -> bool:
    return all(b <= a + rel * max(abs(a), abs(b)) for a, b in zip(values, values[1:]))


def trend_verdict(values: Sequence[float], tol: float) -> tuple[str, str]:
    """Monotone-trend-plus-threshold test for a sampled limit that should vanish.

    Fails when the last sample is not below ``tol``; otherwise passes when the
    samples are nonincreasing and is inconclusive when they are not.
    """
    values = list(values)
    if not values:
        return INCONCLUSIVE, "no samples"
    final = values[-1]
    if not final < tol:
        return FAIL, f"final sample {final:.6g} is not below tol {tol:.3g}"
    if is_nonincreasing(values):
        return PASS, f"nonincreasing, final sample {final:.6g} < {tol:.3g}"
    return INCONCLUSIVE, f"final sample {final:.6g} < {tol:.3g} but the trend is not monotone"
