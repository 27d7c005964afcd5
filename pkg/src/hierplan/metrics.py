"""Plan-similarity metrics: exact match, longest common subsequence and
subarray, each comparing either action types alone (mode "A") or actions
with their full argument tuples (mode "P")."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .plan import Plan
from .skills import DONE

MODE_ACTIONS = "A"
MODE_PLAN = "P"
MODES = (MODE_ACTIONS, MODE_PLAN)

METRIC_FIELDS = ("em_a", "em_p", "lcss_a", "lcss_p", "lcsa_a", "lcsa_p")


def _project(plan: Plan, mode: str) -> tuple:
    """Project a plan onto comparable elements; done() never counts."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    acts = [a for a in plan.actions if a.skill != DONE]
    if mode == MODE_ACTIONS:
        return tuple(a.skill for a in acts)
    return tuple((a.skill, a.args) for a in acts)


def exact_match(pred: Plan, gt: Plan, mode: str) -> int:
    """1 iff the projected sequences are identical, else 0."""
    return int(_project(pred, mode) == _project(gt, mode))


def _lcs_length(xs: Sequence, ys: Sequence) -> int:
    # Standard O(n*m) dynamic program, one rolling row.
    if not xs or not ys:
        return 0
    prev = [0] * (len(ys) + 1)
    for x in xs:
        curr = [0]
        for j, y in enumerate(ys, start=1):
            if x == y:
                curr.append(prev[j - 1] + 1)
            else:
                curr.append(max(prev[j], curr[j - 1]))
        prev = curr
    return prev[-1]


def _longest_common_run(xs: Sequence, ys: Sequence) -> int:
    # Longest contiguous block present in both sequences.
    if not xs or not ys:
        return 0
    best = 0
    prev = [0] * (len(ys) + 1)
    for x in xs:
        curr = [0]
        for j, y in enumerate(ys, start=1):
            length = prev[j - 1] + 1 if x == y else 0
            curr.append(length)
            if length > best:
                best = length
        prev = curr
    return best


def _normalized(common: int, n_pred: int, n_gt: int) -> float:
    # Both empty is vacuous perfection; one empty scores zero.
    if n_pred == 0 and n_gt == 0:
        return 1.0
    if n_pred == 0 or n_gt == 0:
        return 0.0
    return common / max(n_pred, n_gt)


def lcs_subsequence(pred: Plan, gt: Plan, mode: str) -> float:
    """Length of the longest common subsequence over max plan length."""
    xs, ys = _project(pred, mode), _project(gt, mode)
    return _normalized(_lcs_length(xs, ys), len(xs), len(ys))


def lcs_subarray(pred: Plan, gt: Plan, mode: str) -> float:
    """Length of the longest common contiguous block over max plan length."""
    xs, ys = _project(pred, mode), _project(gt, mode)
    return _normalized(_longest_common_run(xs, ys), len(xs), len(ys))


def evaluate_pair(pred: Plan, gt: Plan) -> dict[str, float]:
    """All six metric values for one prediction/ground-truth pair."""
    return {
        "em_a": float(exact_match(pred, gt, MODE_ACTIONS)),
        "em_p": float(exact_match(pred, gt, MODE_PLAN)),
        "lcss_a": lcs_subsequence(pred, gt, MODE_ACTIONS),
        "lcss_p": lcs_subsequence(pred, gt, MODE_PLAN),
        "lcsa_a": lcs_subarray(pred, gt, MODE_ACTIONS),
        "lcsa_p": lcs_subarray(pred, gt, MODE_PLAN),
    }


@dataclass(frozen=True)
class EvalRecord:
    """Per-task metric sextuple plus bookkeeping for aggregation."""

    task_id: str
    em_a: float
    em_p: float
    lcss_a: float
    lcss_p: float
    lcsa_a: float
    lcsa_p: float
    pred_len: int
    gt_len: int
    parse_ok: bool
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            **{name: getattr(self, name) for name in METRIC_FIELDS},
            "pred_len": self.pred_len,
            "gt_len": self.gt_len,
            "parse_ok": self.parse_ok,
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalRecord":
        return cls(
            task_id=doc["task_id"],
            pred_len=doc["pred_len"],
            gt_len=doc["gt_len"],
            parse_ok=doc["parse_ok"],
            metadata=doc.get("metadata", {}),
            **{name: doc[name] for name in METRIC_FIELDS},
        )


def record_for(task_id: str, pred: Plan, gt: Plan, parse_ok: bool, metadata: dict | None = None) -> EvalRecord:
    scores = evaluate_pair(pred, gt)
    return EvalRecord(
        task_id=task_id,
        pred_len=len(_project(pred, MODE_ACTIONS)),
        gt_len=len(_project(gt, MODE_ACTIONS)),
        parse_ok=parse_ok,
        metadata=dict(metadata or {}),
        **scores,
    )


@dataclass(frozen=True)
class GroupStats:
    key: dict
    count: int
    parse_fail_rate: float
    means: dict[str, float]

    def to_dict(self) -> dict:
        return {"key": self.key, "count": self.count, "parse_fail_rate": self.parse_fail_rate, **self.means}


@dataclass(frozen=True)
class EvalReport:
    group_keys: tuple[str, ...]
    groups: tuple[GroupStats, ...]
    overall: GroupStats

    def to_dict(self) -> dict:
        return {
            "group_keys": list(self.group_keys),
            "groups": [g.to_dict() for g in self.groups],
            "overall": self.overall.to_dict(),
        }


class EmptyInputError(ValueError):
    pass


def _mean(values: Iterable[float]) -> float:
    vals = list(values)
    return sum(vals) / len(vals)


def _stats(key: dict, records: list[EvalRecord]) -> GroupStats:
    return GroupStats(
        key=key,
        count=len(records),
        parse_fail_rate=_mean(0.0 if r.parse_ok else 1.0 for r in records),
        means={name: _mean(getattr(r, name) for r in records) for name in METRIC_FIELDS},
    )


def _group_sort_key(value: Any) -> tuple:
    if isinstance(value, bool):
        return (1, str(value))
    if isinstance(value, (int, float)):
        return (0, value)
    return (1, str(value))


def aggregate(records: Sequence[EvalRecord], group_keys: Sequence[str] = ()) -> EvalReport:
    """Mean of each metric per metadata group and overall."""
    if not records:
        raise EmptyInputError("no records to aggregate")
    buckets: dict[tuple, list[EvalRecord]] = {}
    for record in records:
        key = tuple(record.metadata.get(k, "n/a") for k in group_keys)
        buckets.setdefault(key, []).append(record)
    groups = [
        _stats(dict(zip(group_keys, key)), bucket)
        for key, bucket in sorted(
            buckets.items(), key=lambda item: tuple(_group_sort_key(v) for v in item[0])
        )
    ]
    return EvalReport(
        group_keys=tuple(group_keys),
        groups=tuple(groups),
        overall=_stats({}, list(records)),
    )


def write_records_jsonl(records: Iterable[EvalRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")


def read_records_jsonl(path) -> list[EvalRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                records.append(EvalRecord.from_dict(json.loads(line)))
    return records


def render_report_csv(report: EvalReport, header_comment: str | None = None) -> str:
    """Rows are groups plus a final overall row; columns are the six metrics."""
    buf = io.StringIO()
    if header_comment:
        buf.write(f"# {header_comment}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([*report.group_keys, "count", "parse_fail_rate", *METRIC_FIELDS])
    for group in report.groups:
        writer.writerow(
            [group.key.get(k, "") for k in report.group_keys]
            + [group.count, f"{group.parse_fail_rate:.6f}"]
            + [f"{group.means[name]:.6f}" for name in METRIC_FIELDS]
        )
    writer.writerow(
        ["overall"] * len(report.group_keys)
        + [report.overall.count, f"{report.overall.parse_fail_rate:.6f}"]
        + [f"{report.overall.means[name]:.6f}" for name in METRIC_FIELDS]
    )
    return buf.getvalue()
