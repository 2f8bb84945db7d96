"""Privacy and safety measurement: anonymity-set size, entropy, averaged
privacy, and the per-run summary/trace CSV exports.

Entropy is reported in bits. Both the set size and the event entropy are
always recorded per mix event, regardless of which metric the controller is
currently reporting, so metric switching stays observable.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Sequence

DIST_TOLERANCE = 1e-9


class PrivacyMetric(Enum):
    SIZE = "size"
    ENTROPY = "entropy"

TRACE_COLUMNS = ["time", "true_id", "strategy", "privacy_bits", "in_silence",
                 "locked", "context", "active_pseudonym", "alpha"]
SUMMARY_COLUMNS = ["scenario", "mode", "seed", "avg_privacy", "avg_safety_risk",
                   "tracking_success", "changes", "metric_selected", "alpha"]
EVENT_COLUMNS = ["time", "context", "participants", "set_size", "entropy_bits"]


class InvalidDistribution(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class MixEvent:
    time: float
    context: str
    participants: tuple[int, ...]  # vehicles inside the mixing situation
    changers: tuple[int, ...]      # the subset that swapped pseudonyms
    distribution: tuple[float, ...]  # adversary-view assignment probabilities

    def __post_init__(self):
        if len(self.participants) < 1:
            raise ValueError("a mix event needs at least one participant")


@dataclass(slots=True)
class RunSummary:
    scenario: int
    mode: str
    seed: int
    avg_privacy: float
    avg_safety_risk: float
    tracking_success: float
    changes: int
    metric_selected: str
    alpha: float
    risk_trace: list[float] = field(default_factory=list, repr=False)


def entropy(distribution: Sequence[float]) -> float:
    """Shannon entropy in bits, with 0*log(0) taken as 0."""
    total = 0.0
    for p in distribution:
        if p < 0:
            raise InvalidDistribution(f"negative probability {p}")
        total += p
    if abs(total - 1.0) > DIST_TOLERANCE:
        raise InvalidDistribution(f"probabilities sum to {total}, not 1")
    return -sum(p * math.log2(p) for p in distribution if p > 0.0)


def anonymity_set_size(event: MixEvent) -> int:
    """Participants that actually changed in the event."""
    return len(event.changers)


def avg_privacy(levels_by_step: Sequence[Sequence[float]]) -> float:
    """Mean privacy level over all vehicles and steps of a ledger trace."""
    if not levels_by_step:
        raise ValueError("empty privacy trace")
    total = 0.0
    count = 0
    for levels in levels_by_step:
        total += sum(levels)
        count += len(levels)
    if count == 0:
        raise ValueError("privacy trace has no vehicles")
    return total / count


# -- CSV export ---------------------------------------------------------------

def _fmt(x: float, places: int = 6) -> str:
    return f"{x:.{places}f}"


def write_trace_csv(path: Path, rows: Iterable[tuple]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TRACE_COLUMNS)
        for t, vid, strat, priv, sil, lock, ctx, pseud, alpha in rows:
            w.writerow([_fmt(t, 2), vid, strat, _fmt(priv), int(sil), int(lock),
                        ctx, pseud, _fmt(alpha, 4)])


def write_events_csv(path: Path, events: Iterable[MixEvent]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(EVENT_COLUMNS)
        for e in events:
            w.writerow([_fmt(e.time, 2), e.context,
                        ";".join(str(p) for p in e.participants),
                        anonymity_set_size(e), _fmt(entropy(e.distribution))])


def write_summary_csv(path: Path, summary: RunSummary) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(SUMMARY_COLUMNS)
        w.writerow([summary.scenario, summary.mode, summary.seed,
                    _fmt(summary.avg_privacy), _fmt(summary.avg_safety_risk),
                    _fmt(summary.tracking_success), summary.changes,
                    summary.metric_selected, _fmt(summary.alpha, 4)])


def summarize_run(
    *,
    scenario: int,
    mode: str,
    seed: int,
    trace_rows: list[tuple],
    risk_trace: list[float],
    events: list[MixEvent],
    tracking_success: float,
    changes: int,
    metric_selected: str,
    alpha: float,
    out_dir: Path,
) -> RunSummary:
    """Aggregate the run logs into a RunSummary and write summary.csv,
    trace.csv and events.csv under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mean_priv = (sum(r[3] for r in trace_rows) / len(trace_rows)) if trace_rows else 0.0
    mean_risk = (sum(risk_trace) / len(risk_trace)) if risk_trace else 0.0
    summary = RunSummary(
        scenario=scenario, mode=mode, seed=seed,
        avg_privacy=mean_priv, avg_safety_risk=mean_risk,
        tracking_success=tracking_success, changes=changes,
        metric_selected=metric_selected, alpha=alpha,
        risk_trace=risk_trace,
    )
    write_trace_csv(out_dir / "trace.csv", trace_rows)
    write_events_csv(out_dir / "events.csv", events)
    write_summary_csv(out_dir / "summary.csv", summary)
    return summary
