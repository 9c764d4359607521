"""File formats: case CSVs, event records, intervention schedules, model files.

All structured files are JSON with canonical (sorted) key order so reruns
with the same seed produce byte-identical artifacts.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .errors import (
    InputError,
    IntegrityError,
    MigrationError,
    ParseError,
    SchemaError,
)
from .transmission import MediaEventSet, PolicySchedule

MODEL_SCHEMA_VERSION = 1
CONFIDENCE_FLOOR = 0.5

# Strictness calibration bands for event authors:
#   advisory 0.0-0.2, moderate 0.3-0.5, strict 0.6-0.8, complete 0.9-1.0.
STRICTNESS_BANDS = {
    "advisory": (0.0, 0.2),
    "moderate": (0.3, 0.5),
    "strict": (0.6, 0.8),
    "complete": (0.9, 1.0),
}


@dataclass
class CaseSeries:
    """Daily observed counts with population; NaN marks a missing day."""

    dates: list[date]
    counts: np.ndarray
    population: float
    group: str | None = None

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=float)
        if len(self.dates) != len(self.counts):
            raise InputError("dates and counts must align")
        for a, b in zip(self.dates, self.dates[1:]):
            if (b - a).days != 1:
                raise InputError("dates must be contiguous daily")
        observed = self.counts[~np.isnan(self.counts)]
        if np.any(observed < 0):
            raise InputError("counts must be non-negative")
        if self.population <= 0:
            raise InputError("population must be positive")

    def __len__(self):
        return len(self.counts)

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.counts)

    def filled(self) -> np.ndarray:
        """Counts with missing days as zeros (for risk windows)."""
        return np.nan_to_num(self.counts, nan=0.0)


@dataclass
class EventRecord:
    """One policy or media event from the extraction cache."""

    kind: str
    date: date
    value: float
    groups: list[str] = field(default_factory=list)
    description: str = ""
    confidence: float = 1.0

    def __post_init__(self):
        if self.kind not in ("policy", "media"):
            raise SchemaError(f"unknown event kind {self.kind!r}")
        if not (0 <= self.confidence <= 1):
            raise SchemaError(f"confidence out of range: {self.confidence}")


@dataclass
class InterventionSchedule:
    """Per-day policy strictness plus media events over the modeled window."""

    start: date
    policy: PolicySchedule
    media: MediaEventSet
    # per-group strictness when events target groups; None = uniform
    policy_by_group: dict[str, np.ndarray] | None = None

    def strictness_for(self, group: str | None) -> np.ndarray:
        if group is not None and self.policy_by_group \
                and group in self.policy_by_group:
            return self.policy_by_group[group]
        return self.policy.strictness

    @classmethod
    def neutral(cls, start: date, length: int) -> "InterventionSchedule":
        return cls(start, PolicySchedule(np.zeros(length)), MediaEventSet([]))


def _parse_date(text, line=None):
    try:
        return date.fromisoformat(str(text).strip())
    except ValueError as exc:
        raise ParseError(f"bad date {text!r}: {exc}", line=line) from exc


def load_case_csv(path) -> CaseSeries | list[CaseSeries]:
    """Read `date,cases[,group]` into one series (or one per group).

    Gaps in the date range become missing markers, never imputed values.
    """
    path = Path(path)
    rows = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file")
        header = [h.strip().lower() for h in header]
        if header[:2] != ["date", "cases"]:
            raise ParseError(f"{path}: header must be date,cases[,group]")
        has_group = len(header) > 2 and header[2] == "group"
        population = None
        if "population" in header:
            pop_idx = header.index("population")
        else:
            pop_idx = None
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            d = _parse_date(row[0], line=lineno)
            raw = row[1].strip()
            if raw == "":
                count = float("nan")
            else:
                try:
                    count = float(raw)
                except ValueError as exc:
                    raise ParseError(f"bad count {raw!r}", line=lineno) from exc
                if count < 0:
                    raise ParseError(f"negative count {raw}", line=lineno)
            group = row[2].strip() if has_group and len(row) > 2 else None
            if pop_idx is not None and len(row) > pop_idx and row[pop_idx].strip():
                population = float(row[pop_idx])
            rows.append((d, count, group))
    if not rows:
        raise ParseError(f"{path}: no data rows")

    # population may also be carried in a sidecar "<name>.meta.json"
    meta = path.with_suffix(".meta.json")
    if population is None and meta.exists():
        population = float(json.loads(meta.read_text())["population"])
    if population is None:
        raise SchemaError(
            f"{path}: population missing (add a population column or sidecar)"
        )

    groups = sorted({g for _, _, g in rows if g is not None})
    if not groups:
        return _build_series(rows, population, None, path)
    return [
        _build_series([r for r in rows if r[2] == g], population, g, path)
        for g in groups
    ]


def _build_series(rows, population, group, path):
    rows = sorted(rows, key=lambda r: r[0])
    for (d1, _, _), (d2, _, _) in zip(rows, rows[1:]):
        if d2 <= d1:
            raise SchemaError(f"{path}: dates not strictly increasing at {d2}")
    start, end = rows[0][0], rows[-1][0]
    length = (end - start).days + 1
    counts = np.full(length, np.nan)
    for d, c, _ in rows:
        counts[(d - start).days] = c
    dates = [start + timedelta(days=k) for k in range(length)]
    return CaseSeries(dates, counts, population, group)


def load_events(path) -> list[EventRecord]:
    """Read the extraction-cache JSON event array.

    Records below the confidence floor are dropped (with a warning entry on
    the returned list's `dropped` attribute is not a thing; callers use
    `compile_schedule` which reports them). Strictness outside [0,1] is
    clamped, matching the upstream validation rules.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if not isinstance(raw, list):
        raise SchemaError(f"{path}: expected a JSON array of events")
    records = []
    for idx, obj in enumerate(raw):
        try:
            value = float(obj["value"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: event {idx} bad value") from exc
        value = min(1.0, max(0.0, value))  # strictness clamping
        try:
            d = _parse_date(obj["date"])
        except ParseError:
            continue  # unparseable date: record rejected
        records.append(EventRecord(
            kind=obj.get("kind", "policy"),
            date=d,
            value=value,
            groups=list(obj.get("groups", [])),
            description=str(obj.get("description", "")),
            confidence=float(obj.get("confidence", 1.0)),
        ))
    return records


def compile_schedule(
    records: list[EventRecord],
    start: date,
    length: int,
    groups: list[str] | None = None,
) -> tuple[InterventionSchedule, list[EventRecord]]:
    """Turn event records into per-day schedules for [start, start+length).

    A policy event is active from its date until superseded by a later event
    with the same description; concurrent distinct policies combine by max.
    Sub-threshold-confidence records are excluded and returned for auditing.
    Group-targeted events mask strictness to their groups only.
    """
    kept, dropped = [], []
    for rec in records:
        (dropped if rec.confidence < CONFIDENCE_FLOOR else kept).append(rec)

    def build_strictness(for_group: str | None) -> np.ndarray:
        by_desc: dict[str, list[EventRecord]] = {}
        for rec in kept:
            if rec.kind != "policy":
                continue
            if for_group is not None and rec.groups and for_group not in rec.groups:
                continue
            if for_group is None and rec.groups:
                continue
            by_desc.setdefault(rec.description, []).append(rec)
        strict = np.zeros(length)
        for desc, recs in by_desc.items():
            recs = sorted(recs, key=lambda r: r.date)
            level = np.zeros(length)
            for rec in recs:
                day = (rec.date - start).days
                if day >= length:
                    continue
                level[max(0, day):] = rec.value
            strict = np.maximum(strict, level)
        return strict

    uniform = build_strictness(None)
    policy_by_group = None
    targeted = [r for r in kept if r.kind == "policy" and r.groups]
    if targeted and groups:
        policy_by_group = {}
        for g in groups:
            policy_by_group[g] = np.maximum(uniform, build_strictness(g))

    media_events = []
    for rec in kept:
        if rec.kind != "media":
            continue
        day = (rec.date - start).days
        if day < length:
            media_events.append((float(day), rec.value))
    schedule = InterventionSchedule(
        start, PolicySchedule(uniform), MediaEventSet(media_events),
        policy_by_group,
    )
    return schedule, dropped


def _to_jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, date):
        return obj.isoformat()
    return obj


def canonical_json(payload: dict) -> str:
    return json.dumps(_to_jsonable(payload), sort_keys=True, indent=1)


def save_model(path, model) -> None:
    """Write any model carrying `kind` and `to_payload()` to a JSON file."""
    payload = {
        "schema_version": MODEL_SCHEMA_VERSION,
        "kind": model.kind,
        "params": model.to_payload(),
    }
    Path(path).write_text(canonical_json(payload))


def load_model(path, expected_kind: str | None = None):
    """Round-trip loader; dispatches on the embedded kind tag."""
    from . import baselines, calibration  # deferred: io must not cycle

    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise IntegrityError(f"{path}: corrupted model file ({exc})") from exc
    for key in ("schema_version", "kind", "params"):
        if key not in payload:
            raise IntegrityError(f"{path}: missing {key!r}")
    if payload["schema_version"] != MODEL_SCHEMA_VERSION:
        raise MigrationError(
            f"{path}: schema_version {payload['schema_version']} "
            f"!= {MODEL_SCHEMA_VERSION}"
        )
    kind = payload["kind"]
    if expected_kind is not None and kind != expected_kind:
        raise SchemaError(f"{path}: kind {kind!r}, expected {expected_kind!r}")
    if kind == calibration.CalibratedModel.kind:
        return calibration.CalibratedModel.from_payload(payload["params"])
    if kind in baselines.BASELINE_KINDS:
        return baselines.BaselineSpec.from_payload(payload["params"])
    raise SchemaError(f"{path}: unknown model kind {kind!r}")


def save_case_csv(path, series: CaseSeries) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "cases", "population"])
        for idx, (d, c) in enumerate(zip(series.dates, series.counts)):
            count = "" if np.isnan(c) else int(c)
            writer.writerow([d.isoformat(), count,
                             int(series.population) if idx == 0 else ""])


def bundled_data_dir() -> Path:
    return Path(__file__).parent / "data"


BUNDLED_DATASETS = ("british_boarding_school", "diamond_princess")


def load_bundled(name: str):
    """Load a packaged public dataset.

    Returns (series, schedule, events); events is an empty list for
    datasets with no recorded interventions, and the schedule then carries
    all-zero strictness over the observation window.
    """
    if name not in BUNDLED_DATASETS:
        raise InputError(
            f"unknown bundled dataset {name!r}; known: {BUNDLED_DATASETS}"
        )
    root = bundled_data_dir()
    series = load_case_csv(root / f"{name}.csv")
    first = series[0] if isinstance(series, list) else series
    events_path = root / f"{name}_events.json"
    events = load_events(events_path) if events_path.exists() else []
    schedule, _ = compile_schedule(events, first.dates[0], len(first))
    return series, schedule, events
