"""On-disk data model: clips, events, instances, predictions.

All files are UTF-8 JSONL, one object per line. Serialization is canonical
(fixed key order, shortest round-trip floats, optional fields omitted when
absent) so that read -> write round-trips are byte-identical for validated
input and so that identical pipeline runs produce identical bytes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable

from .errors import InvariantViolation, NotEnoughEligible, ParseError
from .seeding import make_rng
from .taxonomy import TaxonomyTable, TaxonRecord, normalize_name

TASKS = (
    "classification",
    "detection",
    "captioning",
    "calltype",
    "lifestage",
    "count",
    "pitch",
    "instrument",
    "velocity",
    "quality",
    "mixture_count",
    "mixture_names",
)

STAGES = ("stage1", "stage2")

_CLIP_KEYS = [
    "clip_id",
    "audio_uri",
    "sample_rate_hz",
    "duration_s",
    "dataset",
    "license",
    "focal_taxon",
    "all_taxa",
    "events",
    "caption",
    "attrs",
]

_INSTANCE_KEYS = [
    "instance_id",
    "clip_id",
    "window",
    "task",
    "stage",
    "instruction",
    "target",
    "options",
    "meta",
]


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


@dataclass
class Event:
    onset_s: float
    offset_s: float
    label: str

    def validate(self, clip_id: str, duration_s: float) -> None:
        if not _is_num(self.onset_s) or not _is_num(self.offset_s):
            raise InvariantViolation(clip_id, "events", "onset/offset must be finite numbers")
        if self.onset_s < 0:
            raise InvariantViolation(clip_id, "events", f"onset {self.onset_s} < 0")
        if self.offset_s <= self.onset_s:
            raise InvariantViolation(
                clip_id, "events", f"offset {self.offset_s} <= onset {self.onset_s}"
            )
        if self.offset_s > duration_s:
            raise InvariantViolation(
                clip_id, "events", f"offset {self.offset_s} beyond clip duration {duration_s}"
            )


@dataclass
class ClipRecord:
    clip_id: str
    audio_uri: str
    sample_rate_hz: int
    duration_s: float
    dataset: str
    license: str
    focal_taxon: str | None = None
    all_taxa: list[str] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)
    caption: str | None = None
    attrs: dict[str, str] = field(default_factory=dict)
    extras: dict = field(default_factory=dict, repr=False)

    def taxa(self) -> list[str]:
        """All referenced taxon ids (focal first, deduplicated)."""
        out = []
        if self.focal_taxon:
            out.append(self.focal_taxon)
        for t in self.all_taxa:
            if t not in out:
                out.append(t)
        return out

    def validate(self, table: TaxonomyTable | None = None) -> None:
        if not self.clip_id:
            raise InvariantViolation("<missing>", "clip_id", "empty clip_id")
        if not isinstance(self.sample_rate_hz, int) or self.sample_rate_hz <= 0:
            raise InvariantViolation(self.clip_id, "sample_rate_hz", "must be a positive integer")
        if not _is_num(self.duration_s) or self.duration_s <= 0:
            raise InvariantViolation(self.clip_id, "duration_s", "must be positive and finite")
        for ev in self.events:
            ev.validate(self.clip_id, self.duration_s)
        for key, val in self.attrs.items():
            if not isinstance(key, str) or not isinstance(val, str):
                raise InvariantViolation(self.clip_id, "attrs", "attrs must map strings to strings")
        if table is not None:
            for tid in self.taxa():
                if not table.has_id(tid):
                    raise InvariantViolation(
                        self.clip_id, "all_taxa", f"unknown taxon_id {tid!r}"
                    )

    def to_json_dict(self) -> dict:
        d: dict = {
            "clip_id": self.clip_id,
            "audio_uri": self.audio_uri,
            "sample_rate_hz": self.sample_rate_hz,
            "duration_s": self.duration_s,
            "dataset": self.dataset,
            "license": self.license,
        }
        if self.focal_taxon is not None:
            d["focal_taxon"] = self.focal_taxon
        d["all_taxa"] = list(self.all_taxa)
        d["events"] = [
            {"onset_s": e.onset_s, "offset_s": e.offset_s, "label": e.label}
            for e in self.events
        ]
        if self.caption is not None:
            d["caption"] = self.caption
        d["attrs"] = dict(self.attrs)
        for key in sorted(self.extras):
            d[key] = self.extras[key]
        return d

    @classmethod
    def from_json_dict(cls, d: dict, strict: bool = True) -> "ClipRecord":
        clip_id = d.get("clip_id", "<missing>")
        unknown = [k for k in d if k not in _CLIP_KEYS]
        if unknown and strict:
            raise InvariantViolation(clip_id, unknown[0], "unknown key in strict mode")
        for key in ("clip_id", "audio_uri", "sample_rate_hz", "duration_s", "dataset", "license"):
            if key not in d:
                raise InvariantViolation(clip_id, key, "missing required key")
        events = []
        for ev in d.get("events", []):
            for key in ("onset_s", "offset_s", "label"):
                if key not in ev:
                    raise InvariantViolation(clip_id, "events", f"event missing {key!r}")
            events.append(Event(onset_s=ev["onset_s"], offset_s=ev["offset_s"], label=ev["label"]))
        return cls(
            clip_id=d["clip_id"],
            audio_uri=d["audio_uri"],
            sample_rate_hz=d["sample_rate_hz"],
            duration_s=d["duration_s"],
            dataset=d["dataset"],
            license=d["license"],
            focal_taxon=d.get("focal_taxon"),
            all_taxa=list(d.get("all_taxa", [])),
            events=events,
            caption=d.get("caption"),
            attrs=dict(d.get("attrs", {})),
            extras={k: d[k] for k in unknown},
        )


@dataclass
class Instance:
    instance_id: str
    clip_id: str
    task: str
    stage: str
    instruction: str
    target: str
    window: tuple[float, float] | None = None
    options: list[str] | None = None
    meta: dict[str, str] = field(default_factory=dict)

    def validate(self, clip_durations: dict[str, float] | None = None) -> None:
        if not self.instance_id:
            raise InvariantViolation("<missing>", "instance_id", "empty instance_id")
        if self.task not in TASKS:
            raise InvariantViolation(self.instance_id, "task", f"unknown task {self.task!r}")
        if self.stage not in STAGES:
            raise InvariantViolation(self.instance_id, "stage", f"unknown stage {self.stage!r}")
        if self.options is not None:
            if len(self.options) != len(set(self.options)):
                raise InvariantViolation(self.instance_id, "options", "duplicate options")
            allowed = set(self.options) | {"None"}
            # multi-label targets are ", "-joined members of the option set
            parts = [self.target] if self.target == "None" else self.target.split(", ")
            for part in parts:
                if part not in allowed:
                    raise InvariantViolation(
                        self.instance_id, "target", f"target part {part!r} not in options"
                    )
        if self.window is not None:
            start, end = self.window
            if not (_is_num(start) and _is_num(end)) or not 0 <= start < end:
                raise InvariantViolation(
                    self.instance_id, "window", f"bad window ({start}, {end})"
                )
            if clip_durations is not None and self.clip_id in clip_durations:
                if end > clip_durations[self.clip_id]:
                    raise InvariantViolation(
                        self.instance_id, "window", "window extends past clip duration"
                    )

    def to_json_dict(self) -> dict:
        d: dict = {"instance_id": self.instance_id, "clip_id": self.clip_id}
        if self.window is not None:
            d["window"] = [self.window[0], self.window[1]]
        d["task"] = self.task
        d["stage"] = self.stage
        d["instruction"] = self.instruction
        d["target"] = self.target
        if self.options is not None:
            d["options"] = list(self.options)
        d["meta"] = dict(self.meta)
        return d

    @classmethod
    def from_json_dict(cls, d: dict, strict: bool = True) -> "Instance":
        inst_id = d.get("instance_id", "<missing>")
        unknown = [k for k in d if k not in _INSTANCE_KEYS]
        if unknown and strict:
            raise InvariantViolation(inst_id, unknown[0], "unknown key in strict mode")
        for key in ("instance_id", "clip_id", "task", "stage", "instruction", "target"):
            if key not in d:
                raise InvariantViolation(inst_id, key, "missing required key")
        window = None
        if d.get("window") is not None:
            w = d["window"]
            if not isinstance(w, list) or len(w) != 2:
                raise InvariantViolation(inst_id, "window", "window must be [start_s, end_s]")
            window = (w[0], w[1])
        options = list(d["options"]) if d.get("options") is not None else None
        return cls(
            instance_id=d["instance_id"],
            clip_id=d["clip_id"],
            task=d["task"],
            stage=d["stage"],
            instruction=d["instruction"],
            target=d["target"],
            window=window,
            options=options,
            meta=dict(d.get("meta", {})),
        )


@dataclass
class PredictionRecord:
    instance_id: str
    text: str


def _json_line(d: dict) -> str:
    return json.dumps(d, ensure_ascii=False)


def _iter_jsonl(path: str):
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                obj = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise ParseError(path, line_no, f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise ParseError(path, line_no, "expected a JSON object")
            yield line_no, obj


def read_manifest(
    path: str,
    table: TaxonomyTable | None = None,
    strict: bool = True,
) -> list[ClipRecord]:
    """Read and validate a clip manifest. Order is preserved; writing the
    result back yields the input bytes when the input was canonical."""
    records: list[ClipRecord] = []
    seen_ids: set[str] = set()
    for line_no, obj in _iter_jsonl(path):
        rec = ClipRecord.from_json_dict(obj, strict=strict)
        rec.validate(table)
        if rec.clip_id in seen_ids:
            raise InvariantViolation(rec.clip_id, "clip_id", f"duplicate at line {line_no}")
        seen_ids.add(rec.clip_id)
        records.append(rec)
    return records


def write_manifest(records: Iterable[ClipRecord], path: str) -> None:
    """Write records in the given order; pipeline stages sort before calling."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(_json_line(rec.to_json_dict()))
            fh.write("\n")


def read_instances(path: str, strict: bool = True) -> list[Instance]:
    instances: list[Instance] = []
    seen: set[str] = set()
    for line_no, obj in _iter_jsonl(path):
        inst = Instance.from_json_dict(obj, strict=strict)
        inst.validate()
        if inst.instance_id in seen:
            raise InvariantViolation(inst.instance_id, "instance_id", f"duplicate at line {line_no}")
        seen.add(inst.instance_id)
        instances.append(inst)
    return instances


def write_instances(instances: Iterable[Instance], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(_json_line(inst.to_json_dict()))
            fh.write("\n")


def read_predictions(path: str) -> list[PredictionRecord]:
    preds: list[PredictionRecord] = []
    for line_no, obj in _iter_jsonl(path):
        if "instance_id" not in obj or "text" not in obj:
            raise ParseError(path, line_no, "prediction needs instance_id and text")
        preds.append(PredictionRecord(instance_id=obj["instance_id"], text=obj["text"]))
    return preds


def write_predictions(preds: Iterable[PredictionRecord], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in preds:
            fh.write(_json_line({"instance_id": p.instance_id, "text": p.text}))
            fh.write("\n")


def holdout_unseen_species(
    records: list[ClipRecord],
    table: TaxonomyTable,
    n_species: int,
    min_genus_recordings: int,
    seed: int,
) -> tuple[list[ClipRecord], list[ClipRecord], list[TaxonRecord]]:
    """Unseen-species split.

    A species is eligible when its genus keeps at least min_genus_recordings
    clips after removing the species' own clips. Exactly n_species eligible
    species are drawn uniformly (seeded); every clip referencing a held-out
    species moves to the holdout set, so train never sees their audio.
    Species are sampled uniformly, not stratified by class.
    """
    clips_by_species: dict[str, set[int]] = {}
    clips_by_genus: dict[str, set[int]] = {}
    for i, rec in enumerate(records):
        for tid in rec.taxa():
            clips_by_species.setdefault(tid, set()).add(i)
            genus = normalize_genus(table, tid)
            clips_by_genus.setdefault(genus, set()).add(i)

    eligible: list[str] = []
    for tid in sorted(clips_by_species):
        genus = normalize_genus(table, tid)
        remaining = clips_by_genus[genus] - clips_by_species[tid]
        if len(remaining) >= min_genus_recordings:
            eligible.append(tid)
    if len(eligible) < n_species:
        raise NotEnoughEligible(len(eligible), n_species)

    rng = make_rng(seed, "holdout_unseen_species")
    chosen_idx = rng.choice(len(eligible), size=n_species, replace=False)
    held_ids = {eligible[i] for i in chosen_idx}

    train: list[ClipRecord] = []
    holdout: list[ClipRecord] = []
    for rec in records:
        if any(t in held_ids for t in rec.taxa()):
            holdout.append(rec)
        else:
            train.append(rec)
    held = sorted((table.by_id(t) for t in held_ids), key=lambda r: r.scientific_name)
    return train, holdout, held


def normalize_genus(table: TaxonomyTable, taxon_id: str) -> str:
    from .taxonomy import normalize_name

    return normalize_name(table.by_id(taxon_id).genus)


@dataclass
class StatsReport:
    kind: str
    n_items: int
    per_dataset: dict[str, dict]
    total_hours: float | None = None
    label_histogram: dict[str, int] = field(default_factory=dict)
    task_counts: dict[str, int] = field(default_factory=dict)
    stage_counts: dict[str, int] = field(default_factory=dict)
    none_rate: float | None = None

    def to_json_dict(self) -> dict:
        d: dict = {"kind": self.kind, "n_items": self.n_items}
        d["per_dataset"] = {k: self.per_dataset[k] for k in sorted(self.per_dataset)}
        if self.total_hours is not None:
            d["total_hours"] = self.total_hours
        if self.label_histogram:
            d["label_histogram"] = {
                k: self.label_histogram[k] for k in sorted(self.label_histogram)
            }
        if self.task_counts:
            d["task_counts"] = {k: self.task_counts[k] for k in sorted(self.task_counts)}
        if self.stage_counts:
            d["stage_counts"] = {k: self.stage_counts[k] for k in sorted(self.stage_counts)}
        if self.none_rate is not None:
            d["none_rate"] = self.none_rate
        return d


def manifest_stats(items: list) -> StatsReport:
    """Aggregate counts for either a clip manifest or an instance file.

    Hours are total duration / 3600 rounded to one decimal. For instances
    the dataset is the first instance_id path component and none_rate is
    the fraction of detection instances whose target is "None".
    """
    if items and isinstance(items[0], Instance):
        per_dataset: dict[str, dict] = {}
        task_counts: dict[str, int] = {}
        stage_counts: dict[str, int] = {}
        det_total = 0
        det_none = 0
        for inst in items:
            ds = inst.instance_id.split("/", 1)[0]
            per_dataset.setdefault(ds, {"instances": 0})["instances"] += 1
            task_counts[inst.task] = task_counts.get(inst.task, 0) + 1
            stage_counts[inst.stage] = stage_counts.get(inst.stage, 0) + 1
            if inst.task == "detection":
                det_total += 1
                if inst.target == "None":
                    det_none += 1
        return StatsReport(
            kind="instances",
            n_items=len(items),
            per_dataset=per_dataset,
            task_counts=task_counts,
            stage_counts=stage_counts,
            none_rate=(det_none / det_total) if det_total else None,
        )

    per_dataset = {}
    label_histogram: dict[str, int] = {}
    total_s = 0.0
    for rec in items:
        entry = per_dataset.setdefault(rec.dataset, {"clips": 0, "hours": 0.0, "_s": 0.0})
        entry["clips"] += 1
        entry["_s"] += rec.duration_s
        total_s += rec.duration_s
        for tid in rec.taxa():
            label_histogram[tid] = label_histogram.get(tid, 0) + 1
    for entry in per_dataset.values():
        entry["hours"] = round(entry.pop("_s") / 3600.0, 1)
    return StatsReport(
        kind="clips",
        n_items=len(items),
        per_dataset=per_dataset,
        total_hours=round(total_s / 3600.0, 1),
        label_histogram=label_histogram,
    )
