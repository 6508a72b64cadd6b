"""Canonical species backbone: name resolution and negative sampling.

The backbone is a CSV export (GBIF-style) with one row per species. All
datasets join against it, so loading is strict: duplicate scientific names,
missing lineage fields and inconsistent genus/family/order assignments are
hard errors, not warnings.
"""

from __future__ import annotations

import csv
import unicodedata
from dataclasses import dataclass, field

from .errors import (
    DuplicateName,
    EmptyPool,
    InconsistentLineage,
    MissingLineage,
    NotFoundError,
    ParseError,
)
from .seeding import make_rng

BACKBONE_COLUMNS = [
    "taxon_id",
    "scientific_name",
    "common_name",
    "genus",
    "family",
    "order",
    "class",
    "synonyms",
]

NEGATIVE_LEVELS = ("random", "genus", "family", "order")

# Escalation order when a hard-negative pool is empty (singleton genus etc).
_ESCALATION = {"genus": "family", "family": "order", "order": "random"}


def normalize_name(name: str) -> str:
    """Normalization applied before any name comparison or index lookup.

    NFC, lowercase, trimmed, internal whitespace collapsed, trailing
    periods stripped. This is the join key policy for the whole build.
    """
    s = unicodedata.normalize("NFC", name)
    s = " ".join(s.lower().split())
    return s.rstrip(".")


@dataclass(frozen=True)
class TaxonRecord:
    taxon_id: str
    scientific_name: str
    common_name: str | None
    genus: str
    family: str
    order: str
    class_name: str
    synonyms: tuple[str, ...] = ()

    def name(self, kind: str) -> str:
        """Canonical name in the requested kind; falls back to scientific
        when no common name exists."""
        if kind == "common" and self.common_name:
            return self.common_name
        return self.scientific_name


@dataclass
class TaxonomyTable:
    """Immutable after load; safe for concurrent reads."""

    records: list[TaxonRecord]
    name_index: dict[str, str] = field(default_factory=dict)
    rank_index: dict[tuple[str, str], set[str]] = field(default_factory=dict)
    _by_id: dict[str, TaxonRecord] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self, taxon_id: str) -> TaxonRecord:
        return self._by_id[taxon_id]

    def has_id(self, taxon_id: str) -> bool:
        return taxon_id in self._by_id


def _build_indices(records: list[TaxonRecord]) -> TaxonomyTable:
    name_index: dict[str, str] = {}
    rank_index: dict[tuple[str, str], set[str]] = {}
    by_id: dict[str, TaxonRecord] = {}
    for rec in records:
        by_id[rec.taxon_id] = rec
        keys = [rec.scientific_name] + list(rec.synonyms)
        if rec.common_name:
            keys.append(rec.common_name)
        for key in keys:
            norm = normalize_name(key)
            if norm:
                # first writer wins: the canonical record keeps its name even
                # if another record lists it as a synonym
                name_index.setdefault(norm, rec.taxon_id)
        for rank, value in (
            ("genus", rec.genus),
            ("family", rec.family),
            ("order", rec.order),
            ("class", rec.class_name),
        ):
            rank_index.setdefault((rank, normalize_name(value)), set()).add(rec.taxon_id)
    return TaxonomyTable(records=records, name_index=name_index, rank_index=rank_index, _by_id=by_id)


def _check_lineage_functional(records: list[TaxonRecord]) -> None:
    # genus determines family, family determines order
    seen_family: dict[str, tuple[str, str]] = {}
    seen_order: dict[str, tuple[str, str]] = {}
    for rec in records:
        g = normalize_name(rec.genus)
        f = normalize_name(rec.family)
        o = normalize_name(rec.order)
        if g in seen_family and seen_family[g][0] != f:
            raise InconsistentLineage(
                f"genus {rec.genus!r} maps to family {seen_family[g][1]!r} "
                f"and {rec.family!r} (record {rec.taxon_id})"
            )
        seen_family.setdefault(g, (f, rec.family))
        if f in seen_order and seen_order[f][0] != o:
            raise InconsistentLineage(
                f"family {rec.family!r} maps to order {seen_order[f][1]!r} "
                f"and {rec.order!r} (record {rec.taxon_id})"
            )
        seen_order.setdefault(f, (o, rec.order))


def load_backbone(path: str) -> TaxonomyTable:
    """Load and validate a backbone CSV.

    Raises ParseError on malformed rows, DuplicateName when two rows
    normalize to the same scientific name, MissingLineage on empty
    genus/family/order, InconsistentLineage when lineage is not functional.
    """
    records: list[TaxonRecord] = []
    seen_names: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "empty file, expected header row") from None
        if header != BACKBONE_COLUMNS:
            raise ParseError(
                path, 1, f"bad header {header!r}, expected {BACKBONE_COLUMNS!r}"
            )
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(BACKBONE_COLUMNS):
                raise ParseError(
                    path, line_no, f"expected {len(BACKBONE_COLUMNS)} columns, got {len(row)}"
                )
            taxon_id, sci, common, genus, family, order, cls, syn = (c.strip() for c in row)
            if not taxon_id:
                raise ParseError(path, line_no, "empty taxon_id")
            if not normalize_name(sci):
                raise ParseError(path, line_no, "empty scientific_name")
            for rank_name, value in (("genus", genus), ("family", family), ("order", order)):
                if not value:
                    raise MissingLineage(
                        f"{path}:{line_no}: record {taxon_id} has empty {rank_name}"
                    )
            norm = normalize_name(sci)
            if norm in seen_names:
                raise DuplicateName(
                    f"{path}:{line_no}: scientific name {sci!r} already used by "
                    f"record {seen_names[norm]}"
                )
            seen_names[norm] = taxon_id
            synonyms = tuple(s.strip() for s in syn.split("|") if s.strip()) if syn else ()
            records.append(
                TaxonRecord(
                    taxon_id=taxon_id,
                    scientific_name=sci,
                    common_name=common or None,
                    genus=genus,
                    family=family,
                    order=order,
                    class_name=cls,
                    synonyms=synonyms,
                )
            )
    _check_lineage_functional(records)
    return _build_indices(records)


def resolve(table: TaxonomyTable, name: str, kind: str = "any") -> TaxonRecord:
    """Exact lookup after normalization; no fuzzy matching here.

    kind narrows which name field must have matched: "scientific",
    "common" or "any". Synonyms resolve to their canonical record under
    any kind. Raises NotFoundError so callers quarantine the clip.
    """
    if not name:
        raise NotFoundError(name, kind)
    norm = normalize_name(name)
    taxon_id = table.name_index.get(norm)
    if taxon_id is None:
        raise NotFoundError(name, kind)
    rec = table.by_id(taxon_id)
    if kind == "scientific":
        ok = norm == normalize_name(rec.scientific_name) or any(
            norm == normalize_name(s) for s in rec.synonyms
        )
    elif kind == "common":
        ok = rec.common_name is not None and norm == normalize_name(rec.common_name)
    else:
        ok = True
    if not ok:
        raise NotFoundError(name, kind)
    return rec


def negative_pool(table: TaxonomyTable, target: TaxonRecord, level: str) -> list[TaxonRecord]:
    """Candidate distractors for a target at a sampling level, sorted by
    scientific name for deterministic draws. Does not escalate."""
    if level == "random":
        pool = [r for r in table.records if r.taxon_id != target.taxon_id]
    else:
        if level not in ("genus", "family", "order"):
            raise ValueError(f"unknown negative level {level!r}")
        value = {"genus": target.genus, "family": target.family, "order": target.order}[level]
        ids = table.rank_index.get((level, normalize_name(value)), set())
        pool = [table.by_id(i) for i in ids if i != target.taxon_id]
    pool.sort(key=lambda r: normalize_name(r.scientific_name))
    return pool


def effective_level(table: TaxonomyTable, target: TaxonRecord, level: str) -> str:
    """Level actually used after escalating past empty pools
    (genus -> family -> order -> random)."""
    while level != "random" and not negative_pool(table, target, level):
        level = _ESCALATION[level]
    return level


def sample_negatives(
    table: TaxonomyTable,
    target: TaxonRecord,
    level: str,
    k: int,
    seed: int,
) -> list[TaxonRecord]:
    """Sample min(k, pool) distinct non-target species uniformly without
    replacement. Empty hard-negative pools escalate toward random; a
    1-species table raises EmptyPool.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    level = effective_level(table, target, level)
    pool = negative_pool(table, target, level)
    if not pool:
        raise EmptyPool(f"no species besides {target.scientific_name!r} to sample")
    rng = make_rng(seed, "sample_negatives", level, target.taxon_id)
    take = min(k, len(pool))
    idx = rng.choice(len(pool), size=take, replace=False)
    return [pool[i] for i in idx]
