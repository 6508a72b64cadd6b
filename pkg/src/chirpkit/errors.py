"""Exception types shared across the toolkit.

Every error that a pipeline stage can surface to a caller is a subclass of
ChirpkitError, so CLI entry points can map "known" failures to exit code 1
and let genuine bugs propagate.
"""

from __future__ import annotations


class ChirpkitError(Exception):
    """Base class for all toolkit errors."""


class ParseError(ChirpkitError):
    """A file could not be parsed; carries the 1-based line number."""

    def __init__(self, path: str, line_no: int, message: str):
        self.path = path
        self.line_no = line_no
        super().__init__(f"{path}:{line_no}: {message}")


class DuplicateName(ChirpkitError):
    """Two taxonomy rows normalize to the same scientific name."""


class MissingLineage(ChirpkitError):
    """A taxonomy row has an empty genus, family, order or class."""


class InconsistentLineage(ChirpkitError):
    """Two records share a genus (or family) but disagree on the parent rank."""


class NotFoundError(ChirpkitError):
    """A name does not resolve; the caller must quarantine, not drop."""

    def __init__(self, name: str, kind: str = "any"):
        self.name = name
        self.kind = kind
        super().__init__(f"no taxon found for {kind} name {name!r}")


class EmptyPool(ChirpkitError):
    """No candidate species remain to sample from."""


class NotEnoughEligible(ChirpkitError):
    """Fewer species meet the holdout eligibility rule than requested."""

    def __init__(self, eligible: int, requested: int):
        self.eligible = eligible
        self.requested = requested
        super().__init__(
            f"only {eligible} species eligible for holdout, {requested} requested"
        )


class InvariantViolation(ChirpkitError):
    """A record fails a schema invariant; names the record and field."""

    def __init__(self, record_id: str, field: str, message: str):
        self.record_id = record_id
        self.field = field
        super().__init__(f"{record_id}: {field}: {message}")


class SkipClip(ChirpkitError):
    """A clip lacks what a task needs; reported and counted, never fatal."""

    def __init__(self, clip_id: str, reason: str):
        self.clip_id = clip_id
        self.reason = reason
        super().__init__(f"{clip_id}: {reason}")


class InvalidParams(ChirpkitError):
    """Numeric parameters violate their documented ranges."""


class ShapeError(ChirpkitError):
    """An array input has the wrong shape or axis size."""


class ShapeMismatch(ChirpkitError):
    """Waveforms or matrices that must align do not."""


class EmptyMix(ChirpkitError):
    """No stem passed the selection threshold; caller skips the clip."""


class TooManySources(ChirpkitError):
    """A synthetic mixture was given more sources than allowed."""


class NameCollision(ChirpkitError):
    """Two mixture sources carry the same instrument name."""


class MissingPrediction(ChirpkitError):
    """Reference ids with no prediction; carries the offending ids."""

    def __init__(self, ids):
        self.ids = sorted(ids)
        shown = ", ".join(self.ids[:5])
        more = "" if len(self.ids) <= 5 else f" (+{len(self.ids) - 5} more)"
        super().__init__(f"missing predictions for: {shown}{more}")


class DuplicatePrediction(ChirpkitError):
    """The same instance id appears more than once in a predictions file."""


class UnknownInstanceId(ChirpkitError):
    """A prediction references an instance id absent from the references."""


class ChunkMismatch(ChirpkitError):
    """Detection prediction and reference chunk ids do not align."""


class IdMismatch(ChirpkitError):
    """External score file ids do not align with the scored items."""


class DimensionMismatch(ChirpkitError):
    """Embedding vectors have different dimensions."""


class ZeroVector(ChirpkitError):
    """Cosine similarity is undefined for a zero vector."""
