"""Fine-grained concept-separation metrics over annotation records.

All three metrics are ratios of corpus-wide counts (micro averages); a macro
average over records is available for analysis.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, fields


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class AnnotationRecord:
    prompt_id: str
    total_attributes: int
    correctly_mapped: int
    incorrectly_mapped_attributes: int
    entities_in_prompt: int
    entities_depicted: int

    def __post_init__(self):
        if not 0 <= self.correctly_mapped <= self.total_attributes:
            raise MetricsError(f"{self.prompt_id}: correctly_mapped outside 0..total_attributes")
        if not 0 <= self.incorrectly_mapped_attributes <= self.total_attributes:
            raise MetricsError(f"{self.prompt_id}: incorrectly_mapped_attributes outside 0..total_attributes")
        if not 0 <= self.entities_depicted <= self.entities_in_prompt:
            raise MetricsError(f"{self.prompt_id}: entities_depicted outside 0..entities_in_prompt")


COUNT_FIELDS = tuple(f.name for f in fields(AnnotationRecord) if f.name != "prompt_id")


def _ratio(records, num, den, average):
    records = list(records)
    if not records:
        raise MetricsError("no annotation records")
    if average == "micro":
        total = sum(getattr(r, den) for r in records)
        if total == 0:
            raise MetricsError(f"{den} is zero across the corpus; ratio undefined")
        return sum(getattr(r, num) for r in records) / total
    if average == "macro":
        vals = [getattr(r, num) / getattr(r, den) for r in records if getattr(r, den) > 0]
        if not vals:
            raise MetricsError(f"{den} is zero for every record; ratio undefined")
        return sum(vals) / len(vals)
    raise ValueError(f"average must be 'micro' or 'macro', not {average!r}")


def proper_binding(records, average: str = "micro") -> float:
    return _ratio(records, "correctly_mapped", "total_attributes", average)


def improper_binding(records, average: str = "micro") -> float:
    """Share of attributes attached to a wrong object.

    An attribute leaked onto several wrong objects counts once, so this is
    independent of :func:`proper_binding` and the two may sum past 1.
    """
    return _ratio(records, "incorrectly_mapped_attributes", "total_attributes", average)


def entity_neglect(records, average: str = "micro") -> float:
    return 1.0 - _ratio(records, "entities_depicted", "entities_in_prompt", average)


def summarize(records, average: str = "micro") -> dict:
    records = list(records)
    return {
        "n_records": len(records),
        "average": average,
        "proper_binding": proper_binding(records, average),
        "improper_binding": improper_binding(records, average),
        "entity_neglect": entity_neglect(records, average),
    }


def _record_from_mapping(row: dict, where: str) -> AnnotationRecord:
    missing = [k for k in ("prompt_id",) + COUNT_FIELDS if k not in row or row[k] in (None, "")]
    if missing:
        raise MetricsError(f"{where}: missing fields {missing}")
    try:
        counts = {k: int(row[k]) for k in COUNT_FIELDS}
    except (TypeError, ValueError):
        raise MetricsError(f"{where}: count fields must be integers") from None
    try:
        return AnnotationRecord(str(row["prompt_id"]), **counts)
    except MetricsError as err:
        raise MetricsError(f"{where}: {err}") from None


def read_csv(text: str) -> list[AnnotationRecord]:
    reader = csv.DictReader(io.StringIO(text))
    # header is line 1
    return [_record_from_mapping(row, f"row {n}") for n, row in enumerate(reader, start=2)]


def read_jsonl(text: str) -> list[AnnotationRecord]:
    out = []
    for n, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as err:
            raise MetricsError(f"row {n}: invalid JSON ({err.msg})") from None
        if not isinstance(row, dict):
            raise MetricsError(f"row {n}: expected a JSON object")
        out.append(_record_from_mapping(row, f"row {n}"))
    return out


def load_annotations(path) -> list[AnnotationRecord]:
    with open(path, encoding="utf-8") as f:
        text = f.read()
    if not text.strip():
        raise MetricsError(f"{path}: empty annotation file")
    if str(path).endswith((".jsonl", ".json")) or text.lstrip().startswith("{"):
        records = read_jsonl(text)
    else:
        records = read_csv(text)
    if not records:
        raise MetricsError(f"{path}: no annotation records")
    return records


def to_dicts(records) -> list[dict]:
    return [asdict(r) for r in records]
