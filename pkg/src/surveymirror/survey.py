"""Survey data model: study specifications, respondents and response matrices.

A study specification is a JSON document::

    {"name": ..., "context": ...,
     "scale": {"min": 1, "max": 7},
     "latents": [{"name": ..., "role": "factor" | "outcome",
                  "items": [{"id": ..., "text": ...}]}],
     "paths": [{"from": ..., "to": ...}],
     "demographics": [{"name": ..., "kind": "categorical" | "numeric"}]}

``context``, latent ``label``, scale ``anchors`` and demographic ``levels`` are
optional. Responses are CSV files with the header
``respondent_id, <demographic columns...>, <item columns...>``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "BUNDLED_STUDIES",
    "NOT_PROVIDED",
    "DemographicField",
    "LatentVariable",
    "LikertScale",
    "Respondent",
    "ResponseDataError",
    "ResponseMatrix",
    "SpecError",
    "StructuralPath",
    "SurveyItem",
    "SurveySpec",
    "bundled_spec",
    "dump_study_spec",
    "load_responses",
    "load_study_spec",
    "split_items",
    "write_responses",
]

BUNDLED_STUDIES = ("study1", "study2_case1", "study2_case2")

# Prompt rendering of a missing demographic value.
NOT_PROVIDED = "not provided"

ROLES = ("factor", "outcome")
DEMOGRAPHIC_KINDS = ("categorical", "numeric")


class SpecError(ValueError):
    """Malformed or inconsistent study specification."""


class ResponseDataError(ValueError):
    """Response data that does not fit its study specification.

    ``row`` is the 1-based data row (header excluded) and ``column`` the
    offending field, when they apply.
    """

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


@dataclass(frozen=True)
class LikertScale:
    min: int
    max: int
    anchors: tuple[str, str] | None = None

    def __post_init__(self):
        for bound in (self.min, self.max):
            if isinstance(bound, bool) or not isinstance(bound, int):
                raise SpecError(f"scale bounds must be integers, got {bound!r}")
        if self.min < 1 or self.min >= self.max:
            raise SpecError(f"need 1 <= min < max, got min={self.min}, max={self.max}")

    @property
    def levels(self) -> np.ndarray:
        return np.arange(self.min, self.max + 1)

    @property
    def n_levels(self) -> int:
        return self.max - self.min + 1

    @property
    def midpoint(self) -> float:
        return (self.min + self.max) / 2

    def contains(self, value) -> bool:
        return self.min <= value <= self.max


@dataclass(frozen=True)
class SurveyItem:
    id: str
    text: str


@dataclass(frozen=True)
class LatentVariable:
    name: str
    items: tuple[SurveyItem, ...]
    role: str = "factor"
    label: str | None = None

    def __post_init__(self):
        if not self.items:
            raise SpecError(f"latent {self.name!r} has no items")
        if self.role not in ROLES:
            raise SpecError(f"latent {self.name!r}: role must be one of {ROLES}, got {self.role!r}")

    @property
    def item_ids(self) -> tuple[str, ...]:
        return tuple(item.id for item in self.items)

    @property
    def display_name(self) -> str:
        return self.label or self.name


@dataclass(frozen=True)
class StructuralPath:
    source: str
    target: str

    def __str__(self):
        return f"{self.source} -> {self.target}"


@dataclass(frozen=True)
class DemographicField:
    name: str
    kind: str = "categorical"
    levels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.kind not in DEMOGRAPHIC_KINDS:
            raise SpecError(f"demographic {self.name!r}: kind must be one of {DEMOGRAPHIC_KINDS}")


@dataclass(frozen=True)
class SurveySpec:
    """Validated study definition. Item order is declaration order."""

    name: str
    scale: LikertScale
    latents: tuple[LatentVariable, ...]
    paths: tuple[StructuralPath, ...] = ()
    demographics: tuple[DemographicField, ...] = ()
    context: str = ""

    def __post_init__(self):
        if not self.latents:
            raise SpecError("spec declares no latent variables")
        names = [lv.name for lv in self.latents]
        dup = _first_duplicate(names)
        if dup is not None:
            raise SpecError(f"duplicate latent name {dup!r}")
        dup = _first_duplicate(item.id for lv in self.latents for item in lv.items)
        if dup is not None:
            raise SpecError(f"duplicate item id {dup!r}")
        dup = _first_duplicate(d.name for d in self.demographics)
        if dup is not None:
            raise SpecError(f"duplicate demographic field {dup!r}")
        clash = set(d.name for d in self.demographics) & set(self.item_ids)
        if clash or "respondent_id" in set(self.item_ids) | {d.name for d in self.demographics}:
            raise SpecError(f"column name collision: {sorted(clash) or ['respondent_id']}")
        known = set(names)
        for path in self.paths:
            for end in (path.source, path.target):
                if end not in known:
                    raise SpecError(f"path {path} references unknown latent {end!r}")
            if path.source == path.target:
                raise SpecError(f"self-loop path {path}")
        dup = _first_duplicate((p.source, p.target) for p in self.paths)
        if dup is not None:
            raise SpecError(f"duplicate path {dup[0]} -> {dup[1]}")
        cycle = _find_cycle(names, self.paths)
        if cycle:
            raise SpecError("cyclic path graph: " + " -> ".join(cycle))

    @property
    def latent_names(self) -> tuple[str, ...]:
        return tuple(lv.name for lv in self.latents)

    @property
    def item_ids(self) -> tuple[str, ...]:
        return tuple(item.id for lv in self.latents for item in lv.items)

    @property
    def demographic_names(self) -> tuple[str, ...]:
        return tuple(d.name for d in self.demographics)

    def latent(self, name: str) -> LatentVariable:
        for lv in self.latents:
            if lv.name == name:
                return lv
        raise KeyError(name)

    def item(self, item_id: str) -> SurveyItem:
        for lv in self.latents:
            for item in lv.items:
                if item.id == item_id:
                    return item
        raise KeyError(item_id)

    def latent_of(self, item_id: str) -> str:
        for lv in self.latents:
            if item_id in lv.item_ids:
                return lv.name
        raise KeyError(item_id)

    def predecessors(self, name: str) -> tuple[str, ...]:
        """Latents with a path into ``name``, in declaration order."""
        sources = {p.source for p in self.paths if p.target == name}
        return tuple(n for n in self.latent_names if n in sources)

    @property
    def endogenous(self) -> tuple[str, ...]:
        return tuple(n for n in self.latent_names if self.predecessors(n))

    @property
    def outcome_latents(self) -> tuple[str, ...]:
        return tuple(lv.name for lv in self.latents if lv.role == "outcome")


def _first_duplicate(values: Iterable):
    seen = set()
    for v in values:
        if v in seen:
            return v
        seen.add(v)
    return None


def _find_cycle(names: Sequence[str], paths: Sequence[StructuralPath]) -> list[str] | None:
    succ = {n: [p.target for p in paths if p.source == n] for n in names}
    state = dict.fromkeys(names, 0)  # 0 new, 1 on stack, 2 done
    stack: list[str] = []

    def visit(node):
        state[node] = 1
        stack.append(node)
        for nxt in succ[node]:
            if state[nxt] == 1:
                return stack[stack.index(nxt):] + [nxt]
            if state[nxt] == 0:
                found = visit(nxt)
                if found:
                    return found
        stack.pop()
        state[node] = 2
        return None

    for n in names:
        if state[n] == 0:
            found = visit(n)
            if found:
                return found
    return None


# --------------------------------------------------------------------------
# study-spec documents


def load_study_spec(source) -> SurveySpec:
    """Parse a study-spec JSON document.

    ``source`` may be JSON text, a path to a file, a bundled study name
    (see ``BUNDLED_STUDIES``) or an already-decoded mapping.
    """
    if isinstance(source, Mapping):
        doc = source
    else:
        text = _read_source(source)
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"study spec is not valid JSON: {exc}") from exc
    if not isinstance(doc, Mapping):
        raise SpecError("study spec must be a JSON object")
    try:
        scale_doc = doc["scale"]
        anchors = scale_doc.get("anchors")
        scale = LikertScale(
            int(scale_doc["min"]) if _is_integral(scale_doc["min"]) else scale_doc["min"],
            int(scale_doc["max"]) if _is_integral(scale_doc["max"]) else scale_doc["max"],
            (anchors["min"], anchors["max"]) if anchors else None,
        )
        latents = tuple(
            LatentVariable(
                name=lv["name"],
                items=tuple(SurveyItem(str(it["id"]), it["text"]) for it in lv["items"]),
                role=lv.get("role", "factor"),
                label=lv.get("label"),
            )
            for lv in doc["latents"]
        )
        paths = tuple(StructuralPath(p["from"], p["to"]) for p in doc.get("paths", ()))
        demographics = tuple(
            DemographicField(d["name"], d.get("kind", "categorical"),
                             tuple(d["levels"]) if d.get("levels") else None)
            for d in doc.get("demographics", ())
        )
        return SurveySpec(
            name=doc["name"],
            scale=scale,
            latents=latents,
            paths=paths,
            demographics=demographics,
            context=doc.get("context", ""),
        )
    except (KeyError, TypeError) as exc:
        raise SpecError(f"study spec is missing or has a malformed field: {exc}") from exc


def _is_integral(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _read_source(source) -> str:
    if isinstance(source, Path):
        return source.read_text(encoding="utf-8")
    if isinstance(source, str):
        if source in BUNDLED_STUDIES:
            return resources.files("surveymirror").joinpath("data", f"{source}.json").read_text("utf-8")
        if not source.lstrip().startswith("{") and Path(source).exists():
            return Path(source).read_text(encoding="utf-8")
        return source
    raise TypeError(f"cannot read a study spec from {type(source).__name__}")


def bundled_spec(name: str) -> SurveySpec:
    if name not in BUNDLED_STUDIES:
        raise KeyError(f"unknown bundled study {name!r}; choose from {BUNDLED_STUDIES}")
    return load_study_spec(name)


def spec_to_dict(spec: SurveySpec) -> dict:
    scale = {"min": spec.scale.min, "max": spec.scale.max}
    if spec.scale.anchors:
        scale["anchors"] = {"min": spec.scale.anchors[0], "max": spec.scale.anchors[1]}
    latents = []
    for lv in spec.latents:
        entry = {"name": lv.name}
        if lv.label is not None:
            entry["label"] = lv.label
        entry["role"] = lv.role
        entry["items"] = [{"id": it.id, "text": it.text} for it in lv.items]
        latents.append(entry)
    demographics = []
    for d in spec.demographics:
        entry = {"name": d.name, "kind": d.kind}
        if d.levels:
            entry["levels"] = list(d.levels)
        demographics.append(entry)
    doc = {"name": spec.name}
    if spec.context:
        doc["context"] = spec.context
    doc.update(
        scale=scale,
        latents=latents,
        paths=[{"from": p.source, "to": p.target} for p in spec.paths],
        demographics=demographics,
    )
    return doc


def dump_study_spec(spec: SurveySpec) -> str:
    return json.dumps(spec_to_dict(spec), indent=2, ensure_ascii=False) + "\n"


def split_items(spec: SurveySpec, target_latents: Iterable[str]) -> tuple[list[str], list[str]]:
    """Partition the item set into (prior_items, target_items).

    Target items are the items of ``target_latents``; prior items are all the
    others. Both lists follow the canonical item order.
    """
    targets = set(target_latents)
    if not targets:
        raise SpecError("target latent set is empty")
    unknown = sorted(targets - set(spec.latent_names))
    if unknown:
        raise SpecError(f"unknown target latent(s): {unknown}")
    if targets == set(spec.latent_names):
        raise SpecError("every latent is a target; no prior items would remain")
    prior, target = [], []
    for lv in spec.latents:
        (target if lv.name in targets else prior).extend(lv.item_ids)
    return prior, target


# --------------------------------------------------------------------------
# respondents and response matrices


@dataclass(frozen=True)
class Respondent:
    """One respondent. A demographic value of ``None`` marks it unknown."""

    id: str
    demographics: Mapping[str, object] = field(default_factory=dict)
    answers: Mapping[str, int] = field(default_factory=dict)

    @property
    def missing_demographics(self) -> tuple[str, ...]:
        return tuple(k for k, v in self.demographics.items() if v is None)

    def with_answers(self, answers: Mapping[str, int]) -> "Respondent":
        merged = dict(self.answers)
        merged.update(answers)
        return Respondent(self.id, dict(self.demographics), merged)


@dataclass(frozen=True)
class ResponseMatrix:
    """Respondent-by-item integer responses in canonical column order.

    ``items`` may be any subset of the spec's items (e.g. only the target
    items of a generated data set) but is always in spec order.
    """

    spec: SurveySpec
    respondents: tuple[Respondent, ...]
    items: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.respondents:
            raise ResponseDataError("a response matrix needs at least one respondent")
        items = tuple(self.items) or self.spec.item_ids
        order = {item_id: k for k, item_id in enumerate(self.spec.item_ids)}
        unknown = [i for i in items if i not in order]
        if unknown:
            raise ResponseDataError(f"items not declared in the spec: {unknown}")
        object.__setattr__(self, "items", tuple(sorted(items, key=order.__getitem__)))
        dup = _first_duplicate(r.id for r in self.respondents)
        if dup is not None:
            raise ResponseDataError(f"duplicate respondent id {dup!r}")
        scale = self.spec.scale
        for row, resp in enumerate(self.respondents, start=1):
            for item_id in self.items:
                if item_id not in resp.answers:
                    raise ResponseDataError("missing answer", row=row, column=item_id)
                value = resp.answers[item_id]
                if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                    raise ResponseDataError(f"non-integer answer {value!r}", row=row, column=item_id)
                if not scale.contains(value):
                    raise ResponseDataError(
                        f"answer {value} outside [{scale.min}, {scale.max}]", row=row, column=item_id
                    )

    def __len__(self):
        return len(self.respondents)

    @property
    def ids(self) -> tuple[str, ...]:
        return tuple(r.id for r in self.respondents)

    def values(self, items: Sequence[str] | None = None) -> np.ndarray:
        """Integer array of shape (n_respondents, n_items)."""
        items = self.items if items is None else tuple(items)
        missing = [i for i in items if i not in self.items]
        if missing:
            raise KeyError(f"items not in this matrix: {missing}")
        return np.array([[r.answers[i] for i in items] for r in self.respondents], dtype=int)

    def column(self, item_id: str) -> np.ndarray:
        return self.values([item_id])[:, 0]

    def restrict(self, items: Sequence[str]) -> "ResponseMatrix":
        return ResponseMatrix(self.spec, self.respondents, tuple(items))

    def subset(self, ids: Iterable[str]) -> "ResponseMatrix":
        """Rows whose id is in ``ids``, keeping this matrix's row order."""
        wanted = set(ids)
        return ResponseMatrix(self.spec, tuple(r for r in self.respondents if r.id in wanted), self.items)

    def respondent(self, respondent_id: str) -> Respondent:
        for r in self.respondents:
            if r.id == respondent_id:
                return r
        raise KeyError(respondent_id)


def load_responses(source, spec: SurveySpec, items: Sequence[str] | None = None) -> ResponseMatrix:
    """Read and validate a response CSV against ``spec``.

    ``items`` restricts which item columns are required (default: all spec
    items). Empty demographic cells are kept as unknown values.
    """
    text = source.read_text("utf-8") if isinstance(source, Path) else (
        Path(source).read_text("utf-8") if "\n" not in source and Path(source).exists() else source
    )
    reader = csv.reader(io.StringIO(text.lstrip("﻿")))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ResponseDataError("response data is empty") from None
    if not header or header[0] != "respondent_id":
        raise ResponseDataError("first column must be 'respondent_id'", column=header[0] if header else None)
    required = spec.item_ids if items is None else tuple(items)
    known = set(spec.demographic_names) | set(spec.item_ids)
    for col in header[1:]:
        if col not in known:
            raise ResponseDataError("unknown column", column=col)
    dup = _first_duplicate(header)
    if dup is not None:
        raise ResponseDataError("duplicate column", column=dup)
    for col in list(spec.demographic_names) + list(required):
        if col not in header:
            raise ResponseDataError("missing column", column=col)

    kinds = {d.name: d.kind for d in spec.demographics}
    present_items = [c for c in header[1:] if c in spec.item_ids]
    respondents = []
    for row_no, row in enumerate(reader, start=1):
        if not any(cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise ResponseDataError(f"expected {len(header)} cells, found {len(row)}", row=row_no)
        cells = dict(zip(header, (c.strip() for c in row)))
        demographics = {name: _parse_demographic(cells[name], kinds[name], row_no, name)
                        for name in spec.demographic_names}
        answers = {}
        for item_id in present_items:
            raw = cells[item_id]
            try:
                value = int(raw)
            except ValueError:
                raise ResponseDataError(f"non-integer answer {raw!r}", row=row_no, column=item_id) from None
            if not spec.scale.contains(value):
                raise ResponseDataError(
                    f"answer {value} outside [{spec.scale.min}, {spec.scale.max}]", row=row_no, column=item_id
                )
            answers[item_id] = value
        respondents.append(Respondent(cells["respondent_id"], demographics, answers))
    if not respondents:
        raise ResponseDataError("response data has no rows")
    return ResponseMatrix(spec, tuple(respondents), tuple(required))


def _parse_demographic(raw: str, kind: str, row: int, name: str):
    if raw == "":
        return None
    if kind == "categorical":
        return raw
    try:
        value = float(raw)
    except ValueError:
        raise ResponseDataError(f"non-numeric value {raw!r}", row=row, column=name) from None
    if not math.isfinite(value):
        raise ResponseDataError(f"non-finite value {raw!r}", row=row, column=name)
    return int(value) if value.is_integer() else value


def write_responses(matrix: ResponseMatrix, path=None) -> str:
    """Serialize ``matrix`` to CSV text; also written to ``path`` if given."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    demo = matrix.spec.demographic_names
    writer.writerow(["respondent_id", *demo, *matrix.items])
    for r in matrix.respondents:
        writer.writerow(
            [r.id, *("" if r.demographics.get(d) is None else r.demographics[d] for d in demo),
             *(int(r.answers[i]) for i in matrix.items)]
        )
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
