"""Annotation schema parsing and dataset loading.

Annotation lines are ASCII, comma-delimited, with underscores as word
separators.  Four field kinds exist:

    count:      quantifier,quantity,category
    attribute:  quantifier,quantity,category,attribute
    oo:         quantifier,quantity,relation,anchor_index,category,category,...
    oa:         quantifier,quantity,relation,category,arch_ref

A dataset root holds one directory per entry grouped by difficulty:

    root/{easy,medium,hard}/<entry_id>/
        description.txt
        counts.csv  attributes.csv  oo_relations.csv  oa_relations.csv

Parsing is pure and all types are immutable; everything round-trips
byte-exactly through ``serialize_spec``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

logger = logging.getLogger(__name__)

QUANTIFIERS = ("eq", "lt", "gt", "le", "ge")
DIFFICULTIES = ("easy", "medium", "hard")
ARCH_REFS = ("wall", "floor", "ceiling", "window", "door", "room")

SPEC_FILES = {
    "count": "counts.csv",
    "attribute": "attributes.csv",
    "oo": "oo_relations.csv",
    "oa": "oa_relations.csv",
}


class AnnotationError(ValueError):
    pass


def _check_quantifier_token(tok: str) -> str:
    if tok not in QUANTIFIERS:
        raise AnnotationError(f"unknown quantifier '{tok}'")
    return tok


def _check_quantity_token(tok: str) -> int:
    try:
        value = int(tok)
    except ValueError as exc:
        raise AnnotationError(f"quantity is not an integer: '{tok}'") from exc
    if value < 0:
        raise AnnotationError(f"negative quantity: {value}")
    return value


def _check_category_token(tok: str) -> str:
    if not tok or tok != tok.strip():
        raise AnnotationError(f"bad category token: '{tok}'")
    return tok


@dataclass(frozen=True)
class CountSpec:
    quantifier: str
    quantity: int
    category: str


@dataclass(frozen=True)
class AttributeSpec:
    quantifier: str
    quantity: int
    category: str
    attribute: str


@dataclass(frozen=True)
class OORelationSpec:
    quantifier: str
    quantity: int
    relation_text: str
    anchor_index: int
    categories: tuple  # raw tokens as written; may repeat or use "cat:N"

    @property
    def anchor_category(self) -> str:
        return _expand_token(self.categories[self.anchor_index])[0]

    def expanded_categories(self) -> list[str]:
        """Category per participating instance, anchor first."""
        out = []
        for i, tok in enumerate(self.categories):
            if i == self.anchor_index:
                continue
            out.extend(_expand_token(tok))
        return [self.anchor_category] + out

    def other_category_counts(self) -> list[tuple[str, int]]:
        """Non-anchor categories with instance counts, in first-seen order."""
        counts: dict[str, int] = {}
        for cat in self.expanded_categories()[1:]:
            counts[cat] = counts.get(cat, 0) + 1
        return list(counts.items())


@dataclass(frozen=True)
class OARelationSpec:
    quantifier: str
    quantity: int
    relation_text: str
    category: str
    arch_ref: str


@dataclass(frozen=True)
class DatasetEntry:
    id: str
    difficulty: str
    description: str
    counts: tuple
    attributes: tuple
    oo_relations: tuple
    oa_relations: tuple

    def count_categories(self) -> list[str]:
        return [c.category for c in self.counts]


def _expand_token(tok: str) -> list[str]:
    """Expand a category token: 'chair' -> ['chair'], 'chair:3' -> 3 chairs."""
    if ":" in tok:
        name, _, count = tok.partition(":")
        n = _check_quantity_token(count)
        if n < 1:
            raise AnnotationError(f"category repeat count must be >= 1: '{tok}'")
        return [_check_category_token(name)] * n
    return [_check_category_token(tok)]


def parse_spec_line(field_kind: str, line: str):
    """Parse one comma-delimited annotation line into its spec type."""
    if not line:
        raise AnnotationError("empty annotation line")
    tokens = line.split(",")
    if field_kind == "count":
        if len(tokens) != 3:
            raise AnnotationError(f"count line needs 3 fields, got {len(tokens)}: '{line}'")
        return CountSpec(
            _check_quantifier_token(tokens[0]),
            _check_quantity_token(tokens[1]),
            _check_category_token(tokens[2]),
        )
    if field_kind == "attribute":
        if len(tokens) != 4:
            raise AnnotationError(f"attribute line needs 4 fields, got {len(tokens)}: '{line}'")
        return AttributeSpec(
            _check_quantifier_token(tokens[0]),
            _check_quantity_token(tokens[1]),
            _check_category_token(tokens[2]),
            _check_category_token(tokens[3]),
        )
    if field_kind == "oo":
        if len(tokens) < 6:
            raise AnnotationError(f"oo line needs >= 6 fields, got {len(tokens)}: '{line}'")
        quantifier = _check_quantifier_token(tokens[0])
        quantity = _check_quantity_token(tokens[1])
        relation = _check_category_token(tokens[2])
        try:
            anchor_index = int(tokens[3])
        except ValueError as exc:
            raise AnnotationError(f"bad anchor index '{tokens[3]}'") from exc
        categories = tuple(tokens[4:])
        if anchor_index == -1:
            anchor_index = 0  # unspecified anchor: first category is the anchor
        if not 0 <= anchor_index < len(categories):
            raise AnnotationError(
                f"anchor index {anchor_index} out of range for {len(categories)} categories"
            )
        spec = OORelationSpec(quantifier, quantity, relation, anchor_index, categories)
        if len(spec.expanded_categories()) < 2:
            raise AnnotationError(f"oo relation needs >= 2 participants: '{line}'")
        return spec
    if field_kind == "oa":
        if len(tokens) != 5:
            raise AnnotationError(f"oa line needs 5 fields, got {len(tokens)}: '{line}'")
        return OARelationSpec(
            _check_quantifier_token(tokens[0]),
            _check_quantity_token(tokens[1]),
            _check_category_token(tokens[2]),
            _check_category_token(tokens[3]),
            _check_category_token(tokens[4]),
        )
    raise AnnotationError(f"unknown field kind '{field_kind}'")


def serialize_spec(spec) -> str:
    """Inverse of parse_spec_line; byte-exact for any parsed line."""
    if isinstance(spec, CountSpec):
        return f"{spec.quantifier},{spec.quantity},{spec.category}"
    if isinstance(spec, AttributeSpec):
        return f"{spec.quantifier},{spec.quantity},{spec.category},{spec.attribute}"
    if isinstance(spec, OORelationSpec):
        cats = ",".join(spec.categories)
        return f"{spec.quantifier},{spec.quantity},{spec.relation_text},{spec.anchor_index},{cats}"
    if isinstance(spec, OARelationSpec):
        return (
            f"{spec.quantifier},{spec.quantity},{spec.relation_text},"
            f"{spec.category},{spec.arch_ref}"
        )
    raise TypeError(f"not a spec: {type(spec)!r}")


def check_quantifier(quantifier: str, quantity: int, actual: int) -> bool:
    """True when `actual` satisfies `quantifier quantity` (e.g. ge 2)."""
    if quantifier == "eq":
        return actual == quantity
    if quantifier == "lt":
        return actual < quantity
    if quantifier == "gt":
        return actual > quantity
    if quantifier == "le":
        return actual <= quantity
    if quantifier == "ge":
        return actual >= quantity
    raise AnnotationError(f"unknown quantifier '{quantifier}'")


def normalize_room_token(token: str) -> str:
    """Case/underscore-insensitive form for room-type matching."""
    return token.strip().lower().replace("_", " ")


# ---------------------------------------------------------------------------
# Dataset loading
# ---------------------------------------------------------------------------


def _read_spec_file(path: Path, kind: str, entry_id: str):
    specs = []
    if not path.exists():
        raise AnnotationError(f"entry '{entry_id}': missing {path.name}")
    for lineno, raw in enumerate(path.read_text(encoding="ascii").splitlines(), start=1):
        line = raw.strip("\r")
        if not line:
            continue
        try:
            specs.append(parse_spec_line(kind, line))
        except AnnotationError as exc:
            raise AnnotationError(f"entry '{entry_id}' {path.name}:{lineno}: {exc}") from exc
    return tuple(specs)


def load_entry(entry_dir: Path, difficulty: str) -> DatasetEntry:
    entry_dir = Path(entry_dir)
    entry_id = entry_dir.name
    desc_path = entry_dir / "description.txt"
    if not desc_path.exists():
        raise AnnotationError(f"entry '{entry_id}': missing description.txt")
    entry = DatasetEntry(
        id=entry_id,
        difficulty=difficulty,
        description=desc_path.read_text(encoding="utf-8").strip(),
        counts=_read_spec_file(entry_dir / SPEC_FILES["count"], "count", entry_id),
        attributes=_read_spec_file(entry_dir / SPEC_FILES["attribute"], "attribute", entry_id),
        oo_relations=_read_spec_file(entry_dir / SPEC_FILES["oo"], "oo", entry_id),
        oa_relations=_read_spec_file(entry_dir / SPEC_FILES["oa"], "oa", entry_id),
    )
    _warn_cross_references(entry)
    return entry


def _warn_cross_references(entry: DatasetEntry) -> None:
    """Categories in attribute/relation specs must appear in some count spec.

    Violations are warnings, not errors: evaluation proceeds on imperfect
    annotations.
    """
    known = set(entry.count_categories())
    missing = []
    for spec in entry.attributes:
        if spec.category not in known:
            missing.append(spec.category)
    for spec in entry.oo_relations:
        missing.extend(c for c in spec.expanded_categories() if c not in known)
    for spec in entry.oa_relations:
        if spec.category not in known:
            missing.append(spec.category)
    for cat in dict.fromkeys(missing):
        logger.warning(
            "entry '%s': category '%s' used in a spec but absent from counts",
            entry.id,
            cat,
        )


def load_dataset(root) -> list[DatasetEntry]:
    """Load every entry under root/{easy,medium,hard}, sorted by (difficulty, id)."""
    root = Path(root)
    if not root.exists():
        raise FileNotFoundError(f"dataset root not found: {root}")
    entries = []
    for difficulty in DIFFICULTIES:
        group = root / difficulty
        if not group.is_dir():
            continue
        for entry_dir in sorted(p for p in group.iterdir() if p.is_dir()):
            entries.append(load_entry(entry_dir, difficulty))
    return entries
