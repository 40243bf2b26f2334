import logging

import pytest
from hypothesis import given
from hypothesis import strategies as st

from scenescore.annotations import (
    AnnotationError,
    AttributeSpec,
    CountSpec,
    OARelationSpec,
    OORelationSpec,
    check_quantifier,
    load_dataset,
    load_entry,
    normalize_room_token,
    parse_spec_line,
    serialize_spec,
)


class TestParse:
    def test_count(self):
        spec = parse_spec_line("count", "ge,2,bed")
        assert spec == CountSpec("ge", 2, "bed")

    def test_attribute(self):
        spec = parse_spec_line("attribute", "eq,1,bed,king-size")
        assert spec == AttributeSpec("eq", 1, "bed", "king-size")

    def test_oo(self):
        spec = parse_spec_line("oo", "eq,1,left,0,bed,nightstand")
        assert spec.anchor_category == "bed"
        assert spec.expanded_categories() == ["bed", "nightstand"]
        assert spec.relation_text == "left"

    def test_oo_anchor_not_first(self):
        spec = parse_spec_line("oo", "eq,1,surround,4,chair,chair,chair,chair,table")
        assert spec.anchor_category == "table"
        assert spec.expanded_categories() == ["table", "chair", "chair", "chair", "chair"]
        assert spec.other_category_counts() == [("chair", 4)]

    def test_oo_collapsed_counts(self):
        # collapsed "cat:N" tokens normalize to per-instance repetition
        spec = parse_spec_line("oo", "eq,1,surround,1,chair:3,table,sofa")
        assert spec.anchor_category == "table"
        assert spec.other_category_counts() == [("chair", 3), ("sofa", 1)]

    def test_oo_unspecified_anchor(self):
        spec = parse_spec_line("oo", "eq,1,next_to,-1,lamp,chair")
        assert spec.anchor_index == 0
        assert spec.anchor_category == "lamp"

    def test_oa(self):
        spec = parse_spec_line("oa", "gt,2,against,bookshelf,wall")
        assert spec == OARelationSpec("gt", 2, "against", "bookshelf", "wall")

    def test_unknown_quantifier(self):
        with pytest.raises(AnnotationError, match="unknown quantifier"):
            parse_spec_line("count", "zz,2,bed")

    def test_negative_quantity(self):
        with pytest.raises(AnnotationError, match="negative quantity"):
            parse_spec_line("count", "eq,-1,bed")

    def test_wrong_arity(self):
        with pytest.raises(AnnotationError, match="needs 3 fields"):
            parse_spec_line("count", "eq,1,bed,extra")
        with pytest.raises(AnnotationError, match="needs 5 fields"):
            parse_spec_line("oa", "eq,1,against,wall")

    def test_anchor_out_of_range(self):
        with pytest.raises(AnnotationError, match="out of range"):
            parse_spec_line("oo", "eq,1,left,7,bed,nightstand")

    def test_padded_category_rejected(self):
        with pytest.raises(AnnotationError, match="bad category"):
            parse_spec_line("count", "eq,1, bed")

    def test_underscores_preserved(self):
        spec = parse_spec_line("count", "eq,1,office_chair")
        assert spec.category == "office_chair"


LINES = [
    ("count", "ge,2,bed"),
    ("count", "eq,0,floor_lamp"),
    ("attribute", "eq,1,bed,king-size"),
    ("attribute", "le,3,chair,wooden"),
    ("oo", "eq,1,left,0,bed,nightstand"),
    ("oo", "eq,1,surround,4,chair,chair,chair,chair,table"),
    ("oo", "ge,2,near,0,coffee_table,bean_bag"),
    ("oa", "gt,2,against,bookshelf,wall"),
    ("oa", "eq,1,middle,rug,bedroom"),
]


class TestRoundTrip:
    @pytest.mark.parametrize("kind,line", LINES)
    def test_parse_serialize_identity(self, kind, line):
        assert serialize_spec(parse_spec_line(kind, line)) == line


class TestQuantifier:
    def test_examples(self):
        assert check_quantifier("ge", 2, 3)
        assert not check_quantifier("eq", 1, 0)
        assert not check_quantifier("lt", 2, 2)

    def test_exhaustive_against_integer_comparison(self):
        import operator

        ops = {"eq": operator.eq, "lt": operator.lt, "gt": operator.gt,
               "le": operator.le, "ge": operator.ge}
        for q, op in ops.items():
            for quantity in range(21):
                for actual in range(21):
                    assert check_quantifier(q, quantity, actual) == op(actual, quantity)

    @given(
        q=st.sampled_from(["eq", "lt", "gt", "le", "ge"]),
        quantity=st.integers(0, 1000),
        actual=st.integers(0, 1000),
    )
    def test_total(self, q, quantity, actual):
        assert isinstance(check_quantifier(q, quantity, actual), bool)


def write_entry(root, difficulty, entry_id, description="A room.", counts=(),
                attributes=(), oo=(), oa=()):
    d = root / difficulty / entry_id
    d.mkdir(parents=True)
    (d / "description.txt").write_text(description)
    (d / "counts.csv").write_text("".join(f"{l}\n" for l in counts))
    (d / "attributes.csv").write_text("".join(f"{l}\n" for l in attributes))
    (d / "oo_relations.csv").write_text("".join(f"{l}\n" for l in oo))
    (d / "oa_relations.csv").write_text("".join(f"{l}\n" for l in oa))
    return d


class TestDataset:
    def test_load_grouped_by_difficulty(self, tmp_path):
        for difficulty in ("easy", "medium", "hard"):
            for i in range(2):
                write_entry(tmp_path, difficulty, f"{difficulty}_{i}", counts=["eq,1,bed"])
        entries = load_dataset(tmp_path)
        assert len(entries) == 6
        by_diff = {}
        for e in entries:
            by_diff.setdefault(e.difficulty, []).append(e)
        assert {k: len(v) for k, v in by_diff.items()} == {"easy": 2, "medium": 2, "hard": 2}

    def test_parse_error_carries_entry_and_line(self, tmp_path):
        write_entry(tmp_path, "easy", "broken", counts=["eq,1,bed", "zz,1,desk"])
        with pytest.raises(AnnotationError, match=r"entry 'broken' counts.csv:2"):
            load_dataset(tmp_path)

    def test_cross_reference_warning_entry_retained(self, tmp_path, caplog):
        d = write_entry(
            tmp_path,
            "easy",
            "xref",
            counts=["eq,1,bed"],
            attributes=["eq,1,sofa,red"],  # sofa not in counts
        )
        with caplog.at_level(logging.WARNING):
            entry = load_entry(d, "easy")
        assert entry.attributes  # retained
        assert any("sofa" in r.message for r in caplog.records)

    def test_missing_spec_file(self, tmp_path):
        d = write_entry(tmp_path, "easy", "incomplete")
        (d / "oa_relations.csv").unlink()
        with pytest.raises(AnnotationError, match="missing oa_relations.csv"):
            load_entry(d, "easy")

    def test_dataset_round_trip_byte_equal(self, tmp_path):
        write_entry(
            tmp_path, "medium", "rt",
            counts=["eq,1,bed", "ge,2,chair"],
            attributes=["eq,1,bed,blue"],
            oo=["eq,1,left,0,bed,chair", "eq,1,surround,2,chair,chair,table"],
            oa=["eq,1,against,bed,wall"],
        )
        entries = load_dataset(tmp_path)
        (entry,) = entries
        for kind, specs in (
            ("count", entry.counts),
            ("attribute", entry.attributes),
            ("oo", entry.oo_relations),
            ("oa", entry.oa_relations),
        ):
            src = (tmp_path / "medium" / "rt" / {
                "count": "counts.csv", "attribute": "attributes.csv",
                "oo": "oo_relations.csv", "oa": "oa_relations.csv"}[kind]).read_text()
            lines = [l for l in src.splitlines() if l]
            assert [serialize_spec(s) for s in specs] == lines


class TestRoomToken:
    def test_normalization(self):
        assert normalize_room_token("Living_Room") == "living room"
        assert normalize_room_token("living room") == "living room"
