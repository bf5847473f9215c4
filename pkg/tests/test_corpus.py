import json

import pytest
from hypothesis import given, strategies as st

from oragent.corpus import (Corpus, CorpusError, ProblemInstance,
                            load_corpus, validate_corpus, write_corpus)


def write_lines(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_loads_records_in_file_order(tmp_path):
    path = write_lines(tmp_path / "three.jsonl", [
        json.dumps({"id": "a", "question": "q1", "answer": 1, "source": "s"}),
        json.dumps({"id": "b", "question": "q2", "answer": 2.5}),
        json.dumps({"id": "c", "question": "q3", "answer": None}),
    ])
    corpus = load_corpus(path)
    assert corpus.name == "three"
    assert len(corpus) == 3
    assert [p.id for p in corpus] == ["a", "b", "c"]
    assert corpus.problems[0].ground_truth == 1.0
    assert corpus.problems[0].source_tag == "s"
    assert corpus.problems[2].ground_truth is None
    assert corpus.problems[1].source_tag is None


def test_missing_id_synthesized_from_name_and_line(tmp_path):
    path = write_lines(tmp_path / "demo.jsonl", [
        json.dumps({"question": "q1", "answer": 1}),
        "",
        json.dumps({"question": "q3", "answer": 3}),
    ])
    corpus = load_corpus(path)
    # blank line 2 is skipped but line numbering is preserved
    assert [p.id for p in corpus] == ["demo-1", "demo-3"]


def test_answer_given_as_string_is_parsed(tmp_path):
    path = write_lines(tmp_path / "c.jsonl", [
        json.dumps({"id": "x", "question": "q", "answer": "36.5"}),
    ])
    assert load_corpus(path).problems[0].ground_truth == 36.5


@pytest.mark.parametrize("record, fragment", [
    ({"id": "x", "question": "q", "answer": True}, "boolean"),
    ({"id": "x", "question": "q", "answer": "not-a-number"}, "not a number"),
    ({"id": "x", "question": "q", "answer": "nan"}, "not finite"),
    ({"id": "x", "question": 7, "answer": 1}, "question"),
    ({"id": "", "question": "q", "answer": 1}, "id"),
    ({"id": "x", "question": "q", "answer": 1, "source": 9}, "source"),
])
def test_bad_field_types_are_rejected_with_line_number(tmp_path, record,
                                                       fragment):
    path = write_lines(tmp_path / "c.jsonl", [json.dumps(record)])
    with pytest.raises(CorpusError) as exc_info:
        load_corpus(path)
    assert fragment in str(exc_info.value)
    assert exc_info.value.line == 1


def test_malformed_json_reports_line(tmp_path):
    path = write_lines(tmp_path / "c.jsonl", [
        json.dumps({"id": "a", "question": "q", "answer": 1}),
        "{not json",
    ])
    with pytest.raises(CorpusError) as exc_info:
        load_corpus(path)
    assert exc_info.value.line == 2


def test_duplicate_ids_rejected(tmp_path):
    path = write_lines(tmp_path / "c.jsonl", [
        json.dumps({"id": "a", "question": "q", "answer": 1}),
        json.dumps({"id": "a", "question": "q2", "answer": 2}),
    ])
    with pytest.raises(CorpusError, match="duplicate id"):
        load_corpus(path)


def test_empty_and_missing_files_are_errors(tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("\n\n", encoding="utf-8")
    with pytest.raises(CorpusError, match="no records"):
        load_corpus(empty)
    with pytest.raises(CorpusError, match="no such corpus file"):
        load_corpus(tmp_path / "absent.jsonl")


def test_non_object_line_rejected(tmp_path):
    path = write_lines(tmp_path / "c.jsonl", ["[1, 2, 3]"])
    with pytest.raises(CorpusError, match="not a JSON object"):
        load_corpus(path)


problem_ids = st.text(
    st.characters(whitelist_categories=("L", "N"), whitelist_characters="-_"),
    min_size=1, max_size=12)
descriptions = st.text(min_size=1, max_size=200).filter(
    lambda s: s.strip() != "")
answers = st.one_of(
    st.none(),
    st.floats(allow_nan=False, allow_infinity=False,
              min_value=-1e12, max_value=1e12))


@given(st.lists(
    st.builds(ProblemInstance, id=problem_ids, description=descriptions,
              ground_truth=answers,
              source_tag=st.one_of(st.none(), st.text(max_size=10))),
    min_size=1, max_size=8,
    unique_by=lambda p: p.id))
def test_write_then_load_round_trips(tmp_path_factory, problems):
    corpus = Corpus(name="rt", problems=tuple(problems))
    path = tmp_path_factory.mktemp("corpus") / "rt.jsonl"
    write_corpus(corpus, path)
    assert load_corpus(path) == corpus


def test_validate_flags_empty_description_and_missing_truth():
    corpus = Corpus(name="v", problems=(
        ProblemInstance(id="ok", description="solve it", ground_truth=1.0),
        ProblemInstance(id="blank", description="   \n", ground_truth=2.0),
        ProblemInstance(id="nolabel", description="fine", ground_truth=None),
    ))
    findings = validate_corpus(corpus)
    by_id = {(f.problem_id, f.severity): f.message for f in findings}
    assert ("blank", "error") in by_id
    assert ("nolabel", "warning") in by_id
    assert not any(f.problem_id == "ok" for f in findings)


def test_validate_flags_non_finite_truth_built_in_memory():
    corpus = Corpus(name="v", problems=(
        ProblemInstance(id="inf", description="d",
                        ground_truth=float("inf")),
    ))
    findings = validate_corpus(corpus)
    assert any(f.severity == "error" and "finite" in f.message
               for f in findings)
