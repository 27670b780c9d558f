import csv
import json

import pytest

from alqa.corpus import Document, QASample, WhitespaceTokenizer
from alqa.generator import GenInputLayout
from alqa.reader import ReaderTrainConfig
from alqa.reports import report_sample_stats, report_scores, write_overlap_csv


def _dump_rows(scores, iteration=1, strategy="sp"):
    return [{"candidate_id": f"c{i}", "strategy": strategy, "raw_score": s,
             "priority": -s, "iteration": iteration, "passes": 1, "flags": []}
            for i, s in enumerate(scores)]


def test_minmax_rescale_simple_dump():
    rows = report_scores([_dump_rows([0.0, 5.0, 10.0])])
    assert [r["rescaled_score"] for r in rows] == [0.0, 0.5, 1.0]
    assert [r["rank_fraction"] for r in rows] == [0.0, 0.5, 1.0]


def test_two_iterations_give_two_curves(tmp_path):
    dump = tmp_path / "scores.jsonl"
    rows = _dump_rows([1.0, 3.0], iteration=1) + _dump_rows([2.0, 4.0], iteration=2)
    dump.write_text("\n".join(json.dumps(r) for r in rows))
    out = report_scores([dump])
    iterations = {r["iteration"] for r in out}
    assert iterations == {1, 2}


def test_rescaled_curve_nondecreasing():
    import numpy as np

    scores = list(np.random.default_rng(0).normal(size=50))
    rows = report_scores([_dump_rows(scores)])
    values = [r["rescaled_score"] for r in rows]
    assert values == sorted(values)
    assert min(values) == 0.0 and max(values) == 1.0


def test_constant_scores_rescale_to_zeros_with_warning(caplog):
    with caplog.at_level("WARNING"):
        rows = report_scores([_dump_rows([2.5, 2.5, 2.5])])
    assert all(r["rescaled_score"] == 0.0 for r in rows)
    assert any("constant" in r.message for r in caplog.records)


def test_csv_output(tmp_path):
    out = tmp_path / "curves.csv"
    report_scores([_dump_rows([0.0, 1.0])], out_csv=out)
    with out.open() as fh:
        rows = list(csv.DictReader(fh))
    assert rows[0].keys() == {"iteration", "rank_fraction", "rescaled_score"}
    assert len(rows) == 2


def test_report_scores_requires_dumps():
    with pytest.raises(ValueError):
        report_scores([])


# ---------------------------------------------------------------------------
# Sample statistics
# ---------------------------------------------------------------------------

def _stats_world():
    layout = GenInputLayout(max_source_tokens=16, max_question_tokens=8,
                            max_total_tokens=32, chunk_stride=4,
                            max_answer_tokens=4)
    tok = WhitespaceTokenizer(specials=layout.specials)
    documents, samples = {}, []
    token_counts = [4, 6, 8]
    for i, n in enumerate(token_counts):
        text = " ".join(f"d{i}w{j}" for j in range(n))
        doc = Document.build(f"d{i}", text, "toy", tok)
        tok.encode(text)
        documents[doc.id] = doc
        start = text.index(f"d{i}w1")
        samples.append(QASample(
            id=f"s{i}", document_id=doc.id,
            question=" ".join(["q"] * (i + 2)) + " ?",
            answer_text=f"d{i}w1",
            answer_char_span=(start, start + len(f"d{i}w1")),
            provenance="oracle", domain="toy"))
    return layout, tok, documents, samples


def test_sample_stats_exact_means():
    layout, tok, documents, samples = _stats_world()
    report = report_sample_stats({"sp": samples}, documents,
                                 {"whitespace": tok}, layout=layout,
                                 reader_cfg=ReaderTrainConfig(
                                     max_input_tokens=16, stride=4, epochs=1))
    entry = report["per_strategy"]["sp"]
    assert entry["samples"] == 3
    assert entry["unique_contexts"] == 3
    assert entry["mean_context_tokens"]["whitespace"] == pytest.approx(6.0)
    # question lengths: 3, 4, 5 tokens including the "?"
    assert entry["mean_question_tokens"]["whitespace"] == pytest.approx(4.0)
    # one chunk per sample, two generator pairs per sample
    assert entry["instances"] == {"reader": 3, "generator": 6}


def test_overlap_matrix_diagonal_is_selection_size():
    layout, tok, documents, samples = _stats_world()
    report = report_sample_stats(
        {"sp": samples, "rt": samples, "random": samples[:1]},
        documents, {"whitespace": tok})
    assert report["overlap"]["sp"]["sp"] == 3
    assert report["overlap"]["rt"]["rt"] == 3
    assert report["overlap"]["random"]["random"] == 1
    assert report["overlap"]["sp"]["rt"] == 3  # identical selections
    assert report["overlap"]["sp"]["random"] == 1


def test_overlap_disjoint_selections_zero():
    layout, tok, documents, samples = _stats_world()
    report = report_sample_stats(
        {"a": samples[:1], "b": samples[1:]}, documents, {"ws": tok})
    assert report["overlap"]["a"]["b"] == 0
    assert report["overlap"]["b"]["a"] == 0


def test_overlap_csv_round_trip(tmp_path):
    layout, tok, documents, samples = _stats_world()
    report = report_sample_stats({"sp": samples, "rt": samples[:2]},
                                 documents, {"ws": tok})
    out = tmp_path / "overlap.csv"
    write_overlap_csv(report, out)
    with out.open() as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["strategy", "rt", "sp"]
    assert rows[1] == ["rt", "2", "2"]
    assert rows[2] == ["sp", "2", "3"]
