import json

import numpy as np
import pytest

from anticipate.exceptions import DuplicateLabel, EmptyLabelSet, InputError, MalformedLine, UnknownLabel
from anticipate.vocab import (
    PAD,
    PAD_LABEL,
    ActionPair,
    SyntheticTaskConfig,
    Vocabulary,
    fit_length,
    generate_synthetic_task,
    load_vocabulary,
    parse_annotations,
    write_annotations,
    write_vocabulary,
)


def write_csv(path, rows):
    path.write_text("kind,label\n" + "".join(f"{k},{l}\n" for k, l in rows), encoding="utf-8")
    return path


def test_load_vocabulary_small(tmp_path):
    vocab = load_vocabulary(write_csv(tmp_path / "v.csv", [("verb", "take"), ("verb", "put"), ("noun", "cup")]))
    assert (vocab.n_verbs, vocab.n_nouns) == (2, 1)
    assert vocab.verbs == ("take", "put")


def test_load_vocabulary_duplicate(tmp_path):
    path = write_csv(tmp_path / "v.csv", [("verb", "take"), ("verb", "take"), ("noun", "cup")])
    with pytest.raises(DuplicateLabel):
        load_vocabulary(path)


def test_load_vocabulary_ego4d_v1_size(tmp_path):
    rows = [("verb", f"v{i}") for i in range(115)] + [("noun", f"n{i}") for i in range(478)]
    vocab = load_vocabulary(write_csv(tmp_path / "v.csv", rows))
    assert (vocab.n_verbs, vocab.n_nouns) == (115, 478)


def test_load_vocabulary_errors(tmp_path):
    with pytest.raises(InputError):
        load_vocabulary(tmp_path / "missing.csv")
    with pytest.raises(EmptyLabelSet):
        load_vocabulary(write_csv(tmp_path / "v.csv", [("verb", "take")]))
    with pytest.raises(MalformedLine):
        load_vocabulary(write_csv(tmp_path / "w.csv", [("adverb", "quickly")]))


def test_vocabulary_csv_round_trip(tmp_path, kitchen_vocab):
    write_vocabulary(kitchen_vocab, tmp_path / "v.csv")
    assert load_vocabulary(tmp_path / "v.csv") == kitchen_vocab


def write_jsonl(path, objs):
    path.write_text("".join(json.dumps(o) + "\n" for o in objs), encoding="utf-8")
    return path


def test_parse_annotations_single(tmp_path, kitchen_vocab):
    path = write_jsonl(tmp_path / "a.jsonl", [
        {"clip_id": "c1", "observed": [["take", "cup"]], "future": [["put", "cup"]]},
    ])
    (rec,) = parse_annotations(path, kitchen_vocab)
    assert len(rec.observed) == 1
    assert rec.future == (ActionPair(1, 0),)
    assert rec.intention_gt is None


def test_parse_annotations_unknown_label_reports_line(tmp_path, kitchen_vocab):
    path = write_jsonl(tmp_path / "a.jsonl", [
        {"clip_id": "c1", "observed": [["fly", "cup"]], "future": []},
    ])
    with pytest.raises(UnknownLabel) as err:
        parse_annotations(path, kitchen_vocab)
    assert err.value.line == 1
    assert err.value.label == "fly"


def test_parse_annotations_keeps_order(tmp_path, kitchen_vocab):
    objs = [{"clip_id": f"c{i}", "observed": [["take", "cup"]], "future": []} for i in range(3)]
    recs = parse_annotations(write_jsonl(tmp_path / "a.jsonl", objs), kitchen_vocab)
    assert [r.clip_id for r in recs] == ["c0", "c1", "c2"]


def test_parse_annotations_malformed(tmp_path, kitchen_vocab):
    path = tmp_path / "a.jsonl"
    path.write_text('{"clip_id": "ok", "observed": [], "future": []}\n{not json\n', encoding="utf-8")
    with pytest.raises(MalformedLine) as err:
        parse_annotations(path, kitchen_vocab)
    assert err.value.line == 2


def test_parse_annotations_strict_lengths(tmp_path, kitchen_vocab):
    path = write_jsonl(tmp_path / "a.jsonl", [
        {"clip_id": "c1", "observed": [["take", "cup"]], "future": [["put", "cup"]]},
    ])
    assert parse_annotations(path, kitchen_vocab, K=1, Z=1)
    with pytest.raises(MalformedLine):
        parse_annotations(path, kitchen_vocab, K=2)


def test_pad_only_as_suffix(tmp_path, kitchen_vocab):
    ok = write_jsonl(tmp_path / "ok.jsonl", [
        {"clip_id": "c", "observed": [], "future": [["put", "cup"], PAD_LABEL]},
    ])
    assert parse_annotations(ok, kitchen_vocab)[0].future == (ActionPair(1, 0), PAD)
    bad = write_jsonl(tmp_path / "bad.jsonl", [
        {"clip_id": "c", "observed": [], "future": [PAD_LABEL, ["put", "cup"]]},
    ])
    with pytest.raises(MalformedLine):
        parse_annotations(bad, kitchen_vocab)


def test_annotation_round_trip(tmp_path, kitchen_vocab, kitchen_records):
    write_annotations(kitchen_records, kitchen_vocab, tmp_path / "a.jsonl")
    assert parse_annotations(tmp_path / "a.jsonl", kitchen_vocab) == kitchen_records


def test_synthetic_round_trip(tmp_path):
    vocab, recs, _ = generate_synthetic_task(SyntheticTaskConfig(n_records=30, seed=3))
    write_annotations(recs, vocab, tmp_path / "a.jsonl")
    assert parse_annotations(tmp_path / "a.jsonl", vocab, K=8, Z=20) == recs


def test_fit_length():
    seq = (ActionPair(0, 0), ActionPair(1, 1))
    assert fit_length(seq, 1) == (ActionPair(0, 0),)
    assert fit_length(seq, 4) == seq + (PAD, PAD)


def test_synthetic_is_deterministic(tmp_path):
    cfg = SyntheticTaskConfig(seed=11, n_records=20)
    paths = []
    for i in range(2):
        vocab, recs, _ = generate_synthetic_task(cfg)
        paths.append(tmp_path / f"a{i}.jsonl")
        write_annotations(recs, vocab, paths[-1])
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_synthetic_lengths():
    vocab, recs, table = generate_synthetic_task(
        SyntheticTaskConfig(verb_count=5, noun_count=5, K=8, Z=20, n_records=10)
    )
    assert all(len(r.observed) == 8 and len(r.future) == 20 for r in recs)
    assert table.shape == (25, 25)
    np.testing.assert_allclose(table.sum(axis=1), 1.0, atol=1e-12)
    for r in recs:
        assert r.intention_gt.startswith("prepare ")
        assert r.intention_gt.split()[1] in vocab.nouns


def test_synthetic_low_concentration_is_deterministic_chain():
    cfg = SyntheticTaskConfig(verb_count=3, noun_count=3, K=2, Z=6,
                              transition_concentration=1e-4, n_records=200, seed=5)
    vocab, recs, table = generate_synthetic_task(cfg)
    assert np.all(table.max(axis=1) > 0.999)
    # the future is a function of the last observed pair
    seen = {}
    for r in recs:
        key = r.observed[-1]
        assert seen.setdefault(key, r.future) == r.future


def test_synthetic_transition_frequencies_converge():
    cfg = SyntheticTaskConfig(verb_count=3, noun_count=3, K=1, Z=49,
                              transition_concentration=1.0, n_records=205, seed=0)
    vocab, recs, table = generate_synthetic_task(cfg)
    counts = np.zeros_like(table)
    n = 0
    for r in recs:
        ids = [vocab.pair_id(p) for p in r.observed + r.future]
        for i, j in zip(ids, ids[1:]):
            counts[i, j] += 1
            n += 1
    assert n >= 10_000
    empirical = counts / counts.sum(axis=1, keepdims=True)
    assert np.max(np.abs(empirical - table)) < 0.05


def test_synthetic_config_validation():
    with pytest.raises(InputError):
        SyntheticTaskConfig(verb_count=1)
    with pytest.raises(InputError):
        SyntheticTaskConfig(Z=0)
    with pytest.raises(InputError):
        SyntheticTaskConfig.from_dict({"verbs": 3})


def test_vocabulary_rejects_empty():
    with pytest.raises(EmptyLabelSet):
        Vocabulary([], ["cup"])
