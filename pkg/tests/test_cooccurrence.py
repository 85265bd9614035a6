import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from anticipate.cooccurrence import (
    ConditionalTables,
    CooccurrenceMatrix,
    SemanticCorrector,
    build_cooccurrence,
    corrected_joint,
    map_decode,
    normalize_conditionals,
    read_cooccurrence_csv,
    write_cooccurrence_csv,
)
from anticipate.exceptions import DimensionMismatch
from anticipate.vocab import (
    PAD,
    ActionPair,
    AnnotationRecord,
    SyntheticTaskConfig,
    Vocabulary,
    generate_synthetic_task,
)
from oracles import brute_argmax, tally_pairs

VOCAB = Vocabulary(["v0", "v1", "v2"], ["n0", "n1"])


def test_single_pair():
    rec = AnnotationRecord("r", [ActionPair(0, 0)], [])
    counts = build_cooccurrence([rec], VOCAB).counts
    expected = np.zeros((3, 2), dtype=int)
    expected[0, 0] = 1
    np.testing.assert_array_equal(counts, expected)


def test_counts_accumulate_across_records():
    recs = [AnnotationRecord(str(i), [ActionPair(1, 0)], []) for i in range(2)]
    assert build_cooccurrence(recs, VOCAB).counts[1, 0] == 2


def test_future_is_opt_in_and_pads_skipped():
    rec = AnnotationRecord("r", [ActionPair(0, 1), PAD], [ActionPair(2, 1)])
    assert build_cooccurrence([rec], VOCAB).counts.sum() == 1
    both = build_cooccurrence([rec], VOCAB, include_future=True).counts
    assert both[2, 1] == 1 and both.sum() == 2


def test_out_of_range_pair_rejected():
    rec = AnnotationRecord("r", [ActionPair(5, 0)], [])
    with pytest.raises(DimensionMismatch):
        build_cooccurrence([rec], VOCAB)


@pytest.mark.parametrize("include_future", [False, True])
def test_synthetic_counts_match_tally(include_future):
    vocab, recs, _ = generate_synthetic_task(SyntheticTaskConfig(n_records=50, seed=2))
    counts = build_cooccurrence(recs, vocab, include_future).counts
    tally = tally_pairs(recs, include_future)
    for v in range(vocab.n_verbs):
        for n in range(vocab.n_nouns):
            assert counts[v, n] == tally.get((v, n), 0)


def test_normalize_single_cell():
    counts = np.zeros((2, 3), dtype=int)
    counts[0, 0] = 5
    t = normalize_conditionals(CooccurrenceMatrix(counts))
    assert t.p_n_given_v[0, 0] == 1.0
    assert t.p_v_given_n[0, 0] == 1.0


def test_normalize_row():
    t = normalize_conditionals(CooccurrenceMatrix([[3, 1]]))
    np.testing.assert_allclose(t.p_n_given_v[0], [0.75, 0.25], atol=1e-15)


def test_normalize_zero_row_stays_zero():
    t = normalize_conditionals(CooccurrenceMatrix([[0, 0], [2, 0]]))
    assert not np.any(np.isnan(t.p_n_given_v))
    np.testing.assert_array_equal(t.p_n_given_v[0], [0, 0])
    np.testing.assert_array_equal(t.p_v_given_n[:, 1], [0, 0])


@settings(max_examples=200, deadline=None)
@given(arrays(np.int64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.integers(0, 10**6)))
def test_normalized_sums(counts):
    t = normalize_conditionals(CooccurrenceMatrix(counts))
    rows = t.p_n_given_v.sum(axis=1)
    cols = t.p_v_given_n.sum(axis=0)
    for r, src in zip(rows, counts.sum(axis=1)):
        assert abs(r - (1.0 if src > 0 else 0.0)) <= 1e-9
    for c, src in zip(cols, counts.sum(axis=0)):
        assert abs(c - (1.0 if src > 0 else 0.0)) <= 1e-9
    assert np.all((t.p_n_given_v >= 0) & (t.p_n_given_v <= 1))


def test_corrected_joint_identity_tables():
    eye = np.eye(2)
    scores = corrected_joint([0.5, 0.5], [0.5, 0.5], ConditionalTables(eye, eye))
    # 0.5 * 0.5 * (1 + 1) / 2 on the diagonal
    np.testing.assert_allclose(scores, [[0.25, 0.0], [0.0, 0.25]], atol=1e-15)


def test_corrected_joint_zero_tables():
    z = np.zeros((2, 3))
    assert not corrected_joint([0.3, 0.7], [0.2, 0.3, 0.5], ConditionalTables(z, z)).any()


def test_corrected_joint_gating():
    rng = np.random.default_rng(0)
    t = normalize_conditionals(CooccurrenceMatrix(rng.integers(0, 5, (2, 2))))
    scores = corrected_joint([1, 0], [1, 0], t)
    assert scores[0, 1] == scores[1, 0] == scores[1, 1] == 0


def test_corrected_joint_dimension_mismatch():
    t = normalize_conditionals(CooccurrenceMatrix(np.ones((2, 2), dtype=int)))
    with pytest.raises(DimensionMismatch):
        corrected_joint([0.5, 0.5, 0.0], [0.5, 0.5], t)


def test_map_decode_unique_max():
    grid = np.zeros((2, 3))
    grid[1, 2] = 1.0
    assert map_decode(grid) == ActionPair(1, 2)


def test_map_decode_zero_grid_tie_break():
    assert map_decode(np.zeros((4, 4))) == ActionPair(0, 0)


def test_map_decode_ties_lowest_verb_then_noun():
    grid = np.zeros((3, 3))
    grid[2, 0] = grid[1, 2] = grid[1, 1] = 0.5
    assert map_decode(grid) == ActionPair(1, 1)


def test_map_decode_matches_exhaustive_scan():
    rng = np.random.default_rng(1)
    for _ in range(200):
        grid = rng.random((6, 7))
        assert tuple(map_decode(grid)) == brute_argmax(grid.tolist())


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 2**32 - 1))
def test_argmax_invariant_to_verb_scaling(scale, seed):
    rng = np.random.default_rng(seed)
    t = normalize_conditionals(CooccurrenceMatrix(rng.integers(0, 4, (4, 5))))
    pv, pn = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(5))
    base = corrected_joint(pv, pn, t)
    scaled = corrected_joint(pv * scale, pn, t)
    # floating-point scaling can only reorder exact ties
    if np.sort(base.ravel())[-2] < base.max() * (1 - 1e-9):
        assert map_decode(scaled) == map_decode(base)


def test_zero_count_cells_score_zero():
    rng = np.random.default_rng(2)
    for _ in range(100):
        counts = rng.integers(0, 3, (4, 4)) * (rng.random((4, 4)) < 0.5)
        t = normalize_conditionals(CooccurrenceMatrix(counts))
        scores = corrected_joint(rng.random(4), rng.random(4), t)
        assert np.all(scores[counts == 0] == 0)


def test_csv_round_trip(tmp_path):
    counts = CooccurrenceMatrix([[1, 0], [0, 2], [3, 4]])
    write_cooccurrence_csv(counts, VOCAB, tmp_path / "c.csv")
    back, vocab = read_cooccurrence_csv(tmp_path / "c.csv")
    assert vocab == VOCAB
    np.testing.assert_array_equal(back.counts, counts.counts)
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "verb,n0,n1"


def test_semantic_corrector_estimator():
    recs = [AnnotationRecord("r", [ActionPair(0, 1), ActionPair(2, 0)], [])]
    est = SemanticCorrector().fit(recs, VOCAB)
    assert est.get_params() == {"include_future": False, "correct": True}
    # raw argmax would be (1, 0), which never co-occurs
    X = np.array([[0.2, 0.5, 0.3, 0.6, 0.4]])
    assert est.predict(X).tolist() == [[2, 0]]
    raw = SemanticCorrector(correct=False).fit(recs, VOCAB)
    assert raw.predict(X).tolist() == [[1, 0]]
    with pytest.raises(DimensionMismatch):
        est.predict(np.ones((1, 4)))
