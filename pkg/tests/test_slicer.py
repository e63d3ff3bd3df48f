"""Hypothesis scoring, threshold slicing and error-gap flagging."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ladder.corpus import EmbeddingMatrix, SampleRecord, SliceDataset, TextCorpus
from ladder.errors import (
    ConfigError,
    DimensionMismatch,
    EmbedderUnavailable,
    EmptySentenceSet,
)
from ladder.hypothesis import Hypothesis, HypothesisSet
from ladder.providers import LookupEmbedder
from ladder.retrieval import class_error_rate
from ladder.slicer import (
    HypothesisEmbedding,
    detect_error_slices,
    extract_slice,
    hypothesis_embedding,
    resolve_tau,
    score_hypothesis,
)


class ArrayEmbedder:
    """Test embedder mapping sentence text -> fixed vector."""

    def __init__(self, table):
        self.table = {k: np.asarray(v, dtype=float) for k, v in table.items()}

    def embed(self, sentences):
        return np.stack([self.table[s] for s in sentences])


def dataset_from(labels, predictions, features):
    n_classes = max([*labels, *predictions, 1]) + 1
    return SliceDataset(
        name="t",
        classes=[str(c) for c in range(n_classes)],
        samples=[
            SampleRecord(id=f"s{i}", label=int(l), prediction=int(p))
            for i, (l, p) in enumerate(zip(labels, predictions))
        ],
        features=EmbeddingMatrix(np.asarray(features, dtype=np.float32)),
        split="validation",
    )


def hyp(sentences, hid="H1", attribute="attr"):
    return Hypothesis(id=hid, attribute=attribute, statement="biased", test_sentences=tuple(sentences))


# --- hypothesis_embedding ---------------------------------------------------------

def test_embedding_of_single_sentence():
    emb = hypothesis_embedding(hyp(["a"]), ArrayEmbedder({"a": [0, 1]}))
    np.testing.assert_allclose(emb.vector, [0, 1])
    assert emb.n_sentences == 1


def test_embedding_mean_of_two():
    emb = hypothesis_embedding(hyp(["a", "b"]), ArrayEmbedder({"a": [1, 0], "b": [0, 1]}))
    np.testing.assert_allclose(emb.vector, [0.5, 0.5])


def test_embedding_normalizes_before_mean_in_cosine_mode():
    emb = hypothesis_embedding(hyp(["a", "b"]), ArrayEmbedder({"a": [10, 0], "b": [0, 1]}))
    np.testing.assert_allclose(emb.vector, [0.5, 0.5])  # not dominated by the long vector
    emb_dot = hypothesis_embedding(
        hyp(["a", "b"]), ArrayEmbedder({"a": [10, 0], "b": [0, 1]}), similarity="dot"
    )
    np.testing.assert_allclose(emb_dot.vector, [5.0, 0.5])


def test_lookup_embedder_missing_sentence_names_it():
    corpus = TextCorpus(
        sentences=[("s0", "a marker on the left side")],
        embeddings=EmbeddingMatrix(np.eye(1, 2, dtype=np.float32)),
    )
    embedder = LookupEmbedder(corpus)
    with pytest.raises(EmbedderUnavailable, match="entirely unrelated"):
        hypothesis_embedding(hyp(["entirely unrelated text"]), embedder)


def test_lookup_embedder_exact_and_near_match():
    corpus = TextCorpus(
        sentences=[("s0", "A marker on the LEFT side"), ("s1", "a plain backdrop")],
        embeddings=EmbeddingMatrix(np.array([[1, 0], [0, 1]], dtype=np.float32)),
    )
    embedder = LookupEmbedder(corpus)
    out = embedder.embed(["a marker on  the left side"])  # case/space normalised
    np.testing.assert_allclose(out, [[1, 0]])


# --- score_hypothesis ----------------------------------------------------------------

def test_scores_cosine_basics():
    m = EmbeddingMatrix(np.array([[1, 0], [0, 1], [-1, 0]], dtype=np.float32))
    he = HypothesisEmbedding(hypothesis_id="H1", vector=np.array([1.0, 0.0]), n_sentences=1)
    np.testing.assert_allclose(score_hypothesis(m, he), [1.0, 0.0, -1.0], atol=1e-12)


def test_scores_dim_mismatch():
    m = EmbeddingMatrix(np.zeros((2, 3), dtype=np.float32))
    he = HypothesisEmbedding(hypothesis_id="H1", vector=np.ones(2), n_sentences=1)
    with pytest.raises(DimensionMismatch):
        score_hypothesis(m, he)


# --- extract_slice --------------------------------------------------------------------

def test_extract_slice_threshold():
    ds = dataset_from([0, 0, 0], [0, 0, 0], np.zeros((3, 2)))
    members = extract_slice([0.9, 0.2, 0.4], ds, 0, tau=0.5)
    assert members.tolist() == [1, 2]


def test_extract_slice_empty_and_full():
    ds = dataset_from([0, 0], [0, 0], np.zeros((2, 2)))
    assert extract_slice([0.5, 0.6], ds, 0, tau=0.1).size == 0
    assert extract_slice([0.5, 0.6], ds, 0, tau=0.7).tolist() == [0, 1]


def test_extract_slice_strict_inequality():
    ds = dataset_from([0, 0], [0, 0], np.zeros((2, 2)))
    assert extract_slice([0.5, 0.4], ds, 0, tau=0.5).tolist() == [1]


def test_extract_slice_restricted_to_class():
    ds = dataset_from([0, 1, 0], [0, 1, 0], np.zeros((3, 2)))
    assert extract_slice([0.0, 0.0, 0.0], ds, 0, tau=1.0).tolist() == [0, 2]


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 1000), tau_lo=st.floats(-1, 1), tau_hi=st.floats(-1, 1))
def test_slices_nested_in_tau(seed, tau_lo, tau_hi):
    rng = np.random.default_rng(seed)
    ds = dataset_from(rng.integers(0, 2, 30), rng.integers(0, 2, 30), np.zeros((30, 2)))
    scores = rng.uniform(-1, 1, 30)
    lo, hi = min(tau_lo, tau_hi), max(tau_lo, tau_hi)
    small = set(extract_slice(scores, ds, 0, lo).tolist())
    big = set(extract_slice(scores, ds, 0, hi).tolist())
    assert small <= big


# --- tau policies ------------------------------------------------------------------------

def test_tau_policies():
    scores = np.array([0.0, 1.0, 2.0, 3.0])
    assert resolve_tau(scores, "median") == 1.5
    assert resolve_tau(scores, "percentile:25") == 0.75
    assert resolve_tau(scores, "fixed:0.4") == 0.4
    with pytest.raises(ConfigError):
        resolve_tau(scores, "nope")
    with pytest.raises(ConfigError):
        resolve_tau(scores, "percentile:101")


# --- detect_error_slices -----------------------------------------------------------------

def constructed_detection_case():
    """10 class-0 members: 5 with the attribute (1 error), 5 without (4 errors)."""
    features = np.zeros((10, 2))
    features[:5] = [1.0, 0.0]
    features[5:] = [-1.0, 0.0]
    labels = [0] * 10
    preds = [0, 0, 0, 0, 1] + [1, 1, 1, 1, 0]
    ds = dataset_from(labels, preds, features)
    hypset = HypothesisSet(
        class_label=0,
        hypotheses=(hyp(["present"], "H1", "attr_present"),),
        raw_response="",
    )
    embedder = ArrayEmbedder({"present": [1.0, 0.0]})
    return ds, hypset, embedder


def test_detect_flags_constructed_gap():
    ds, hypset, embedder = constructed_detection_case()
    reports = detect_error_slices(ds, ds.features, hypset, embedder, tau_policy="median")
    (report,) = reports
    assert set(report.member_ids) == {5, 6, 7, 8, 9}
    assert report.slice_error == pytest.approx(0.8)
    assert report.class_error == pytest.approx(0.5)
    assert report.gap == pytest.approx(0.3)
    assert report.is_error_slice
    assert report.n_class == 10


def test_detect_class_error_point2_slice_point5():
    # 10 class members, 2 errors total (class error 0.2); the 4 low-score
    # members hold both errors (slice error 0.5) -> gap 0.3, flagged
    features = np.zeros((10, 2))
    features[:6] = [1.0, 0.0]
    features[6:] = [-1.0, 0.0]
    labels = [0] * 10
    preds = [0] * 6 + [1, 1, 0, 0]
    ds = dataset_from(labels, preds, features)
    hypset = HypothesisSet(
        class_label=0, hypotheses=(hyp(["present"], "H1", "attr"),), raw_response=""
    )
    embedder = ArrayEmbedder({"present": [1.0, 0.0]})
    (report,) = detect_error_slices(ds, ds.features, hypset, embedder, tau_policy="fixed:0.0")
    assert report.class_error == pytest.approx(0.2)
    assert report.slice_error == pytest.approx(0.5)
    assert report.gap == pytest.approx(0.3)
    assert report.is_error_slice


def test_detect_gap_accounting_invariant():
    ds, hypset, embedder = constructed_detection_case()
    (report,) = detect_error_slices(ds, ds.features, hypset, embedder)
    assert abs(report.gap - (report.slice_error - report.class_error)) <= 1e-12
    recomputed = class_error_rate(ds, 0, report.member_ids)
    assert abs(recomputed - report.slice_error) <= 1e-12


def test_detect_whole_class_slice_not_flagged():
    ds, hypset, embedder = constructed_detection_case()
    reports = detect_error_slices(
        ds, ds.features, hypset, embedder, tau_policy="fixed:2.0"
    )
    (report,) = reports
    assert set(report.member_ids) == set(range(10))
    assert report.gap == pytest.approx(0.0)
    assert not report.is_error_slice


def test_detect_empty_slice_not_flagged():
    ds, hypset, embedder = constructed_detection_case()
    (report,) = detect_error_slices(
        ds, ds.features, hypset, embedder, tau_policy="fixed:-2.0"
    )
    assert report.member_ids == ()
    assert report.gap == 0.0
    assert not report.is_error_slice


def test_detect_sorts_by_gap_and_ranks_members_by_score():
    ds, _, _ = constructed_detection_case()
    hypset = HypothesisSet(
        class_label=0,
        hypotheses=(
            hyp(["noise"], "H1", "noise"),
            hyp(["present"], "H2", "attr_present"),
        ),
        raw_response="",
    )
    embedder = ArrayEmbedder({"present": [1.0, 0.0], "noise": [0.0, 1.0]})
    reports = detect_error_slices(ds, ds.features, hypset, embedder)
    assert [r.hypothesis_id for r in reports] == ["H2", "H1"]  # gap-descending
    report = reports[0]
    scores = report.scores
    ranked = list(report.member_ids)
    assert all(scores[a] <= scores[b] for a, b in zip(ranked, ranked[1:]))


def test_detect_scale_invariance_under_cosine():
    ds, hypset, embedder = constructed_detection_case()
    (r1,) = detect_error_slices(ds, ds.features, hypset, embedder)
    scaled = EmbeddingMatrix(ds.features.as_float64().astype(np.float32) * 37.0)
    (r2,) = detect_error_slices(ds, scaled, hypset, embedder)
    assert r1.member_ids == r2.member_ids
    assert r1.is_error_slice == r2.is_error_slice


def test_detect_respects_max_hypotheses():
    ds, _, _ = constructed_detection_case()
    hypset = HypothesisSet(
        class_label=0,
        hypotheses=tuple(hyp(["present"], f"H{i}", "a") for i in range(1, 6)),
        raw_response="",
    )
    embedder = ArrayEmbedder({"present": [1.0, 0.0]})
    reports = detect_error_slices(ds, ds.features, hypset, embedder, max_hypotheses=2)
    assert len(reports) == 2


def test_empty_sentence_set_error():
    with pytest.raises(EmptySentenceSet):
        HypothesisEmbedding(hypothesis_id="H1", vector=np.ones(2), n_sentences=0)


# --- remote embedding provider -----------------------------------------------------

def test_remote_embedder_wire_shape():
    from unittest import mock

    from ladder.providers import RemoteEmbedder

    session = mock.Mock()
    resp = mock.Mock()
    resp.status_code = 200
    resp.json.return_value = {"data": [{"embedding": [1.0, 0.0]}, {"embedding": [0.0, 1.0]}]}
    session.post.return_value = resp
    embedder = RemoteEmbedder("http://unit.test/embed", "m", session=session, sleep=lambda _: None)
    out = embedder.embed(["a", "b"])
    np.testing.assert_allclose(out, [[1, 0], [0, 1]])
    assert session.post.call_args.kwargs["json"] == {"model": "m", "input": ["a", "b"]}


def test_remote_embedder_count_mismatch():
    from unittest import mock

    from ladder.providers import RemoteEmbedder

    session = mock.Mock()
    resp = mock.Mock()
    resp.status_code = 200
    resp.json.return_value = {"data": [{"embedding": [1.0, 0.0]}]}
    session.post.return_value = resp
    embedder = RemoteEmbedder("http://unit.test/embed", "m", session=session, sleep=lambda _: None)
    with pytest.raises(EmbedderUnavailable):
        embedder.embed(["a", "b"])
