"""Collapsed Gibbs LDA: planted recovery, invariants, oracles, file format."""

from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ttn import lda as L
from ttn.corpus import BowDocument
from ttn.errors import CorruptFile, EmptyDocument, FormatVersionMismatch

WORDS8 = tuple("abcdefgh"[i] * 3 for i in range(8))  # aaa, bbb, ...


def _planted_corpus(n_docs=20, tokens_per_doc=20, seed=0):
    """Two disjoint word blocks; even docs draw from 0..3, odd docs from 4..7."""
    rng = np.random.default_rng(seed)
    bows = []
    for d in range(n_docs):
        base = 0 if d % 2 == 0 else 4
        ids, counts = np.unique(
            rng.integers(base, base + 4, size=tokens_per_doc), return_counts=True
        )
        bows.append(BowDocument(f"doc{d:03d}", {int(i): int(c) for i, c in zip(ids, counts)}))
    return bows


@pytest.fixture(scope="module")
def planted_model():
    bows = _planted_corpus()
    hyper = L.LdaHyperparams(k=2, alpha=0.1, beta_prior=0.01, n_iters=200, burn_in=100, seed=1)
    return bows, L.train(bows, hyper, WORDS8)


# ------------------------------------------------------------------ hyperparams

def test_hyperparam_defaults():
    hyper = L.LdaHyperparams()
    assert hyper.k == 40
    assert hyper.effective_alpha == pytest.approx(50.0 / 40.0)
    assert hyper.beta_prior == 0.01
    assert hyper.n_iters == 200


def test_hyperparam_alpha_tracks_k():
    assert L.LdaHyperparams(k=10).effective_alpha == pytest.approx(5.0)
    assert L.LdaHyperparams(k=10, alpha=0.5).effective_alpha == 0.5


def test_hyperparam_validation():
    with pytest.raises(ValueError):
        L.LdaHyperparams(k=0)
    with pytest.raises(ValueError):
        L.LdaHyperparams(alpha=0.0)
    with pytest.raises(ValueError):
        L.LdaHyperparams(beta_prior=-1.0)
    with pytest.raises(ValueError):
        L.LdaHyperparams(average_after_burn_in=True, burn_in=200, n_iters=200)


# -------------------------------------------------------------------- sampler

def test_gibbs_init_counts_consistent():
    bows = _planted_corpus(n_docs=6)
    state = L.gibbs_init(bows, k=3, vocab_size=8, rng=np.random.default_rng(0))
    assert state.counts_consistent()
    assert sum(state.n_k) == sum(len(t) for t in state.doc_tokens)


def test_gibbs_sweep_preserves_counts():
    bows = _planted_corpus(n_docs=6)
    rng = np.random.default_rng(0)
    state = L.gibbs_init(bows, k=3, vocab_size=8, rng=rng)
    total = sum(len(t) for t in state.doc_tokens)
    for _ in range(5):
        L.gibbs_sweep(state, alpha=0.5, beta=0.01, uniforms=rng.random(total).tolist())
        assert state.counts_consistent()


def test_gibbs_init_rejects_empty_doc():
    with pytest.raises(EmptyDocument):
        L.gibbs_init([BowDocument("d", {})], k=2, vocab_size=8, rng=np.random.default_rng(0))


def test_docs_processed_in_sorted_id_order():
    bows = _planted_corpus(n_docs=4)
    state_fwd = L.gibbs_init(bows, k=2, vocab_size=8, rng=np.random.default_rng(9))
    state_rev = L.gibbs_init(bows[::-1], k=2, vocab_size=8, rng=np.random.default_rng(9))
    assert state_fwd.doc_ids == state_rev.doc_ids
    assert state_fwd.z == state_rev.z  # input order must not matter


# ------------------------------------------------------------------- recovery

def test_planted_topics_recovered(planted_model):
    bows, model = planted_model
    # Each inferred topic's top words must come from a single planted block.
    tops = [{w for w, _ in L.top_words(model, t, 4)} for t in range(2)]
    blocks = [set(WORDS8[:4]), set(WORDS8[4:])]
    assert (tops[0] in blocks) and (tops[1] in blocks) and tops[0] != tops[1]


def test_planted_thetas_separate_docs(planted_model):
    bows, model = planted_model
    argmaxes = {d: int(np.argmax(model.doc_thetas[f"doc{d:03d}"])) for d in range(20)}
    evens = {argmaxes[d] for d in range(0, 20, 2)}
    odds = {argmaxes[d] for d in range(1, 20, 2)}
    assert len(evens) == 1 and len(odds) == 1 and evens != odds
    for theta in model.doc_thetas.values():
        assert theta.max() >= 0.9


def test_single_doc_high_alpha_theta_near_uniform():
    bow = BowDocument("solo", {0: 2, 5: 2})
    hyper = L.LdaHyperparams(k=2, alpha=50.0, n_iters=20, burn_in=10, seed=0)
    model = L.train([bow], hyper, WORDS8)
    theta = model.doc_thetas["solo"]
    # theta = (n_dk + 50) / (4 + 100), n_dk <= 4, so both entries sit near 0.5.
    assert np.all(np.abs(theta - 0.5) <= 4.0 / 104.0 + 1e-12)


# ---------------------------------------------------------------------- infer

def test_infer_matches_planted_topic(planted_model):
    bows, model = planted_model
    block0_topic = int(np.argmax(model.phi[:, 0]))  # topic owning word "aaa"
    theta = L.infer(BowDocument("q", {0: 3, 1: 2}), model, seed=4)
    assert int(np.argmax(theta)) == block0_topic
    assert theta.sum() == pytest.approx(1.0)


def test_infer_deterministic(planted_model):
    _, model = planted_model
    bow = BowDocument("q", {2: 1, 6: 2})
    a = L.infer(bow, model, seed=7)
    b = L.infer(bow, model, seed=7)
    assert np.array_equal(a, b)


def test_infer_single_word_follows_phi(planted_model):
    _, model = planted_model
    for word_id in (0, 7):
        theta = L.infer(BowDocument("q", {word_id: 1}), model, seed=0)
        assert int(np.argmax(theta)) == int(np.argmax(model.phi[:, word_id]))


def test_infer_rejects_empty():
    hyper = L.LdaHyperparams(k=2, n_iters=2, burn_in=1, seed=0)
    model = L.train(_planted_corpus(4), hyper, WORDS8)
    with pytest.raises(EmptyDocument):
        L.infer(BowDocument("q", {}), model, seed=0)


# ----------------------------------------------------------------- perplexity

def _uniform_model(k, vocab_size, words):
    phi = np.full((k, vocab_size), 1.0 / vocab_size)
    hyper = L.LdaHyperparams(k=k, alpha=1.0, n_iters=1, burn_in=0, infer_iters=2, seed=0)
    return L.LdaModel(
        vocab_size=vocab_size, k=k, phi=phi, hyper=hyper, doc_thetas={}, words=words
    )


def test_perplexity_uniform_phi_equals_vocab_size():
    bows = _planted_corpus(n_docs=8)
    for k in (1, 2, 5):
        model = _uniform_model(k, 8, WORDS8)
        assert L.perplexity(bows, model, seed=0) == pytest.approx(8.0, rel=1e-9)


def test_perplexity_k1_matches_unigram_oracle():
    bows = _planted_corpus(n_docs=10, seed=3)
    hyper = L.LdaHyperparams(k=1, alpha=1.0, n_iters=3, burn_in=1, seed=0)
    model = L.train(bows, hyper, WORDS8)

    counts = np.zeros(8)
    for bow in bows:
        for w, c in bow.counts.items():
            counts[w] += c
    unigram = (counts + hyper.beta_prior) / (counts.sum() + 8 * hyper.beta_prior)
    log_lik = sum(
        c * math.log(unigram[w]) for bow in bows for w, c in bow.counts.items()
    )
    expected = math.exp(-log_lik / counts.sum())
    assert L.perplexity(bows, model, seed=0) == pytest.approx(expected, rel=1e-12)


def test_trained_model_beats_uniform(planted_model):
    bows, model = planted_model
    uniform = _uniform_model(2, 8, WORDS8)
    assert L.perplexity(bows, model, seed=0) < L.perplexity(bows, uniform, seed=0)


# ------------------------------------------------------------------ top_words

def test_top_words_breaks_ties_lexicographically():
    phi = np.array([[0.25, 0.25, 0.25, 0.25]])
    hyper = L.LdaHyperparams(k=1, n_iters=1, burn_in=0, seed=0)
    model = L.LdaModel(
        vocab_size=4, k=1, phi=phi, hyper=hyper, doc_thetas={}, words=("dd", "cc", "bb", "aa")
    )
    assert [w for w, _ in L.top_words(model, 0, 3)] == ["aa", "bb", "cc"]


def test_top_words_bad_topic(planted_model):
    _, model = planted_model
    with pytest.raises(IndexError):
        L.top_words(model, 2, 3)


# --------------------------------------------------------------- file format

def test_model_roundtrip(tmp_path, planted_model):
    _, model = planted_model
    path = tmp_path / "model.lda"
    L.save_model(model, str(path))
    loaded = L.load_model(str(path))
    assert loaded.k == model.k and loaded.vocab_size == model.vocab_size
    assert loaded.words == model.words
    assert loaded.hyper == model.hyper
    assert np.array_equal(loaded.phi, model.phi)
    assert set(loaded.doc_thetas) == set(model.doc_thetas)
    for doc_id, theta in model.doc_thetas.items():
        assert np.array_equal(loaded.doc_thetas[doc_id], theta)
    assert loaded.content_hash() == model.content_hash()


def test_model_file_magic(tmp_path, planted_model):
    _, model = planted_model
    path = tmp_path / "model.lda"
    L.save_model(model, str(path))
    raw = bytearray(path.read_bytes())
    raw[:8] = b"WRONGMG\x00"
    bad = tmp_path / "bad.lda"
    bad.write_bytes(bytes(raw))
    with pytest.raises(FormatVersionMismatch):
        L.load_model(str(bad))


def test_model_file_truncation(tmp_path, planted_model):
    _, model = planted_model
    path = tmp_path / "model.lda"
    L.save_model(model, str(path))
    raw = path.read_bytes()
    cut = tmp_path / "cut.lda"
    cut.write_bytes(raw[: len(raw) - 16])
    with pytest.raises(CorruptFile):
        L.load_model(str(cut))


def test_model_file_trailing_garbage(tmp_path, planted_model):
    _, model = planted_model
    path = tmp_path / "model.lda"
    L.save_model(model, str(path))
    fat = tmp_path / "fat.lda"
    fat.write_bytes(path.read_bytes() + b"extra")
    with pytest.raises(CorruptFile):
        L.load_model(str(fat))


# --------------------------------------------------------------- determinism

def test_training_bit_reproducible():
    bows = _planted_corpus(n_docs=8)
    hyper = L.LdaHyperparams(k=3, alpha=0.2, n_iters=30, burn_in=10, seed=42)
    a = L.train(bows, hyper, WORDS8)
    b = L.train(bows, hyper, WORDS8)
    assert a.phi.tobytes() == b.phi.tobytes()
    for doc_id in a.doc_thetas:
        assert a.doc_thetas[doc_id].tobytes() == b.doc_thetas[doc_id].tobytes()


def test_training_seed_changes_model():
    bows = _planted_corpus(n_docs=8)
    h1 = L.LdaHyperparams(k=3, alpha=0.2, n_iters=10, burn_in=5, seed=1)
    h2 = L.LdaHyperparams(k=3, alpha=0.2, n_iters=10, burn_in=5, seed=2)
    assert not np.array_equal(L.train(bows, h1, WORDS8).phi, L.train(bows, h2, WORDS8).phi)


def test_averaged_estimates_differ_but_stay_on_simplex():
    bows = _planted_corpus(n_docs=8)
    hyper = L.LdaHyperparams(
        k=2, alpha=0.2, n_iters=30, burn_in=10, seed=5, average_after_burn_in=True
    )
    model = L.train(bows, hyper, WORDS8)
    np.testing.assert_allclose(model.phi.sum(axis=1), 1.0, rtol=1e-12)
    for theta in model.doc_thetas.values():
        assert theta.sum() == pytest.approx(1.0)


# ----------------------------------------------------------------- invariants

@settings(max_examples=25, deadline=None)
@given(
    st.lists(
        st.dictionaries(
            st.integers(min_value=0, max_value=7),
            st.integers(min_value=1, max_value=4),
            min_size=1,
            max_size=5,
        ),
        min_size=1,
        max_size=6,
    ),
    st.integers(min_value=1, max_value=4),
)
def test_model_outputs_on_simplex(count_dicts, k):
    bows = [BowDocument(f"d{i:02d}", counts) for i, counts in enumerate(count_dicts)]
    hyper = L.LdaHyperparams(k=k, alpha=0.5, n_iters=5, burn_in=2, seed=0)
    model = L.train(bows, hyper, WORDS8)
    assert model.phi.shape == (k, 8)
    assert np.all(model.phi > 0)
    np.testing.assert_allclose(model.phi.sum(axis=1), 1.0, rtol=1e-12)
    for theta in model.doc_thetas.values():
        assert theta.shape == (k,)
        assert np.all(theta > 0)
        assert theta.sum() == pytest.approx(1.0)
