from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from arpm.config import BM25Params, BonusConfig, ConfigError, FusionParams
from arpm.retrieval.embedding import HashingEmbedder
from arpm.retrieval.scoring import (
    AugmentationError,
    DocStats,
    QueryContext,
    augment_query,
    bm25_idf,
    bm25_term,
    chat_base_score,
    chat_bonus,
    fuse_rrf,
    knowledge_base_scores,
    knowledge_bonus,
    min_max_normalize,
    rank_key,
    score_bm25,
    score_vector,
    semantic_score,
    strip_augmentation,
)
from arpm.retrieval.text import tokenize

P = BM25Params()


class TestAugmentation:
    def test_prefix(self):
        assert augment_query("what did I eat", "Alice", "Mori") == "[User Alice][Assistant Mori] what did I eat"

    def test_empty_ids_pass_through(self):
        assert augment_query("hi", "", "") == "[User ][Assistant ] hi"

    def test_double_augmentation_refused(self):
        once = augment_query("hi", "a", "b")
        with pytest.raises(AugmentationError):
            augment_query(once, "a", "b")

    def test_empty_query(self):
        with pytest.raises(AugmentationError):
            augment_query("", "a", "b")

    @given(st.text(min_size=1), st.text(alphabet="abcxyz "), st.text(alphabet="abcxyz "))
    def test_original_recoverable(self, q, u, a):
        if strip_augmentation(q) != q:
            return
        assert strip_augmentation(augment_query(q, u, a)) == q


class TestTokenize:
    def test_lowercase_and_punctuation(self):
        assert tokenize("Hello, World! It's 2024.") == ["hello", "world", "it", "s", "2024"]

    def test_cjk_bigrams(self):
        assert tokenize("我爱北京") == ["我", "爱", "北", "京", "我爱", "爱北", "北京"]

    def test_mixed(self):
        assert tokenize("ABC北京x") == ["abc", "北", "京", "北京", "x"]


class TestVector:
    @pytest.mark.parametrize(
        "q, d, expected",
        [((1, 0), (0.5, 0.5), 0.5), ((0.6, 0.8), (0.6, 0.8), 1.0), ((1, 0), (0, 1), 0.0)],
    )
    def test_dot(self, q, d, expected):
        assert score_vector(np.array(q), np.array(d)) == pytest.approx(expected, abs=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            score_vector(np.ones(2), np.ones(3))

    def test_semantic_examples(self):
        v = np.array([0.3, -0.4, 1.2])
        assert semantic_score(v, v) == pytest.approx(1.0)
        assert semantic_score(v, -v) == 0.0
        assert semantic_score(np.array([1.0, 0]), np.array([0, 1.0])) == 0.0
        assert semantic_score(np.zeros(3), v) == 0.0

    @given(st.lists(st.floats(-100, 100), min_size=3, max_size=3), st.lists(st.floats(-100, 100), min_size=3, max_size=3))
    def test_semantic_in_unit_interval(self, a, b):
        s = semantic_score(np.array(a), np.array(b))
        assert 0.0 <= s <= 1.0


class TestBM25:
    def test_df_equals_n_gives_delta(self):
        assert bm25_idf(10, 10, 0.5) == 0.5

    def test_single_doc_clamp(self):
        # log(0.5 / 1.5) < 0, so the clamp leaves exactly delta
        assert bm25_idf(1, 1, 0.5) == 0.5

    def test_rare_term(self):
        assert bm25_idf(1, 100, 0.5) == pytest.approx(math.log(99.5 / 1.5) + 0.5)

    def test_term_in_every_doc_scores_delta(self):
        doc = DocStats(tf={"t": 1}, length=5, n_docs=4, avgdl=5.0, df={"t": 4})
        assert score_bm25(["t"], doc, P) == pytest.approx(0.5, abs=1e-12)

    def test_absent_term_contributes_zero(self):
        doc = DocStats(tf={"a": 2}, length=5, n_docs=4, avgdl=5.0, df={"a": 1})
        assert score_bm25(["zzz"], doc, P) == 0.0
        assert bm25_term(0, 5, 5, 3.0, P) == 0.0

    def test_unindexed_doc(self):
        with pytest.raises(KeyError):
            score_bm25(["a"], None, P)

    def test_repeated_query_terms_count_once(self):
        doc = DocStats(tf={"a": 1}, length=3, n_docs=3, avgdl=3.0, df={"a": 1})
        assert score_bm25(["a", "a"], doc, P) == score_bm25(["a"], doc, P)

    def test_params_validated(self):
        with pytest.raises(ConfigError):
            BM25Params(k1=-1)
        with pytest.raises(ConfigError):
            BM25Params(b=1.5)

    @given(st.integers(1, 500), st.data())
    def test_idf_at_least_delta(self, n, data):
        df = data.draw(st.integers(0, n))
        assert bm25_idf(df, n, 0.5) >= 0.5

    @given(st.integers(1, 50), st.floats(1, 100), st.floats(1, 100), st.floats(0.5, 8))
    def test_monotone_in_tf(self, tf, dl, avgdl, idf):
        assert 0 <= bm25_term(tf, dl, avgdl, idf, P) <= bm25_term(tf + 1, dl, avgdl, idf, P)


class TestRRF:
    def test_top_of_one_list(self):
        assert fuse_rrf([["d", "x"]], FusionParams(60))["d"] == pytest.approx(1 / 61, abs=1e-12)

    def test_top_of_both(self):
        assert fuse_rrf([["d", "x"], ["d"]], FusionParams(60))["d"] == pytest.approx(2 / 61, abs=1e-12)

    def test_absent(self):
        assert "z" not in fuse_rrf([["a"], ["b"]])

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError, match="duplicate"):
            fuse_rrf([["a", "a"]])

    def test_k_must_be_positive(self):
        with pytest.raises(ConfigError):
            FusionParams(0)

    @given(
        st.lists(st.sampled_from("abcdefgh"), unique=True, min_size=2, max_size=8),
        st.lists(st.sampled_from("abcdefgh"), unique=True, max_size=8),
        st.data(),
    )
    def test_promotion_never_hurts(self, first, second, data):
        i = data.draw(st.integers(1, len(first) - 1))
        doc = first[i]
        before = fuse_rrf([first, second])[doc]
        promoted = list(first)
        promoted[i - 1], promoted[i] = promoted[i], promoted[i - 1]
        assert fuse_rrf([promoted, second])[doc] >= before


class TestBaseScores:
    def test_singleton_is_one(self):
        assert knowledge_base_scores({"a": 0.01}, {}) == {"a": 1.0}

    def test_two_candidates(self):
        out = knowledge_base_scores({"a": 1 / 61, "b": 2 / 61}, {})
        assert out == {"a": 0.0, "b": 1.0}

    def test_user_bonus(self):
        bonus = knowledge_bonus("alice", "", "", QueryContext(user_id="alice"), BonusConfig())
        assert knowledge_base_scores({"a": 0.5}, {"a": bonus})["a"] == pytest.approx(1.10)

    def test_trusted_source(self):
        ctx = QueryContext("u", "c", "s")
        assert knowledge_bonus("u", "c", "manual", ctx, BonusConfig(), ("manual",)) == pytest.approx(0.25)
        assert knowledge_bonus("x", "y", "other", ctx, BonusConfig(), ("manual",)) == 0.0

    def test_all_equal_pool(self):
        assert min_max_normalize({"a": 0.2, "b": 0.2}) == {"a": 1.0, "b": 1.0}
        assert min_max_normalize({}) == {}

    def test_chat_examples(self):
        ctx = QueryContext("alice", "mori", "s1")
        cfg = BonusConfig()
        assert chat_base_score(0.8, chat_bonus("s1", "alice", "nobody", ctx, cfg)) == pytest.approx(1.05)
        assert chat_base_score(0.8, chat_bonus("s2", "bob", "nobody", ctx, cfg)) == pytest.approx(0.8)

    def test_empty_context_never_matches(self):
        assert chat_bonus("", "", "", QueryContext(), BonusConfig()) == 0.0

    def test_bonus_validation(self):
        with pytest.raises(ConfigError):
            BonusConfig(b_user=-0.1)
        with pytest.raises(ConfigError):
            BonusConfig(b_session=float("inf"))


class TestRankKey:
    def test_ties_by_id(self):
        items = [("b", 1.0), ("a", 1.0), ("c", 2.0)]
        assert [i for i, _ in sorted(items, key=lambda x: rank_key(x[1], x[0]))] == ["c", "a", "b"]

    def test_last_ulp_noise_is_a_tie(self):
        assert rank_key(0.1 + 0.2, "x")[0] == rank_key(0.3, "x")[0]


class TestHashingEmbedder:
    def test_deterministic_and_unit(self):
        e = HashingEmbedder(64)
        v = e.embed("the quick brown fox")
        assert np.array_equal(v, HashingEmbedder(64).embed("the quick brown fox"))
        assert np.linalg.norm(v) == pytest.approx(1.0)

    def test_stopwords_only_is_zero(self):
        assert not HashingEmbedder(32).embed("the of and").any()

    def test_dimension(self):
        assert HashingEmbedder(17).embed("x").shape == (17,)
        with pytest.raises(ValueError):
            HashingEmbedder(0)
