"""Fused input assembly, visibility masks, attention, and the encoder."""

import numpy as np
import pytest

from trtkit.encoder import (
    CLS_ID,
    EQUATION,
    FULL,
    NEG_LARGE,
    PROSE_STRICT,
    QUERY_SEGMENT,
    SEP_ID,
    EncoderConfig,
    FusedInput,
    Vocabulary,
    attention,
    build_input,
    build_visibility_mask,
    encode,
    encode_batch,
    init_params,
    load_params,
    pad_batch,
    save_params,
    softmax_rows,
)
from trtkit.knowledge import CORPUS, KnowledgeSet, KnowledgeSnippet


def make_vocab():
    return Vocabulary.build(["q1", "q2", "c1", "s1a", "s2a", "s2b"])


def snippet_set(texts, spans=None):
    spans = spans or [None] * len(texts)
    return KnowledgeSet(
        [KnowledgeSnippet(CORPUS, t, linked_span=s) for t, s in zip(texts, spans)],
        capacity=max(len(texts), 1),
    )


class TestBuildInput:
    def test_layout_and_segments(self):
        vocab = make_vocab()
        fused = build_input(["q1", "q2"], ["c1"], snippet_set(["s1a", "s2a s2b"]), vocab, 32)
        ids = [vocab.id_of(t) for t in ["q1", "q2", "c1", "s1a", "s2a", "s2b"]]
        expected = [CLS_ID, ids[0], ids[1], ids[2], SEP_ID, ids[3], SEP_ID, ids[4], ids[5], SEP_ID]
        assert fused.token_ids.tolist() == expected
        assert fused.segments.tolist() == [0, 0, 0, 0, 0, 1, 1, 2, 2, 2]

    def test_no_snippets(self):
        vocab = make_vocab()
        fused = build_input(["q1", "q2"], ["c1"], None, vocab, 32)
        assert fused.segments.tolist() == [0] * 5
        assert fused.token_ids[0] == CLS_ID and fused.token_ids[-1] == SEP_ID

    def test_whole_snippet_dropped_when_too_long(self):
        vocab = make_vocab()
        fused = build_input(["q1", "q2"], ["c1"], snippet_set(["s1a", "s2a s2b"]), vocab, 7)
        assert len(fused) == 7
        assert fused.segments.tolist() == [0, 0, 0, 0, 0, 1, 1]

    def test_query_tail_truncated_last(self):
        vocab = make_vocab()
        fused = build_input(["q1", "q2"], ["c1"], snippet_set(["s1a"]), vocab, 4)
        assert fused.token_ids.tolist() == [CLS_ID, vocab.id_of("q1"), vocab.id_of("q2"), SEP_ID]
        assert fused.segments.tolist() == [0] * 4

    def test_oov_maps_to_unk(self):
        vocab = make_vocab()
        fused = build_input(["zzz"], [], None, vocab, 8)
        assert fused.token_ids.tolist() == [CLS_ID, 1, SEP_ID]

    def test_link_starts_recorded(self):
        vocab = make_vocab()
        fused = build_input(
            ["q1", "q2"], ["c1"], snippet_set(["s1a", "s2a"], spans=[(1, 2), None]), vocab, 32
        )
        assert fused.link_starts == [(2, 1)]

    def test_link_dropped_when_query_truncated(self):
        vocab = make_vocab()
        fused = build_input(
            ["q1", "q2", "q1", "q2"], [], snippet_set(["s1a"], spans=[(3, 4)]), vocab, 5
        )
        # query truncated to [CLS, q1, q2, q1? -> max_len 5 keeps 3 pair tokens], snippet dropped
        assert fused.link_starts == []

    def test_max_len_too_small_rejected(self):
        with pytest.raises(ValueError):
            build_input(["q1"], [], None, make_vocab(), 1)


def oracle_mask(segments, mode, link_starts=()):
    """Brute-force per-pair enumeration of the mask cases."""
    n = len(segments)
    m = np.full((n, n), -NEG_LARGE)
    links = set(link_starts)
    for j in range(n):
        for k in range(n):
            sj, sk = segments[j], segments[k]
            if sj == QUERY_SEGMENT and sk == QUERY_SEGMENT:
                m[j, k] = 0.0
            elif sj == sk:
                m[j, k] = 0.0
            elif mode == EQUATION and sj == QUERY_SEGMENT and sk != QUERY_SEGMENT:
                m[j, k] = 0.0
            elif mode == PROSE_STRICT and sj == QUERY_SEGMENT and (j, sk) in links:
                m[j, k] = 0.0
            elif mode == FULL:
                m[j, k] = 0.0
    return m


def random_layout(rng, max_t=32, max_k=4):
    """Random contiguous segment layout: query block then up to K snippets."""
    n_query = int(rng.integers(2, 8))
    k = int(rng.integers(0, max_k + 1))
    segments = [0] * n_query
    for seg in range(1, k + 1):
        segments.extend([seg] * int(rng.integers(1, 5)))
    segments = segments[:max_t]
    link_starts = []
    for seg in range(1, max(segments) + 1 if segments else 1):
        if seg in segments and rng.random() < 0.7:
            link_starts.append((int(rng.integers(1, n_query)), seg))
    return segments, link_starts


def fused_from_layout(segments, link_starts):
    ids = np.full(len(segments), 5, dtype=np.int64)
    ids[0] = CLS_ID
    return FusedInput(ids, np.asarray(segments, dtype=np.int64), link_starts)


class TestVisibilityMask:
    def test_no_knowledge_is_all_zero(self):
        fused = fused_from_layout([0, 0, 0], [])
        assert np.all(build_visibility_mask(fused, EQUATION) == 0.0)

    def test_single_snippet_rows(self):
        fused = fused_from_layout([0] * 5 + [1] * 2, [])
        m = build_visibility_mask(fused, EQUATION)
        assert np.all(m[:5, :] == 0.0)
        assert np.all(m[5:, 5:] == 0.0)
        assert np.all(m[5:, :5] == -NEG_LARGE)

    def test_two_snippets_match_oracle_81_pairs(self):
        segments = [0] * 5 + [1] * 2 + [2] * 2
        fused = fused_from_layout(segments, [])
        m = build_visibility_mask(fused, EQUATION)
        assert np.array_equal(m, oracle_mask(segments, EQUATION))
        # spot asserts from the enumeration
        assert np.all(m[5, 5:7] == 0.0) and np.all(m[5, 7:] == -NEG_LARGE)
        assert np.all(m[7, 7:9] == 0.0) and np.all(m[7, :7] == -NEG_LARGE)
        assert np.all(m[:5, :] == 0.0)

    def test_full_mode_all_zeros(self):
        fused = fused_from_layout([0, 0, 1, 1, 2], [])
        assert np.all(build_visibility_mask(fused, FULL) == 0.0)

    def test_prose_strict_restricts_query_rows(self):
        segments = [0, 0, 0, 1, 1]
        fused = fused_from_layout(segments, [(1, 1)])
        m = build_visibility_mask(fused, PROSE_STRICT)
        assert np.array_equal(m, oracle_mask(segments, PROSE_STRICT, [(1, 1)]))
        assert np.all(m[1, 3:] == 0.0)      # linked row sees its snippet
        assert np.all(m[0, 3:] == -NEG_LARGE)  # CLS does not
        assert np.all(m[2, 3:] == -NEG_LARGE)

    def test_diagonal_always_zero_and_rows_nonempty(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            segments, links = random_layout(rng)
            fused = fused_from_layout(segments, links)
            for mode in (EQUATION, PROSE_STRICT, FULL):
                m = build_visibility_mask(fused, mode)
                assert np.all(np.diag(m) == 0.0)
                assert np.all((m == 0.0).any(axis=1))

    def test_asymmetric_with_knowledge(self):
        fused = fused_from_layout([0, 0, 1], [])
        m = build_visibility_mask(fused, EQUATION)
        assert m[0, 2] == 0.0 and m[2, 0] == -NEG_LARGE

    def test_unknown_mode_rejected(self):
        fused = fused_from_layout([0, 0], [])
        with pytest.raises(ValueError):
            build_visibility_mask(fused, "WEIRD")


class TestAttention:
    def test_uniform_when_keys_identical(self):
        rng = np.random.default_rng(2)
        k = np.ones((4, 3))
        q = rng.normal(size=(4, 3))
        v = rng.normal(size=(4, 3))
        out = attention(q, k, v, np.zeros((4, 4)))
        np.testing.assert_allclose(out, np.tile(v.mean(axis=0), (4, 1)), atol=1e-12)

    def test_degenerate_row_returns_own_value(self):
        rng = np.random.default_rng(3)
        q = rng.normal(size=(3, 2))
        k = rng.normal(size=(3, 2))
        v = rng.normal(size=(3, 2))
        mask = np.full((3, 3), -NEG_LARGE)
        np.fill_diagonal(mask, 0.0)
        out = attention(q, k, v, mask)
        np.testing.assert_allclose(out, v, atol=1e-12)

    def test_scalar_oracle(self):
        # softmax([1, 0]) = [0.7311, 0.2689]; row 0 = 0.7311*2 + 0.2689*4
        q = np.array([[1.0], [0.0]])
        k = np.array([[1.0], [0.0]])
        v = np.array([[2.0], [4.0]])
        out = attention(q, k, v, np.zeros((2, 2)))
        np.testing.assert_allclose(out, [[2.537883], [3.0]], atol=1e-5)

    def test_rows_are_convex_combinations(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            t = int(rng.integers(2, 8))
            scores = rng.normal(size=(t, t)) + np.where(rng.random((t, t)) < 0.3, -NEG_LARGE, 0.0)
            np.fill_diagonal(scores, rng.normal(size=t))
            probs = softmax_rows(scores)
            assert np.all(probs >= 0.0)
            np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)


def tiny_setup(rng, n_query=4, snippet_lens=(2, 3), d_model=16, n_heads=2, n_layers=2, vocab_size=30):
    segments = [0] * n_query
    for seg, length in enumerate(snippet_lens, start=1):
        segments.extend([seg] * length)
    ids = rng.integers(5, vocab_size, size=len(segments))
    ids[0] = CLS_ID
    fused = FusedInput(ids.astype(np.int64), np.asarray(segments, dtype=np.int64), [])
    config = EncoderConfig(d_model, n_heads, n_layers, max_len=64, vocab_size=vocab_size)
    params = init_params(config, rng)
    return fused, config, params


class TestEncode:
    def test_output_shape(self):
        rng = np.random.default_rng(0)
        fused, config, params = tiny_setup(rng)
        out = encode(fused, build_visibility_mask(fused, EQUATION), params, config)
        assert out.shape == (len(fused), config.d_model)

    def test_zero_layers_returns_embeddings(self):
        rng = np.random.default_rng(1)
        fused, config, params = tiny_setup(rng, n_layers=0)
        out = encode(fused, build_visibility_mask(fused, EQUATION), params, config)
        expected = params.tok_emb[fused.token_ids] + params.pos_emb[: len(fused)]
        assert np.array_equal(out, expected)

    def test_too_long_rejected(self):
        rng = np.random.default_rng(2)
        fused, config, params = tiny_setup(rng)
        config.max_len = 4
        with pytest.raises(ValueError):
            encode(fused, build_visibility_mask(fused, EQUATION), params, config)

    def test_knowledge_isolation_bitwise(self):
        # perturbing KNOW_1 must leave every KNOW_2 state bit-identical
        rng = np.random.default_rng(3)
        fused, config, params = tiny_setup(rng)
        mask = build_visibility_mask(fused, EQUATION)
        base = encode(fused, mask, params, config)
        perturbed = FusedInput(fused.token_ids.copy(), fused.segments, fused.link_starts)
        know1 = np.where(fused.segments == 1)[0]
        perturbed.token_ids[know1] = (perturbed.token_ids[know1] % 20) + 6
        other = encode(perturbed, mask, params, config)
        know2 = fused.segments == 2
        assert np.array_equal(base[know2], other[know2])
        # FULL mode leaks
        full = build_visibility_mask(fused, FULL)
        assert not np.array_equal(
            encode(fused, full, params, config)[know2],
            encode(perturbed, full, params, config)[know2],
        )

    def test_full_mask_equals_no_mask_term(self):
        rng = np.random.default_rng(4)
        fused, config, params = tiny_setup(rng)
        full = encode(fused, build_visibility_mask(fused, FULL), params, config)
        zero = encode(fused, np.zeros((len(fused), len(fused))), params, config)
        assert np.array_equal(full, zero)

    def test_padding_does_not_change_real_positions(self):
        rng = np.random.default_rng(5)
        fused, config, params = tiny_setup(rng)
        mask = build_visibility_mask(fused, EQUATION)
        single = encode(fused, mask, params, config)
        longer = FusedInput(
            np.concatenate([fused.token_ids, fused.token_ids]),
            np.concatenate([fused.segments, fused.segments]),
            [],
        )
        ids, masks = pad_batch(
            [(fused.token_ids, mask), (longer.token_ids, build_visibility_mask(longer, EQUATION))]
        )
        batched = encode_batch(ids, masks, params, config)
        assert np.array_equal(batched[0, : len(fused)], single)


class TestCheckpoint:
    def test_byte_exact_round_trip(self, tmp_path):
        rng = np.random.default_rng(6)
        _, config, params = tiny_setup(rng)
        path = tmp_path / "params.npz"
        save_params(path, params, config, extra={"w_o": rng.normal(size=16)})
        loaded, loaded_config, extra = load_params(path)
        assert loaded_config == config
        for (name_a, a), (name_b, b) in zip(params.named_arrays(), loaded.named_arrays()):
            assert name_a == name_b
            assert a.tobytes() == b.tobytes()
        assert "w_o" in extra


class TestVocabulary:
    def test_build_reserves_specials(self):
        vocab = Vocabulary.build(["zebra", "apple"])
        assert vocab.tokens[:5] == ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"]
        assert vocab.id_of("apple") == 5
        assert vocab.id_of("missing") == 1

    def test_save_load_round_trip(self, tmp_path):
        vocab = Vocabulary.build(["dog", "cat"])
        path = tmp_path / "vocab.txt"
        vocab.save(path)
        assert Vocabulary.load(path).tokens == vocab.tokens
