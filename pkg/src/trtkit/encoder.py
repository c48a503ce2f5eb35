"""Knowledge-fused input assembly and a small trainable transformer encoder.

The encoder is deliberately tiny and written directly in numpy (double
precision, no dropout, no biases outside layer norm) so that every
acceptance property - masked-attention isolation, gradient checks, bitwise
reproducibility - can be verified exactly.

Input layout is ``[CLS] query candidate [SEP] s_1 [SEP] ... s_K [SEP]``.
Segment 0 covers the query pair including [CLS] and the first [SEP]; each
knowledge snippet, including its trailing [SEP], gets segment i >= 1. The
visibility mask is an additive T x T matrix over those segments:

* EQUATION     - query sees everything, each snippet sees only itself.
* PROSE_STRICT - like EQUATION, but only the query token a snippet is linked
                 to may look into that snippet.
* FULL         - all zeros; the unmasked ablation baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .knowledge import KnowledgeSet
from .text import Token

PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = 0, 1, 2, 3, 4
SPECIAL_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]")

QUERY_SEGMENT = 0
NEG_LARGE = 1e9  # additive -NEG_LARGE stands in for -inf ahead of softmax

EQUATION = "EQUATION"
PROSE_STRICT = "PROSE_STRICT"
FULL = "FULL"
MASK_MODES = (EQUATION, PROSE_STRICT, FULL)

_LN_EPS = 1e-5
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Vocabulary:
    """Token list where line number equals id; ids 0..4 are reserved specials."""

    def __init__(self, tokens: list[str]):
        if tuple(tokens[:5]) != SPECIAL_TOKENS:
            raise ValueError(f"vocabulary must start with {SPECIAL_TOKENS}")
        if len(set(tokens)) != len(tokens):
            raise ValueError("vocabulary contains duplicate tokens")
        self.tokens = list(tokens)
        self.ids = {t: i for i, t in enumerate(tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    @classmethod
    def build(cls, surfaces) -> "Vocabulary":
        """Specials followed by the sorted unique surfaces."""
        body = sorted(set(surfaces) - set(SPECIAL_TOKENS))
        return cls(list(SPECIAL_TOKENS) + body)

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh if line.rstrip("\n")])

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for token in self.tokens:
                fh.write(token + "\n")

    def id_of(self, surface: str) -> int:
        return self.ids.get(surface, UNK_ID)

    def encode(self, surfaces) -> list[int]:
        return [self.id_of(s) for s in surfaces]


def _surfaces(tokens) -> list[str]:
    return [t.surface if isinstance(t, Token) else t for t in tokens]


@dataclass(eq=False)
class FusedInput:
    """Token ids, per-token segment labels, and snippet link positions.

    ``link_starts`` holds ``(fused_position, segment)`` pairs: the fused-input
    index of the query token a snippet is linked to.
    """

    token_ids: np.ndarray
    segments: np.ndarray
    link_starts: list[tuple[int, int]] = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.token_ids.shape[0])


def build_input(
    query_tokens,
    candidate_tokens,
    snippets: KnowledgeSet | None,
    vocab: Vocabulary,
    max_len: int,
) -> FusedInput:
    """Assemble ``[CLS] q c [SEP] | s_1 [SEP] | ... | s_K [SEP]``.

    When the result exceeds ``max_len``, whole snippets are dropped from the
    end first; only then is the query pair tail-truncated. OOV tokens map to
    [UNK].
    """
    from .text import tokenize

    if max_len < 2:
        raise ValueError("max_len must be at least 2")
    pair = _surfaces(query_tokens) + _surfaces(candidate_tokens)
    query_ids = [CLS_ID] + vocab.encode(pair) + [SEP_ID]

    snippet_list = list(snippets) if snippets is not None else []
    snippet_ids = [
        vocab.encode([t.surface for t in tokenize(s.text)]) + [SEP_ID] for s in snippet_list
    ]

    total = len(query_ids) + sum(len(ids) for ids in snippet_ids)
    while snippet_ids and total > max_len:
        total -= len(snippet_ids.pop())
        snippet_list.pop()
    if total > max_len:
        query_ids = [CLS_ID] + query_ids[1 : max_len - 1] + [SEP_ID]

    ids = list(query_ids)
    segments = [QUERY_SEGMENT] * len(query_ids)
    link_starts: list[tuple[int, int]] = []
    for seg, (snippet, s_ids) in enumerate(zip(snippet_list, snippet_ids), start=1):
        ids.extend(s_ids)
        segments.extend([seg] * len(s_ids))
        if snippet.linked_span is not None:
            pos = 1 + snippet.linked_span[0]
            if 0 < pos < len(query_ids) - 1:  # still inside the kept pair tokens
                link_starts.append((pos, seg))

    return FusedInput(
        np.asarray(ids, dtype=np.int64),
        np.asarray(segments, dtype=np.int64),
        link_starts,
    )


def build_visibility_mask(fused: FusedInput, mode: str = EQUATION) -> np.ndarray:
    """T x T additive mask with entries in {0, -NEG_LARGE}."""
    if mode not in MASK_MODES:
        raise ValueError(f"unknown mask mode {mode!r}")
    seg = fused.segments
    n = seg.shape[0]
    if mode == FULL:
        return np.zeros((n, n), dtype=np.float64)
    is_query = seg == QUERY_SEGMENT
    same_segment = seg[:, None] == seg[None, :]
    allowed = (is_query[:, None] & is_query[None, :]) | (same_segment & ~is_query[:, None])
    if mode == EQUATION:
        allowed |= is_query[:, None] & ~is_query[None, :]
    else:  # PROSE_STRICT: only the linked query token sees into a snippet
        for pos, segment in fused.link_starts:
            allowed[pos, seg == segment] = True
    return np.where(allowed, 0.0, -NEG_LARGE)


# ---------------------------------------------------------------------------
# Encoder parameters
# ---------------------------------------------------------------------------


@dataclass
class EncoderConfig:
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    max_len: int = 128
    vocab_size: int = 0

    def __post_init__(self):
        if self.d_model % self.n_heads != 0:
            raise ValueError("d_model must be divisible by n_heads")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads


@dataclass
class LayerParams:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    ln1_g: np.ndarray
    ln1_b: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    ln2_g: np.ndarray
    ln2_b: np.ndarray


@dataclass
class EncoderParams:
    """All trainable tensors of the encoder (the scoring head lives elsewhere)."""

    tok_emb: np.ndarray
    pos_emb: np.ndarray
    layers: list[LayerParams]
    vocab_proj: np.ndarray

    def named_arrays(self):
        yield "tok_emb", self.tok_emb
        yield "pos_emb", self.pos_emb
        for i, layer in enumerate(self.layers):
            for name in ("wq", "wk", "wv", "wo", "ln1_g", "ln1_b", "w1", "w2", "ln2_g", "ln2_b"):
                yield f"layers.{i}.{name}", getattr(layer, name)
        yield "vocab_proj", self.vocab_proj

    def zeros_like(self) -> "EncoderParams":
        return EncoderParams(
            np.zeros_like(self.tok_emb),
            np.zeros_like(self.pos_emb),
            [
                LayerParams(
                    *(np.zeros_like(getattr(l, n)) for n in (
                        "wq", "wk", "wv", "wo", "ln1_g", "ln1_b", "w1", "w2", "ln2_g", "ln2_b"
                    ))
                )
                for l in self.layers
            ],
            np.zeros_like(self.vocab_proj),
        )


def init_params(config: EncoderConfig, rng: np.random.Generator, scale: float = 0.02) -> EncoderParams:
    """Gaussian init (std ``scale``); layer-norm scales 1, offsets 0."""
    d = config.d_model
    if config.vocab_size < len(SPECIAL_TOKENS):
        raise ValueError("vocab_size must cover the special tokens")

    def g(*shape):
        return rng.normal(0.0, scale, size=shape)

    layers = [
        LayerParams(
            wq=g(d, d),
            wk=g(d, d),
            wv=g(d, d),
            wo=g(d, d),
            ln1_g=np.ones(d),
            ln1_b=np.zeros(d),
            w1=g(d, 4 * d),
            w2=g(4 * d, d),
            ln2_g=np.ones(d),
            ln2_b=np.zeros(d),
        )
        for _ in range(config.n_layers)
    ]
    return EncoderParams(
        tok_emb=g(config.vocab_size, d),
        pos_emb=g(config.max_len, d),
        layers=layers,
        vocab_proj=g(d, config.vocab_size),
    )


# ---------------------------------------------------------------------------
# Forward pass (batched), with caches mirrored by the backward pass
# ---------------------------------------------------------------------------


def gelu(u: np.ndarray) -> np.ndarray:
    return 0.5 * u * (1.0 + erf(u / _SQRT2))


def _gelu_grad(u: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(u / _SQRT2)) + u * _INV_SQRT_2PI * np.exp(-0.5 * u * u)


def softmax_rows(scores: np.ndarray) -> np.ndarray:
    """Row softmax over the last axis with max-subtraction for stability."""
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _layer_norm(x: np.ndarray, g: np.ndarray, b: np.ndarray):
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = centered * inv_std
    return g * xhat + b, (xhat, inv_std)


def _layer_norm_backward(dy, cache, g):
    xhat, inv_std = cache
    dg = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    db = dy.sum(axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * g
    dx = inv_std * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _split_heads(x: np.ndarray, n_heads: int) -> np.ndarray:
    b, t, d = x.shape
    return x.reshape(b, t, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(x: np.ndarray) -> np.ndarray:
    b, a, t, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(b, t, a * dh)


def attention(q: np.ndarray, k: np.ndarray, v: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Single-head masked attention: softmax_rows(q k^T / sqrt(d_h) + mask) v."""
    scores = q @ k.T / math.sqrt(q.shape[-1]) + mask
    return softmax_rows(scores) @ v


def _layer_forward(x, mask, layer: LayerParams, n_heads: int):
    d_head = x.shape[-1] // n_heads
    q = _split_heads(x @ layer.wq, n_heads)
    k = _split_heads(x @ layer.wk, n_heads)
    v = _split_heads(x @ layer.wv, n_heads)
    scores = q @ k.transpose(0, 1, 3, 2) / math.sqrt(d_head) + mask[:, None, :, :]
    probs = softmax_rows(scores)
    context = _merge_heads(probs @ v)
    attn_out = context @ layer.wo
    h1, ln1_cache = _layer_norm(x + attn_out, layer.ln1_g, layer.ln1_b)
    u = h1 @ layer.w1
    gelu_u = gelu(u)
    h2, ln2_cache = _layer_norm(h1 + gelu_u @ layer.w2, layer.ln2_g, layer.ln2_b)
    cache = (x, q, k, v, probs, context, h1, ln1_cache, u, gelu_u, ln2_cache)
    return h2, cache


def _layer_backward(dh2, cache, layer: LayerParams, grads: LayerParams, n_heads: int):
    x, q, k, v, probs, context, h1, ln1_cache, u, gelu_u, ln2_cache = cache
    d_head = x.shape[-1] // n_heads

    dr2, dg2, db2 = _layer_norm_backward(dh2, ln2_cache, layer.ln2_g)
    grads.ln2_g += dg2
    grads.ln2_b += db2

    dgelu = dr2 @ layer.w2.T
    grads.w2 += np.einsum("btf,btd->fd", gelu_u, dr2)
    du = dgelu * _gelu_grad(u)
    grads.w1 += np.einsum("btd,btf->df", h1, du)
    dh1 = dr2 + du @ layer.w1.T

    dr1, dg1, db1 = _layer_norm_backward(dh1, ln1_cache, layer.ln1_g)
    grads.ln1_g += dg1
    grads.ln1_b += db1

    dattn = dr1 @ layer.wo.T
    grads.wo += np.einsum("btd,bte->de", context, dr1)
    dctx = _split_heads(dattn, n_heads)

    dprobs = dctx @ v.transpose(0, 1, 3, 2)
    dv = probs.transpose(0, 1, 3, 2) @ dctx
    dscores = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
    dq = dscores @ k / math.sqrt(d_head)
    dk = dscores.transpose(0, 1, 3, 2) @ q / math.sqrt(d_head)

    dx = dr1
    for dmat, w, name in ((dq, layer.wq, "wq"), (dk, layer.wk, "wk"), (dv, layer.wv, "wv")):
        merged = _merge_heads(dmat)
        dx = dx + merged @ w.T
        setattr(grads, name, getattr(grads, name) + np.einsum("btd,bte->de", x, merged))
    return dx


def encode_batch(
    ids: np.ndarray,
    mask: np.ndarray,
    params: EncoderParams,
    config: EncoderConfig,
    return_cache: bool = False,
):
    """Run the encoder over a batch: ids (B, T), mask (B, T, T) -> (B, T, d)."""
    b, t = ids.shape
    if t > config.max_len:
        raise ValueError(f"sequence length {t} exceeds max_len {config.max_len}")
    x = params.tok_emb[ids] + params.pos_emb[:t]
    embedded = x
    caches = []
    for layer in params.layers:
        x, cache = _layer_forward(x, mask, layer, config.n_heads)
        caches.append(cache)
    if return_cache:
        return x, (ids, embedded, caches)
    return x


def encode_backward(
    dout: np.ndarray,
    cache,
    params: EncoderParams,
    config: EncoderConfig,
    grads: EncoderParams,
) -> None:
    """Accumulate gradients for every encoder tensor into ``grads``."""
    ids, _, layer_caches = cache
    dx = dout
    for layer, lcache, lgrads in zip(
        reversed(params.layers), reversed(layer_caches), reversed(grads.layers)
    ):
        dx = _layer_backward(dx, lcache, layer, lgrads, config.n_heads)
    np.add.at(grads.tok_emb, ids, dx)
    grads.pos_emb[: dx.shape[1]] += dx.sum(axis=0)


def encode(
    fused: FusedInput,
    mask: np.ndarray,
    params: EncoderParams,
    config: EncoderConfig,
) -> np.ndarray:
    """Final-layer hidden states (T, d) for one fused input."""
    hidden = encode_batch(fused.token_ids[None, :], mask[None, :, :], params, config)
    return hidden[0]


def pad_batch(items: list[tuple[np.ndarray, np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
    """Stack variable-length (ids, mask) pairs, padding with [PAD].

    Padded rows may attend only to themselves and nothing attends to them, so
    padding never changes the states at real positions.
    """
    t_max = max(ids.shape[0] for ids, _ in items)
    ids_out = np.full((len(items), t_max), PAD_ID, dtype=np.int64)
    mask_out = np.full((len(items), t_max, t_max), -NEG_LARGE, dtype=np.float64)
    for i, (ids, mask) in enumerate(items):
        t = ids.shape[0]
        ids_out[i, :t] = ids
        mask_out[i, :t, :t] = mask
        if t < t_max:
            idx = np.arange(t, t_max)
            mask_out[i, idx, idx] = 0.0
    return ids_out, mask_out


# ---------------------------------------------------------------------------
# Parameter checkpointing
# ---------------------------------------------------------------------------


def save_params(path, params: EncoderParams, config: EncoderConfig, extra: dict | None = None) -> None:
    """Write a .npz of named float64 arrays plus config scalars (byte-exact)."""
    arrays = {f"param.{name}": arr for name, arr in params.named_arrays()}
    arrays["cfg.d_model"] = np.int64(config.d_model)
    arrays["cfg.n_heads"] = np.int64(config.n_heads)
    arrays["cfg.n_layers"] = np.int64(config.n_layers)
    arrays["cfg.max_len"] = np.int64(config.max_len)
    arrays["cfg.vocab_size"] = np.int64(config.vocab_size)
    for name, arr in (extra or {}).items():
        arrays[f"extra.{name}"] = arr
    np.savez(path, **arrays)


def load_params(path) -> tuple[EncoderParams, EncoderConfig, dict]:
    with np.load(path, allow_pickle=False) as data:
        config = EncoderConfig(
            d_model=int(data["cfg.d_model"]),
            n_heads=int(data["cfg.n_heads"]),
            n_layers=int(data["cfg.n_layers"]),
            max_len=int(data["cfg.max_len"]),
            vocab_size=int(data["cfg.vocab_size"]),
        )
        layers = [
            LayerParams(
                **{
                    name: data[f"param.layers.{i}.{name}"]
                    for name in (
                        "wq", "wk", "wv", "wo", "ln1_g", "ln1_b", "w1", "w2", "ln2_g", "ln2_b"
                    )
                }
            )
            for i in range(config.n_layers)
        ]
        params = EncoderParams(
            tok_emb=data["param.tok_emb"],
            pos_emb=data["param.pos_emb"],
            layers=layers,
            vocab_proj=data["param.vocab_proj"],
        )
        extra = {
            name[len("extra."):]: data[name] for name in data.files if name.startswith("extra.")
        }
    return params, config, extra
