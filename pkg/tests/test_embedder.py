import hashlib

import httpx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from chainshort.embedder import HttpEmbedder, OfflineEmbedder, cosine
from chainshort.errors import InvalidArgument, ProviderError


def hashing_oracle(text: str, dim: int = 256, seed: int = 20250101) -> np.ndarray:
    """Independent re-statement of the offline embedder's contract."""
    key = seed.to_bytes(8, "little")
    vec = np.zeros(dim)
    token = ""
    for ch in text.lower() + " ":
        if ch.isascii() and (ch.isalnum() or ch == "_"):
            token += ch
        elif token:
            h = hashlib.blake2b(token.encode(), digest_size=8, key=key).digest()
            vec[int.from_bytes(h, "little") % dim] += 1
            token = ""
    n = np.linalg.norm(vec)
    return vec / n if n else vec


def test_empty_text_is_zero_vector(embedder):
    assert not embedder.embed("").any()
    assert not embedder.embed("   \n\t").any()


def test_deterministic(embedder):
    a = embedder.embed("photo defogger with sliders")
    b = OfflineEmbedder().embed("photo defogger with sliders")
    assert a.tobytes() == b.tobytes()


def test_bag_of_tokens_order_invariance(embedder):
    expected = hashing_oracle("alpha beta")
    assert np.array_equal(embedder.embed("alpha beta"), embedder.embed("beta alpha"))
    np.testing.assert_allclose(embedder.embed("alpha beta"), expected, atol=0)


@pytest.mark.parametrize("text", ["def main(): return x_1 + y", "Todo APP with  PRIORITIES!", "a a a b"])
def test_matches_hashing_oracle(embedder, text):
    np.testing.assert_allclose(embedder.embed(text), hashing_oracle(text), atol=1e-15)


def test_unit_norm(embedder):
    assert abs(np.linalg.norm(embedder.embed("some words here")) - 1) < 1e-6


def test_cosine_examples():
    assert cosine(np.array([1.0, 0.0]), np.array([0.0, 1.0])) == 0
    u = np.array([0.6, 0.8])
    assert cosine(u, u) == pytest.approx(1.0, abs=1e-12)
    assert cosine(np.array([1.0, 0.0]), np.array([0.6, 0.8])) == pytest.approx(0.6, abs=1e-12)
    assert cosine(np.zeros(2), u) == 0.0


def test_cosine_dimension_mismatch():
    with pytest.raises(InvalidArgument):
        cosine(np.ones(2), np.ones(3))


finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=200)
@given(arrays(float, 8, elements=finite), arrays(float, 8, elements=finite))
def test_cosine_properties(u, v):
    c = cosine(u, v)
    assert abs(c) <= 1 + 1e-12
    assert c == pytest.approx(cosine(v, u), abs=1e-12)
    if np.linalg.norm(u) > 1e-6:
        assert cosine(u, u) == pytest.approx(1.0, abs=1e-9)


def test_http_embedder_wire_format():
    seen = {}

    def handler(request: httpx.Request) -> httpx.Response:
        seen["body"] = request.read()
        seen["auth"] = request.headers.get("authorization")
        return httpx.Response(200, json={"data": [{"embedding": [3.0, 4.0]}]})

    emb = HttpEmbedder("http://x/embeddings", "m", "secret", client=httpx.Client(transport=httpx.MockTransport(handler)))
    vec = emb.embed("hello")
    np.testing.assert_allclose(vec, [0.6, 0.8])
    assert b'"input":"hello"' in seen["body"].replace(b" ", b"") and seen["auth"] == "Bearer secret"


def test_http_embedder_retries_then_fails():
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(503)

    emb = HttpEmbedder(
        "http://x", "m", backoff_seconds=0.0, client=httpx.Client(transport=httpx.MockTransport(handler))
    )
    with pytest.raises(ProviderError) as info:
        emb.embed("hello")
    assert len(calls) == 3 and info.value.attempts == 3
