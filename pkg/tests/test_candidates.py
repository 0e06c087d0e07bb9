import numpy as np
import pytest

from kpimportance.candidates import NGramComposer, candidate_count, compose_ngrams, enumerate_spans
from kpimportance.errors import DimensionError
from kpimportance.gradcheck import check_composer, run_gradient_suite


def test_enumerate_spans_examples():
    assert len(enumerate_spans(6, 5)) == 20
    assert enumerate_spans(1, 5) == [(0, 1)]
    assert enumerate_spans(3, 2) == [(0, 1), (1, 1), (2, 1), (0, 2), (1, 2)]


@pytest.mark.parametrize("M", range(1, 12))
@pytest.mark.parametrize("N", range(1, 7))
def test_span_count_and_bounds(M, N):
    spans = enumerate_spans(M, N)
    assert len(spans) == candidate_count(M, N) == sum(M - n + 1 for n in range(1, min(N, M) + 1))
    assert all(i >= 0 and 1 <= n <= N and i + n <= M for i, n in spans)
    assert len(set(spans)) == len(spans)


def test_compose_ngrams_shape_and_surfaces(rng):
    tokens = ["error", "bounds", "for", "the", "harmonic", "balance"]
    comp = NGramComposer(4, 5, rng)
    cands = compose_ngrams(rng.normal(size=(6, 4)), comp, tokens)
    assert len(cands) == 20
    assert all(c.repr.shape == (4,) for c in cands)
    two = next(c for c in cands if c.span == (0, 2))
    assert two.surface == "error bounds" and two.stemmed == "error bound"


def test_unigram_identity_filter_is_relu(rng):
    comp = NGramComposer(3, 2, rng)
    comp.W[0].value[...] = np.eye(3)
    comp.b[0].value[...] = 0.0
    H = rng.normal(size=(4, 3))
    R = comp.represent(H)
    assert np.array_equal(R[:4], np.maximum(H, 0.0))


def test_identical_windows_give_identical_reprs(rng):
    comp = NGramComposer(3, 3, rng)
    row_a, row_b = rng.normal(size=3), rng.normal(size=3)
    H = np.vstack([row_a, row_b, rng.normal(size=3), row_a, row_b])
    cands = {c.span: c.repr for c in compose_ngrams(H, comp, list("abcab"))}
    assert np.array_equal(cands[(0, 2)], cands[(3, 2)])


def test_compose_dimension_mismatch(rng):
    comp = NGramComposer(3, 2, rng)
    with pytest.raises(DimensionError):
        comp.compose(rng.normal(size=(4, 5)))
    with pytest.raises(DimensionError):
        compose_ngrams(rng.normal(size=(4, 3)), comp, ["a"])


def test_compose_gradient_check():
    (err,) = run_gradient_suite(points=5, seed=11, checks={"c": check_composer}).values()
    assert err <= 1e-5


def test_compose_matches_conv_window(rng):
    comp = NGramComposer(3, 3, rng)
    H = rng.normal(size=(5, 3))
    R, _ = comp.compose(H)
    for row, (i, n) in zip(R, enumerate_spans(5, 3)):
        assert np.allclose(row, comp.window(H, n, i), rtol=0, atol=1e-14)
