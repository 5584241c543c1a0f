import numpy as np
import pytest

from weakbox import FeatureBundle, GridGeometry, TokenRecord


def softmax_row(logits):
    e = np.exp(np.asarray(logits, dtype=np.float64))
    return e / e.sum()


def make_token(attention=None, gradient=None, n_p=None, text="tok", rng=None):
    """TokenRecord with a valid softmax attention row."""
    if attention is None:
        rng = rng or np.random.default_rng(0)
        attention = softmax_row(rng.normal(size=n_p + 1))
    attention = np.asarray(attention, dtype=np.float64)
    if gradient is None:
        rng = rng or np.random.default_rng(1)
        gradient = rng.normal(size=attention.shape[0])
    return TokenRecord(text=text, char_start=0, char_end=max(len(text), 1),
                       attention_row=attention, gradient_row=gradient)


def make_bundle(grid=4, d_vit=8, n_tokens=2, patch_size=16, seed=0):
    rng = np.random.default_rng(seed)
    g = GridGeometry.from_image(grid * patch_size, grid * patch_size, patch_size)
    n_p = g.n_patches
    tokens = tuple(
        make_token(n_p=n_p, text=f"word{i}", rng=rng) for i in range(n_tokens)
    )
    caption = " ".join(t.text for t in tokens)
    return FeatureBundle(geometry=g, caption=caption, tokens=tokens,
                         vit_keys=rng.normal(size=(n_p, d_vit)))


@pytest.fixture
def grid4():
    return GridGeometry.from_image(64, 64, 16)
