"""Shared hypothesis strategies."""

import numpy as np
from hypothesis import strategies as st


@st.composite
def unit_matrices(draw, k_min=2, k_max=6, d_max=10):
    K = draw(st.integers(k_min, k_max))
    D = draw(st.integers(K, max(K, d_max)))
    seed = draw(st.integers(0, 2**32 - 1))
    A = np.random.default_rng(seed).standard_normal((K, D))
    return A / np.linalg.norm(A, axis=1, keepdims=True)


vectors = st.integers(1, 8).flatmap(
    lambda d: st.tuples(st.integers(0, 2**32 - 1), st.just(d))
).map(lambda s: np.random.default_rng(s[0]).standard_normal((2, s[1])))
