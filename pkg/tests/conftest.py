import numpy as np
import pytest
import scipy.stats

from ffmagic import gaussian as G, oracle as O


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def chisquare_pvalue(counts, probs, n, min_expected=10):
    """Chi-square p-value of observed counts against a known distribution.

    Bins with expected count below ``min_expected`` are merged into one tail
    bucket; zero-probability bins must be unpopulated.
    """
    counts = np.asarray(counts)
    probs = np.asarray(probs)
    assert counts[probs <= 1e-14].sum() == 0
    keep = probs * n >= min_expected
    tail = (~keep) & (probs > 1e-14)
    obs = counts[keep].astype(float)
    exp = probs[keep] * n
    if tail.any():
        obs = np.append(obs, counts[tail].sum())
        exp = np.append(exp, probs[tail].sum() * n)
    _, p = scipy.stats.chisquare(obs, exp * obs.sum() / exp.sum())
    return float(p)


def paired_random_state(L, n_rot, seed, occ=None):
    """The same random pure Gaussian state in both representations.

    Returns (GaussianState, dense state vector): an occupation product
    rotated by a shared sequence of random Majorana Givens rotations.
    """
    gen = np.random.default_rng(seed)
    if occ is None:
        occ = [i % 2 for i in range(L)]
    psi = O.basis_state(occ)
    state = G.build_occupation_product(occ)
    for (a, b, th) in O.random_givens_sequence(L, n_rot, gen):
        psi = O.givens_unitary(L, a, b, th) @ psi
        state = G.rotate(state, O.givens_rotation_matrix(2 * L, a, b, th))
    return state, psi
