"""Brute-force dense Hilbert-space oracle (L <= ~7).

Everything here is built from explicit 2^L x 2^L matrices and is used to
validate the covariance-matrix code paths: same Majorana convention
(gamma[2i] = Z..Z X_i, gamma[2i+1] = Z..Z Y_i under Jordan-Wigner, which
realizes gamma[2i] = c^dag + c and gamma[2i+1] = i(c^dag - c)), same
string labelling, same state constructors.  Nothing in this module calls
the covariance implementations.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
import scipy.linalg

_EYE2 = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def _kron_chain(ops) -> np.ndarray:
    out = ops[0]
    for op in ops[1:]:
        out = np.kron(out, op)
    return out


@lru_cache(maxsize=8)
def majorana_matrices(L: int) -> tuple[np.ndarray, ...]:
    """The 2L Majorana operators as dense matrices (site 0 leftmost)."""
    gammas = []
    for i in range(L):
        for local in (_X, _Y):
            ops = [_Z] * i + [local] + [_EYE2] * (L - i - 1)
            gammas.append(_kron_chain(ops))
    return tuple(gammas)


def annihilators(L: int):
    """Dense c_i = (gamma[2i] + i gamma[2i+1]) / 2."""
    g = majorana_matrices(L)
    return [(g[2 * i] + 1j * g[2 * i + 1]) / 2.0 for i in range(L)]


def basis_state(occ) -> np.ndarray:
    """State vector |occ> in the computational basis (site 0 = leftmost qubit)."""
    occ = np.asarray(occ, dtype=int)
    L = occ.size
    index = 0
    for i, n in enumerate(occ):
        index += int(n) << (L - 1 - i)
    psi = np.zeros(2**L, dtype=complex)
    psi[index] = 1.0
    return psi


def density_matrix(psi: np.ndarray) -> np.ndarray:
    return np.outer(psi, psi.conj())


def covariance_of(rho: np.ndarray, L: int) -> np.ndarray:
    """Gamma_{mu nu} = -(i/2) Tr([gamma_mu, gamma_nu] rho)."""
    g = majorana_matrices(L)
    out = np.zeros((2 * L, 2 * L))
    for mu in range(2 * L):
        for nu in range(mu + 1, 2 * L):
            comm = g[mu] @ g[nu] - g[nu] @ g[mu]
            val = -0.5j * np.trace(comm @ rho)
            out[mu, nu] = val.real
            out[nu, mu] = -val.real
    return out


def string_expectation(rho: np.ndarray, L: int, x) -> complex:
    """Tr(rho gamma^x) with gamma^x = gamma_1^{x_1} ... gamma_{2L}^{x_{2L}}."""
    g = majorana_matrices(L)
    op = np.eye(2**L, dtype=complex)
    for mu in range(2 * L):
        if x[mu]:
            op = op @ g[mu]
    return complex(np.trace(rho @ op))


def all_string_probabilities(rho: np.ndarray, L: int) -> np.ndarray:
    """pi(x) for all 4^L strings; index encodes x_1 as its least significant bit."""
    D = 2**L
    purity = float(np.trace(rho @ rho).real)
    probs = np.empty(4**L)
    for code in range(4**L):
        x = [(code >> k) & 1 for k in range(2 * L)]
        amp = string_expectation(rho, L, x)
        probs[code] = (abs(amp) ** 2) / (D * purity)
    return probs


def sre_from_probabilities(probs: np.ndarray, L: int, alpha: float) -> float:
    """M_alpha from an explicit string distribution."""
    p = probs[probs > 0]
    if alpha == 1:
        return float(-(p * np.log(p)).sum() - L * math.log(2.0))
    return float(np.log((p**alpha).sum()) / (1.0 - alpha) - L * math.log(2.0))


def sre_exact(rho: np.ndarray, L: int, alpha: float) -> float:
    return sre_from_probabilities(all_string_probabilities(rho, L), L, alpha)


def pauli_string_probabilities(rho: np.ndarray, L: int) -> np.ndarray:
    """Same distribution enumerated over Pauli strings (independent route)."""
    D = 2**L
    purity = float(np.trace(rho @ rho).real)
    singles = (_EYE2, _X, _Y, _Z)
    probs = np.empty(4**L)
    for code in range(4**L):
        ops = []
        c = code
        for _ in range(L):
            ops.append(singles[c % 4])
            c //= 4
        P = _kron_chain(ops)
        tr = np.trace(P @ rho)
        probs[code] = (abs(tr) ** 2) / (D * purity)
    return probs


# ---------------------------------------------------------------------------
# Hamiltonians and evolution
# ---------------------------------------------------------------------------

def hopping_hamiltonian(L: int) -> np.ndarray:
    """H = -1/2 sum_j (c_j^dag c_{j+1} + h.c.) on a periodic ring."""
    c = annihilators(L)
    H = np.zeros((2**L, 2**L), dtype=complex)
    for j in range(L):
        k = (j + 1) % L
        H += c[j].conj().T @ c[k] + c[k].conj().T @ c[j]
    return -0.5 * H


def tfim_hamiltonian(L: int, h: float, J: float = 1.0) -> np.ndarray:
    """H = -J sum sigma^x_j sigma^x_{j+1} - h sum sigma^z_j, spin-periodic."""
    H = np.zeros((2**L, 2**L), dtype=complex)
    for j in range(L):
        k = (j + 1) % L
        ops = [_EYE2] * L
        ops[j] = _X
        ops[k] = _X
        H -= J * _kron_chain(ops)
        ops = [_EYE2] * L
        ops[j] = _Z
        H -= h * _kron_chain(ops)
    return H


def noclick_hamiltonian(L: int, J: float, gamma: float) -> np.ndarray:
    """H_eff = J sum_{j<L-1} sigma^x_j sigma^x_{j+1} - i gamma/2 sum_j n_j, open chain."""
    H = np.zeros((2**L, 2**L), dtype=complex)
    for j in range(L - 1):
        ops = [_EYE2] * L
        ops[j] = _X
        ops[j + 1] = _X
        H += J * _kron_chain(ops)
    for j in range(L):
        ops = [_EYE2] * L
        ops[j] = (_EYE2 - _Z) / 2.0
        H += -0.5j * gamma * _kron_chain(ops)
    return H


def evolve(psi: np.ndarray, H: np.ndarray, t: float, normalize: bool = False) -> np.ndarray:
    """psi(t) = exp(-i H t) psi, optionally renormalized (non-Hermitian H)."""
    out = scipy.linalg.expm(-1j * H * t) @ psi
    if normalize:
        out = out / np.linalg.norm(out)
    return out


def number_operator(L: int, site: int) -> np.ndarray:
    ops = [_EYE2] * L
    ops[site] = (_EYE2 - _Z) / 2.0
    return _kron_chain(ops)


def occupation_expectation(psi: np.ndarray, L: int, site: int) -> float:
    return float((psi.conj() @ (number_operator(L, site) @ psi)).real)


def project_occupation(psi: np.ndarray, L: int, site: int, outcome: int) -> np.ndarray:
    """Normalized P psi with P = n_site (outcome 1) or 1 - n_site (outcome 0)."""
    n_op = number_operator(L, site)
    P = n_op if outcome == 1 else np.eye(2**L, dtype=complex) - n_op
    out = P @ psi
    norm = np.linalg.norm(out)
    if norm < 1e-12:
        raise ValueError("projector annihilates the state (forbidden outcome)")
    return out / norm


def givens_unitary(L: int, a: int, b: int, theta: float) -> np.ndarray:
    """exp(theta/2 gamma_a gamma_b): rotates the (a, b) Majorana plane by theta."""
    g = majorana_matrices(L)
    return scipy.linalg.expm(0.5 * theta * (g[a] @ g[b]))


def random_givens_sequence(L: int, n_rot: int, rng: np.random.Generator):
    """Shared recipe for random pure Gaussian states in both representations."""
    seq = []
    for _ in range(n_rot):
        a, b = rng.choice(2 * L, size=2, replace=False)
        theta = rng.uniform(0.0, 2.0 * math.pi)
        seq.append((int(a), int(b), float(theta)))
    return seq


def givens_rotation_matrix(n: int, a: int, b: int, theta: float) -> np.ndarray:
    """SO(n) matrix matching :func:`givens_unitary` conjugation on covariances."""
    O = np.eye(n)
    O[a, a] = O[b, b] = math.cos(theta)
    O[a, b] = math.sin(theta)
    O[b, a] = -math.sin(theta)
    return O
