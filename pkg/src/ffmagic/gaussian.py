"""Covariance-matrix algebra for fermionic Gaussian states.

Conventions (fixed once, used by every module and by the dense oracle):

* Sites are 0-based.  Site ``i`` owns the Majorana pair ``(2i, 2i+1)`` with

      gamma[2i]   = c_i^dag + c_i
      gamma[2i+1] = i (c_i^dag - c_i)

  so that ``i gamma[2i] gamma[2i+1] = 2 n_i - 1``.
* The covariance matrix is ``Gamma_{mu nu} = -(i/2) Tr([gamma_mu, gamma_nu] rho)``,
  a real antisymmetric 2L x 2L matrix.  The vacuum is the direct sum of
  ``[[0, 1], [-1, 0]]`` blocks and a site with occupation ``n`` carries the
  block ``[[0, 1-2n], [2n-1, 0]]``.
* The Nambu correlation matrix ``C_{mu nu} = <cvec_mu^dag cvec_nu>`` uses the
  interleaved ordering ``cvec = (c_0, c_0^dag, c_1, c_1^dag, ...)``; the two
  descriptions are related by ``Gamma = -i (2 Omega^* C Omega^T - 1)`` with the
  unitary per-site block ``Omega_i = [[1, 1], [-i, i]] / sqrt(2)``.

Majorana monomials ``gamma^x`` are labelled by 2L-bit strings ``x``; their
expectation over a Gaussian state is ``i^{|x|/2} Pf(Gamma|_x)`` and the
squared, purity-normalized expectations form the string distribution

    pi(x) = det(Gamma|_x) / det(1 + Gamma),

whose marginals over a prefix of fixed bits reduce to a single determinant.
All determinants are evaluated as (sign, log) pairs so system sizes of a few
hundred sites stay in range.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConditioningError
from .pfaffian import pfaffian_sign_log

logger = logging.getLogger(__name__)

ANTISYMMETRY_TOL = 1e-12
SPECTRAL_TOL = 1e-10
PURITY_TOL = 1e-8
PROBABILITY_CLAMP_EPS = 1e-12


class ClampCounter:
    """Counts probabilities clamped from small negative round-off to zero."""

    def __init__(self) -> None:
        self.count = 0

    def clamp(self, value: float, eps: float = PROBABILITY_CLAMP_EPS) -> float:
        if value < 0.0:
            if value < -eps:
                raise ConditioningError(f"probability {value} below -{eps}; matrix badly conditioned")
            self.count += 1
            return 0.0
        return value

    def reset(self) -> int:
        n, self.count = self.count, 0
        return n


#: Process-wide tally of round-off clamps; reported in run manifests.
CLAMP_EVENTS = ClampCounter()


def validate_covariance(gamma: np.ndarray) -> np.ndarray:
    """Check antisymmetry and the spectral bound; return the array as float."""
    g = np.asarray(gamma, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] % 2 != 0 or g.shape[0] == 0:
        raise ValueError(f"covariance must be 2L x 2L with L >= 1, got shape {g.shape}")
    if np.max(np.abs(g + g.T)) > ANTISYMMETRY_TOL * max(1.0, float(np.max(np.abs(g)))):
        raise ValueError("covariance matrix is not antisymmetric within 1e-12")
    smax = float(np.linalg.norm(g, 2))
    if smax > 1.0 + SPECTRAL_TOL:
        raise ValueError(f"covariance spectral norm {smax} exceeds 1 + 1e-10")
    return g


@dataclass(frozen=True)
class GaussianState:
    """A fermionic Gaussian state of ``L`` sites.

    Immutable value object: ``gamma`` is the 2L x 2L real antisymmetric
    covariance matrix (stored read-only), ``pure`` records whether
    ``Tr rho^2 = 1`` within 1e-8, and ``number_conserving`` optionally marks
    states known to carry no anomalous correlations.
    """

    gamma: np.ndarray
    L: int
    pure: bool
    number_conserving: bool | None = field(default=None)

    def __post_init__(self) -> None:
        g = np.asarray(self.gamma, dtype=float)
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        if g.shape != (2 * self.L, 2 * self.L):
            raise ValueError(f"gamma shape {g.shape} does not match L={self.L}")

    @property
    def n_majorana(self) -> int:
        return 2 * self.L

    def occupations(self) -> np.ndarray:
        """Per-site densities <n_i> = (1 - Gamma[2i, 2i+1]) / 2."""
        idx = np.arange(self.L)
        return (1.0 - self.gamma[2 * idx, 2 * idx + 1]) / 2.0


def from_covariance(gamma: np.ndarray, *, number_conserving: bool | None = None) -> GaussianState:
    """Wrap a raw covariance matrix after validation; purity flag recomputed."""
    g = validate_covariance(gamma)
    L = g.shape[0] // 2
    pure = abs(_purity_from_gamma(g) - 1.0) < PURITY_TOL
    return GaussianState(gamma=g, L=L, pure=pure, number_conserving=number_conserving)


def build_vacuum(L: int) -> GaussianState:
    """Vacuum state |00...0>: direct sum of [[0,1],[-1,0]] blocks."""
    if L < 1:
        raise ValueError(f"need at least one site, got L={L}")
    return build_occupation_product(np.zeros(L, dtype=int))


def build_occupation_product(occ) -> GaussianState:
    """Product state with site occupations ``occ`` (length-L 0/1 vector)."""
    occ = np.asarray(occ, dtype=int).ravel()
    L = occ.size
    if L < 1:
        raise ValueError("occupation vector must be nonempty")
    if np.any((occ != 0) & (occ != 1)):
        raise ValueError("occupations must be 0 or 1")
    g = np.zeros((2 * L, 2 * L))
    s = 1.0 - 2.0 * occ
    idx = np.arange(L)
    g[2 * idx, 2 * idx + 1] = s
    g[2 * idx + 1, 2 * idx] = -s
    return GaussianState(gamma=g, L=L, pure=True, number_conserving=True)


def rotate(state: GaussianState, O: np.ndarray, *, check: bool = True) -> GaussianState:
    """Conjugate the covariance by a real orthogonal matrix: Gamma -> O Gamma O^T."""
    O = np.asarray(O, dtype=float)
    n = state.n_majorana
    if O.shape != (n, n):
        raise ValueError(f"rotation must be {n} x {n}, got {O.shape}")
    if check:
        defect = float(np.max(np.abs(O @ O.T - np.eye(n))))
        if defect > 1e-10:
            raise ConditioningError(f"rotation is not orthogonal (defect {defect:.3e})")
    g = O @ state.gamma @ O.T
    g = 0.5 * (g - g.T)  # kill round-off asymmetry
    return GaussianState(gamma=g, L=state.L, pure=state.pure,
                         number_conserving=None)


def log_purity(state: GaussianState) -> float:
    """log Tr rho^2 = log det(1 + Gamma) - L log 2."""
    return _log_purity_from_gamma(state.gamma)


def purity(state: GaussianState) -> float:
    """Tr rho^2, in (0, 1]; equals 1 for pure states within 1e-8."""
    return math.exp(log_purity(state))


def _log_purity_from_gamma(gamma: np.ndarray) -> float:
    L = gamma.shape[0] // 2
    sign, logdet = np.linalg.slogdet(np.eye(2 * L) + gamma)
    if sign <= 0:
        raise ConditioningError("det(1 + Gamma) is not positive; invalid covariance")
    return logdet - L * math.log(2.0)


def _purity_from_gamma(gamma: np.ndarray) -> float:
    return math.exp(_log_purity_from_gamma(gamma))


def string_weight(x) -> int:
    """Hamming weight of a Majorana string."""
    return int(np.count_nonzero(np.asarray(x)))


def string_from_int(code: int, n_bits: int) -> np.ndarray:
    """Bit vector for an integer code; bit 0 of the code is x_1."""
    return np.array([(code >> k) & 1 for k in range(n_bits)], dtype=np.uint8)


def majorana_expectation(state: GaussianState, x) -> float:
    """Real expectation value of the Majorana monomial labelled by ``x``.

    Computed as ``i^{|x|/2} Pf(Gamma|_x)`` with the power of i stripped to
    its real unit (sign convention: +1 for |x|/2 = 0, 1 mod 4, -1 for
    |x|/2 = 2, 3 mod 4).  Odd-weight strings return 0 exactly.  A
    numerically singular restriction returns 0 with a log note.
    """
    x = np.asarray(x).astype(bool)
    if x.size != state.n_majorana:
        raise ValueError(f"string length {x.size} does not match 2L={state.n_majorana}")
    w = string_weight(x)
    if w % 2 == 1:
        return 0.0
    sub = state.gamma[np.ix_(x, x)]
    sign, log_abs = pfaffian_sign_log(sub)
    if sign == 0.0:
        if w > 0:
            logger.debug("singular restricted covariance for weight-%d string; expectation set to 0", w)
        return 0.0 if w > 0 else 1.0
    phase = 1.0 if (w // 2) % 4 in (0, 1) else -1.0
    return phase * sign * math.exp(log_abs)


def log_string_probability(state: GaussianState, x) -> float:
    """log pi(x); -inf for zero-probability strings."""
    x = np.asarray(x).astype(bool)
    if x.size != state.n_majorana:
        raise ValueError(f"string length {x.size} does not match 2L={state.n_majorana}")
    if string_weight(x) % 2 == 1:
        return -math.inf
    sub = state.gamma[np.ix_(x, x)]
    sign, logdet = np.linalg.slogdet(sub) if sub.size else (1.0, 0.0)
    if sign <= 0:
        # det(Gamma|_x) = Pf^2 >= 0; a negative sign is pure round-off
        if sign < 0:
            CLAMP_EVENTS.count += 1
        return -math.inf
    norm_sign, norm = np.linalg.slogdet(np.eye(state.n_majorana) + state.gamma)
    return logdet - norm


def string_probability(state: GaussianState, x) -> float:
    """pi(x) = det(Gamma|_x) / det(1 + Gamma), the Majorana-string probability."""
    lp = log_string_probability(state, x)
    return 0.0 if lp == -math.inf else math.exp(lp)


def marginal_probability(state: GaussianState, prefix) -> float:
    """Probability that a string starts with the given bit prefix.

    Evaluates the closed-form determinant: restrict ``1_[mu+1,2L] + Gamma``
    to the kept prefix bits plus all unresolved indices, divide by
    ``det(1 + Gamma)``.
    """
    prefix = np.asarray(prefix).astype(np.uint8).ravel()
    n = state.n_majorana
    mu = prefix.size
    if not 1 <= mu <= n:
        raise ValueError(f"prefix length must be in [1, {n}], got {mu}")
    kept = [i for i in range(mu) if prefix[i]]
    rest = list(range(mu, n))
    idx = np.array(kept + rest, dtype=int)
    m = state.gamma[np.ix_(idx, idx)].copy()
    k = len(kept)
    m[np.arange(k, idx.size), np.arange(k, idx.size)] += 1.0
    sign, logdet = np.linalg.slogdet(m) if m.size else (1.0, 0.0)
    if sign <= 0:
        if sign < 0:
            CLAMP_EVENTS.count += 1
        return 0.0
    _, norm = np.linalg.slogdet(np.eye(n) + state.gamma)
    return CLAMP_EVENTS.clamp(math.exp(logdet - norm))


def subsystem_restrict(state: GaussianState, ell: int) -> GaussianState:
    """Reduced Gaussian state on sites [0, ell): leading 2*ell covariance block."""
    if not 1 <= ell <= state.L:
        raise ValueError(f"subsystem size must be in [1, {state.L}], got {ell}")
    if ell == state.L:
        return state
    g = state.gamma[: 2 * ell, : 2 * ell].copy()
    pure = abs(_purity_from_gamma(g) - 1.0) < PURITY_TOL
    return GaussianState(gamma=g, L=ell, pure=pure,
                         number_conserving=state.number_conserving)


# ---------------------------------------------------------------------------
# Nambu correlation matrices
# ---------------------------------------------------------------------------

def omega_matrix(L: int) -> np.ndarray:
    """Block-diagonal unitary mapping (c, c^dag) pairs to Majorana pairs."""
    block = np.array([[1.0, 1.0], [-1.0j, 1.0j]]) / math.sqrt(2.0)
    out = np.zeros((2 * L, 2 * L), dtype=complex)
    for i in range(L):
        out[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = block
    return out


def validate_correlation(C: np.ndarray) -> np.ndarray:
    """Check Hermiticity and the eigenvalue range [0, 1] of a Nambu matrix."""
    C = np.asarray(C, dtype=complex)
    n = C.shape[0]
    if C.ndim != 2 or C.shape[1] != n or n % 2 != 0:
        raise ValueError(f"correlation matrix must be 2L x 2L, got {C.shape}")
    if np.max(np.abs(C - C.conj().T)) > 1e-12 * max(1.0, float(np.max(np.abs(C)))):
        raise ValueError("correlation matrix is not Hermitian within 1e-12")
    ev = np.linalg.eigvalsh(C)
    if ev.min() < -1e-10 or ev.max() > 1.0 + 1e-10:
        raise ValueError("correlation eigenvalues outside [0, 1] within 1e-10")
    return C


def covariance_from_correlation(C: np.ndarray) -> np.ndarray:
    """Gamma = -i (2 Omega^* C Omega^T - 1) for a Nambu correlation matrix."""
    C = validate_correlation(C)
    L = C.shape[0] // 2
    om = omega_matrix(L)
    g = -1.0j * (2.0 * om.conj() @ C @ om.T - np.eye(2 * L))
    if np.max(np.abs(g.imag)) > 1e-10:
        raise ConditioningError("covariance from correlation has imaginary residue")
    return 0.5 * (g.real - g.real.T)


def correlation_from_covariance(gamma: np.ndarray) -> np.ndarray:
    """Inverse transform: C = Omega^T (1 + i Gamma) Omega^* / 2."""
    g = np.asarray(gamma, dtype=float)
    L = g.shape[0] // 2
    om = omega_matrix(L)
    return om.T @ (np.eye(2 * L) + 1.0j * g) @ om.conj() / 2.0


def nambu_from_particle_block(C_part: np.ndarray, F: np.ndarray | None = None) -> np.ndarray:
    """Assemble the interleaved Nambu matrix from <c^dag c> (and optional <c c>)."""
    C_part = np.asarray(C_part, dtype=complex)
    L = C_part.shape[0]
    out = np.zeros((2 * L, 2 * L), dtype=complex)
    out[0::2, 0::2] = C_part
    out[1::2, 1::2] = np.eye(L) - C_part.T
    if F is not None:
        F = np.asarray(F, dtype=complex)
        out[1::2, 0::2] = F            # <c c>
        out[0::2, 1::2] = F.conj().T   # <c^dag c^dag>
    return out


# ---------------------------------------------------------------------------
# Random states and serialization
# ---------------------------------------------------------------------------

def random_orthogonal(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random O in SO(n) via QR of a Gaussian matrix."""
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_pure_state(L: int, rng: np.random.Generator) -> GaussianState:
    """Haar-random pure Gaussian state: O Gamma_vac O^T."""
    O = random_orthogonal(2 * L, rng)
    return rotate(build_vacuum(L), O, check=False)


def save_covariance(path, state_or_gamma) -> None:
    """Write a covariance matrix to ``.npy`` (binary) or ``.csv`` (17 digits)."""
    g = state_or_gamma.gamma if isinstance(state_or_gamma, GaussianState) else np.asarray(state_or_gamma)
    path = str(path)
    if path.endswith(".npy"):
        np.save(path, g)
    elif path.endswith(".csv"):
        np.savetxt(path, g, delimiter=",", fmt="%.17g")
    else:
        raise ValueError(f"unsupported covariance format: {path}")


def load_covariance(path) -> GaussianState:
    """Read a covariance matrix written by :func:`save_covariance`."""
    path = str(path)
    if path.endswith(".npy"):
        g = np.load(path)
    elif path.endswith(".csv"):
        g = np.loadtxt(path, delimiter=",")
    else:
        raise ValueError(f"unsupported covariance format: {path}")
    return from_covariance(g)
