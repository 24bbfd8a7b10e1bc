"""Hamiltonian generators and exact propagators for the two lattice models.

Hopping chain (periodic ring):

    H = -1/2 sum_j (c_j^dag c_{j+1} + c_{j+1}^dag c_j)

with single-particle propagator ``R(s) = exp(-i h s)`` built in momentum
space (the ring is translation invariant, so R is circulant) and lifted to
the real orthogonal Majorana rotation ``O(s)`` through the Nambu transform.

Transverse-field Ising chain (spin-periodic):

    H = -J sum_j sigma^x_j sigma^x_{j+1} - h sum_j sigma^z_j

mapped by Jordan-Wigner to a quadratic Majorana form ``H = (i/4) A . gamma gamma``
with A real antisymmetric; the boundary bond picks up the fermion-parity sign
of the initial state (parity is conserved by both the evolution and by
sigma^z measurements, so the sign is fixed once per trajectory).

No-click limit (open chain):

    H_eff = J sum_{j<L-1} sigma^x_j sigma^x_{j+1} - i gamma/2 sum_j n_j

is quadratic, so the post-selected evolution is propagated exactly on the
L annihilating single-particle modes of the pure state: U -> exp(B dt) U
followed by thin-QR renormalization, where B is the (complex antisymmetric)
Majorana generator.  Since H_eff is time independent the step matrix is
exact; dt only sets the renormalization cadence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import ConditioningError, DegenerateTrajectoryError
from .gaussian import GaussianState, omega_matrix, rotate

DEFAULT_DT = 0.05


def _orthogonality_defect(O: np.ndarray) -> float:
    return float(np.max(np.abs(O @ O.T - np.eye(O.shape[0]))))


def _polar_orthogonalize(O: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(O)
    return u @ vt


class HoppingModel:
    """Spinless fermions hopping on a ring of L sites."""

    def __init__(self, L: int, dt: float = DEFAULT_DT):
        if L < 2:
            raise ValueError("hopping ring needs L >= 2")
        if not (dt > 0 and math.isfinite(dt)):
            raise ValueError(f"invalid time step {dt}")
        self.L = L
        self.dt = dt
        self._momenta = 2.0 * np.pi * np.arange(L) / L
        self._energies = -np.cos(self._momenta)
        self._prop_cache: dict[float, np.ndarray] = {}
        self._majorana_cache: dict[float, np.ndarray] = {}

    def single_particle(self) -> np.ndarray:
        """Real symmetric L x L hopping matrix (entries -1/2 on the ring bonds)."""
        h = np.zeros((self.L, self.L))
        for j in range(self.L):
            h[j, (j + 1) % self.L] = -0.5
            h[(j + 1) % self.L, j] = -0.5
        return h

    def propagator(self, s: float) -> np.ndarray:
        """R(s) = exp(-i h s), circulant, via the momentum-space symbol."""
        if not math.isfinite(s):
            raise ValueError(f"invalid duration {s}")
        key = float(s)
        if key not in self._prop_cache:
            symbol = np.exp(-1j * self._energies * s)
            col = np.fft.ifft(symbol)
            self._prop_cache[key] = scipy.linalg.circulant(col)
        return self._prop_cache[key]

    def nambu_propagator(self, s: float) -> np.ndarray:
        """Evolution of the interleaved (c, c^dag) vector: R on c, R* on c^dag."""
        R = self.propagator(s)
        W = np.zeros((2 * self.L, 2 * self.L), dtype=complex)
        W[0::2, 0::2] = R
        W[1::2, 1::2] = R.conj()
        return W

    def majorana_propagator(self, s: float) -> np.ndarray:
        """Real orthogonal O(s) with Gamma(t+s) = O Gamma(t) O^T."""
        key = float(s)
        if key not in self._majorana_cache:
            om = omega_matrix(self.L)
            O = om @ self.nambu_propagator(s) @ om.conj().T
            if np.max(np.abs(O.imag)) > 1e-10:
                raise ConditioningError("Majorana propagator has imaginary residue")
            O = O.real
            if _orthogonality_defect(O) > 1e-12:
                O = _polar_orthogonalize(O)
            self._majorana_cache[key] = O
        return self._majorana_cache[key]

    def majorana_generator(self) -> np.ndarray:
        """A with H = (i/4) sum A_{mu nu} gamma_mu gamma_nu; energy = Tr(A Gamma)/4."""
        n2 = 2 * self.L
        A = np.zeros((n2, n2))
        for j in range(self.L):
            A[(2 * j + 1) % n2, (2 * j + 2) % n2] += 0.5
            A[2 * j, (2 * j + 3) % n2] += -0.5
        return A - A.T

    def energy(self, state: GaussianState) -> float:
        return float(np.trace(self.majorana_generator() @ state.gamma)) / 4.0

    def evolve(self, state: GaussianState, s: float) -> GaussianState:
        return rotate(state, self.majorana_propagator(s), check=False)


def evolve_correlation(C: np.ndarray, model: HoppingModel, s: float) -> np.ndarray:
    """Nambu correlation update C(t+s) = conj(W) C W^T (particle block: R^dag C R)."""
    W = model.nambu_propagator(s)
    return W.conj() @ np.asarray(C, dtype=complex) @ W.T


class IsingModel:
    """Transverse-field Ising chain in the Majorana representation."""

    def __init__(self, L: int, h: float, J: float = 1.0,
                 boundary: str = "periodic", dt: float = DEFAULT_DT):
        if L < 2:
            raise ValueError("Ising chain needs L >= 2")
        if boundary not in ("periodic", "open"):
            raise ValueError(f"unknown boundary {boundary!r}")
        self.L = L
        self.h = float(h)
        self.J = float(J)
        self.boundary = boundary
        self.dt = dt
        self._prop_cache: dict[tuple[float, int], np.ndarray] = {}

    def majorana_generator(self, parity: int = 1) -> np.ndarray:
        """Real antisymmetric A for H = (i/4) A . gamma gamma.

        ``parity`` is the conserved fermion parity (+1/-1) of the states the
        propagator will act on; it fixes the sign of the wrapped bond under
        Jordan-Wigner on a spin-periodic chain.
        """
        if parity not in (1, -1):
            raise ValueError("parity must be +1 or -1")
        n2 = 2 * self.L
        A = np.zeros((n2, n2))
        for j in range(self.L):
            A[2 * j, 2 * j + 1] += 2.0 * self.h
        for j in range(self.L - 1):
            A[2 * j + 1, 2 * j + 2] += 2.0 * self.J
        if self.boundary == "periodic":
            A[n2 - 1, 0] += 2.0 * self.J * (-parity)
        return A - A.T

    def propagator(self, s: float, parity: int = 1) -> np.ndarray:
        """O(s) = exp(A s) in SO(2L)."""
        if not math.isfinite(s):
            raise ValueError(f"invalid duration {s}")
        key = (float(s), parity)
        if key not in self._prop_cache:
            O = scipy.linalg.expm(self.majorana_generator(parity) * s)
            if _orthogonality_defect(O) > 1e-12:
                O = _polar_orthogonalize(O)
            self._prop_cache[key] = O
        return self._prop_cache[key]

    def energy(self, state: GaussianState, parity: int = 1) -> float:
        return float(np.trace(self.majorana_generator(parity) @ state.gamma)) / 4.0

    def evolve(self, state: GaussianState, s: float, parity: int = 1) -> GaussianState:
        return rotate(state, self.propagator(s, parity), check=False)


def state_parity(occ) -> int:
    """Fermion parity (-1)^N of an occupation pattern."""
    return -1 if int(np.sum(occ)) % 2 else 1


# ---------------------------------------------------------------------------
# No-click (post-selected) non-Hermitian evolution
# ---------------------------------------------------------------------------

@dataclass
class NoClickGenerator:
    """Quadratic generator of H_eff = J sum XX - i gamma/2 sum n (open chain).

    ``normal`` is the L x L coefficient matrix of c^dag_a K_ab c_b (its
    anti-Hermitian part is -i gamma/2 times the identity), ``pairing`` the
    antisymmetric coefficient of c^dag c^dag, and ``majorana`` the complex
    antisymmetric B with H_eff = (i/4) B . gamma gamma + const, used for the
    mode propagation U -> exp(-B t) U.
    """

    L: int
    J: float
    gamma: float
    normal: np.ndarray
    pairing: np.ndarray
    majorana: np.ndarray
    _step_cache: dict[float, np.ndarray] = field(default_factory=dict, repr=False)

    def step_matrix(self, dt: float) -> np.ndarray:
        key = float(dt)
        if key not in self._step_cache:
            self._step_cache[key] = scipy.linalg.expm(self.majorana * dt)
        return self._step_cache[key]


def noclick_generator(model: IsingModel, gamma: float) -> NoClickGenerator:
    """Build the no-click generator for an open Ising chain at h = 0."""
    if gamma < 0:
        raise ValueError(f"measurement rate must be nonnegative, got {gamma}")
    if model.boundary != "open":
        raise ValueError("the no-click Hamiltonian is defined on an open chain")
    L, J = model.L, model.J
    normal = np.zeros((L, L), dtype=complex)
    pairing = np.zeros((L, L), dtype=complex)
    for j in range(L - 1):
        normal[j, j + 1] = normal[j + 1, j] = J
        pairing[j, j + 1] = J
        pairing[j + 1, j] = -J
    normal += -0.5j * gamma * np.eye(L)
    n2 = 2 * L
    B = np.zeros((n2, n2), dtype=complex)
    for j in range(L - 1):
        B[2 * j + 1, 2 * j + 2] += -2.0 * J
    for j in range(L):
        B[2 * j, 2 * j + 1] += -0.5j * gamma
    B = B - B.T
    return NoClickGenerator(L=L, J=J, gamma=float(gamma),
                            normal=normal, pairing=pairing, majorana=B)


def occupation_mode_matrix(occ) -> np.ndarray:
    """2L x L mode matrix annihilating the occupation product state."""
    occ = np.asarray(occ, dtype=int)
    L = occ.size
    U = np.zeros((2 * L, L), dtype=complex)
    for i, n in enumerate(occ):
        sign = -1.0 if n else 1.0  # occupied sites are annihilated by c^dag
        U[2 * i, i] = 1.0 / math.sqrt(2.0)
        U[2 * i + 1, i] = sign * 1.0j / math.sqrt(2.0)
    return U


def evolve_noclick(modes: np.ndarray, generator: NoClickGenerator, dt: float) -> np.ndarray:
    """One exact non-unitary step followed by thin-QR renormalization."""
    V = generator.step_matrix(dt) @ modes
    norms = np.linalg.norm(V, axis=0)
    if np.min(norms) < 1e-14:
        raise DegenerateTrajectoryError("mode norm collapsed below 1e-14")
    Q, R = np.linalg.qr(V)
    if np.min(np.abs(np.diag(R))) < 1e-14:
        raise DegenerateTrajectoryError("mode matrix lost rank during no-click step")
    return Q


def covariance_from_modes(modes: np.ndarray) -> np.ndarray:
    """Gamma = i (2 U U^dag - 1) for an isotropic orthonormal mode matrix."""
    n2 = modes.shape[0]
    iso = float(np.max(np.abs(modes.T @ modes)))
    ortho = float(np.max(np.abs(modes.conj().T @ modes - np.eye(n2 // 2))))
    if iso > 1e-8 or ortho > 1e-8:
        raise ConditioningError(
            f"mode matrix not isotropic/orthonormal (defects {iso:.2e}, {ortho:.2e})")
    g = 1.0j * (2.0 * modes @ modes.conj().T - np.eye(n2))
    if np.max(np.abs(g.imag)) > 1e-9:
        raise ConditioningError("covariance from modes has imaginary residue")
    return 0.5 * (g.real - g.real.T)


def state_from_modes(modes: np.ndarray) -> GaussianState:
    g = covariance_from_modes(modes)
    return GaussianState(gamma=g, L=modes.shape[0] // 2, pure=True)
