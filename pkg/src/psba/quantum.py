"""
Few-qubit polarization states as density matrices.

Basis convention: each photon is a qubit with |H> = |0> and |V> = |1>;
multi-photon kets are ordered by the state's label tuple, so a two-photon
state uses the basis {HH, HV, VH, VV}.

States are immutable. Measurements never mutate; they return new states.
Outcome enumeration (``bsm_branches``, ``ssm_branches``) is exact and
memoized per input state object, sampling just picks a branch with one
uniform draw from the caller's generator.
"""

from __future__ import annotations

import enum
import functools
import itertools
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

import numpy as np

MAX_QUBITS = 4
ATOL = 1e-12
PSD_SLACK = 1e-10

Label = Hashable


class BellKind(enum.Enum):
    PHI_PLUS = "phi_plus"
    PHI_MINUS = "phi_minus"
    PSI_PLUS = "psi_plus"
    PSI_MINUS = "psi_minus"

    @property
    def vector(self) -> np.ndarray:
        return _BELL_VECTORS[self].copy()

    @classmethod
    def parse(cls, text: str) -> "BellKind":
        key = text.strip().lower()
        if key.endswith(("+", "-")):
            key = key[:-1] + ("_plus" if key[-1] == "+" else "_minus")
        for kind in cls:
            if key in (kind.value, kind.name.lower()):
                return kind
        raise ValueError(f"unknown Bell state {text!r}")


_S = 1 / np.sqrt(2)
_BELL_VECTORS = {
    BellKind.PHI_PLUS: np.array([_S, 0, 0, _S], dtype=complex),
    BellKind.PHI_MINUS: np.array([_S, 0, 0, -_S], dtype=complex),
    BellKind.PSI_PLUS: np.array([0, _S, _S, 0], dtype=complex),
    BellKind.PSI_MINUS: np.array([0, _S, -_S, 0], dtype=complex),
}
BELL_ORDER = tuple(BellKind)


class Outcome(enum.Enum):
    """Result of a linear-polarization measurement at some angle."""

    PLUS = "plus"    # along the angle (H at angle 0)
    MINUS = "minus"  # orthogonal (V at angle 0)


class Actor(enum.Enum):
    ALICE = "alice"
    BOB = "bob"
    VICTOR = "victor"


class MeasurementKind(enum.Enum):
    BSM = "bsm"
    SSM = "ssm"


@dataclass(frozen=True)
class MeasurementRecord:
    """One local measurement result.

    A BSM record targets a photon pair and carries a ``BellKind``. An SSM
    record is written per single-photon measurement: one target, one
    ``Outcome``. ``basis_angle`` is only meaningful for SSM.
    """

    actor: Actor
    kind: MeasurementKind
    targets: tuple
    outcome: BellKind | Outcome
    sequence: int
    basis_angle: float = 0.0

    def __post_init__(self):
        if self.kind is MeasurementKind.BSM:
            if not isinstance(self.outcome, BellKind) or len(self.targets) != 2:
                raise ValueError("BSM records need two targets and a BellKind outcome")
        elif not isinstance(self.outcome, Outcome) or len(self.targets) != 1:
            raise ValueError("SSM records need one target and a single-photon outcome")


@dataclass(frozen=True, eq=False)
class JointState:
    """Density operator over up to four labelled polarization qubits.

    Equality and hashing are by identity, which lets measurement results be
    memoized per state object. Use ``allclose`` for value comparison.
    """

    matrix: np.ndarray
    labels: tuple

    def __post_init__(self):
        labels = tuple(self.labels)
        n = len(labels)
        if not 1 <= n <= MAX_QUBITS:
            raise ValueError(f"need 1..{MAX_QUBITS} photons, got {n}")
        if len(set(labels)) != n:
            raise ValueError(f"duplicate photon labels {labels}")
        m = np.array(self.matrix, dtype=complex)
        if m.shape != (2**n, 2**n):
            raise ValueError(f"matrix shape {m.shape} does not fit {n} photons")
        if np.max(np.abs(m - m.conj().T)) > ATOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1) > ATOL:
            raise ValueError(f"density matrix trace {np.trace(m).real:.3g} != 1")
        if np.linalg.eigvalsh(m)[0] < -PSD_SLACK:
            raise ValueError("density matrix is not positive semidefinite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "labels", labels)

    @property
    def n_photons(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return 2**self.n_photons

    def position(self, label: Label) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"photon {label!r} not in state {self.labels}") from None

    def purity(self) -> float:
        return float(np.real(np.trace(self.matrix @ self.matrix)))

    def expectation(self, operator: np.ndarray) -> float:
        return float(np.real(np.trace(self.matrix @ operator)))

    def allclose(self, other: "JointState", atol: float = ATOL) -> bool:
        return self.labels == other.labels and np.allclose(self.matrix, other.matrix, atol=atol)

    def relabel(self, labels: Sequence[Label]) -> "JointState":
        return JointState(self.matrix, tuple(labels))

    def __repr__(self):
        return f"JointState(labels={self.labels}, purity={self.purity():.6f})"


# -- constructors -----------------------------------------------------------

_fresh_ids = itertools.count(1)


def from_vector(vector: Sequence[complex], labels: Sequence[Label]) -> JointState:
    psi = np.asarray(vector, dtype=complex)
    psi = psi / np.linalg.norm(psi)
    return JointState(np.outer(psi, psi.conj()), tuple(labels))


def bell_state(kind: BellKind, labels: Sequence[Label] = (1, 2)) -> JointState:
    return from_vector(_BELL_VECTORS[kind], labels)


def spdc_pair_source(kind: BellKind = BellKind.PSI_MINUS, labels: Sequence[Label] | None = None) -> JointState:
    """A freshly emitted photon pair in ``kind``.

    Without explicit labels, two photon ids are drawn from a process-wide
    counter so independent calls never collide.
    """
    if labels is None:
        labels = (next(_fresh_ids), next(_fresh_ids))
    return bell_state(kind, labels)


def polarization_ket(angle: float) -> np.ndarray:
    """Linear polarization at ``angle`` from H: cos|H> + sin|V>."""
    return np.array([np.cos(angle), np.sin(angle)], dtype=complex)


def product_state(angles: Sequence[float], labels: Sequence[Label] | None = None) -> JointState:
    """Pure product of linearly polarized photons; ``angles`` in radians."""
    psi = np.ones(1, dtype=complex)
    for a in angles:
        psi = np.kron(psi, polarization_ket(a))
    if labels is None:
        labels = tuple(range(1, len(angles) + 1))
    return from_vector(psi, labels)


def basis_state(polarizations: str, labels: Sequence[Label] | None = None) -> JointState:
    """Product state from a string such as ``"HV"``."""
    angles = []
    for ch in polarizations.upper():
        if ch not in "HV":
            raise ValueError(f"polarization must be H or V, got {ch!r}")
        angles.append(0.0 if ch == "H" else np.pi / 2)
    return product_state(angles, labels)


def maximally_mixed(labels: Sequence[Label]) -> JointState:
    d = 2 ** len(labels)
    return JointState(np.eye(d, dtype=complex) / d, tuple(labels))


def mixture(states: Sequence[JointState], weights: Sequence[float] | None = None) -> JointState:
    if not states:
        raise ValueError("empty mixture")
    labels = states[0].labels
    if any(s.labels != labels for s in states):
        raise ValueError("mixture components must share labels")
    w = np.full(len(states), 1 / len(states)) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1) > ATOL:
        raise ValueError("mixture weights must be a probability vector")
    m = sum(wi * s.matrix for wi, s in zip(w, states))
    return JointState(_hermitize(m), labels)


def tensor(a: JointState, b: JointState) -> JointState:
    if a.n_photons + b.n_photons > MAX_QUBITS:
        raise ValueError(f"combined state would exceed {MAX_QUBITS} photons")
    if set(a.labels) & set(b.labels):
        raise ValueError("states share photon labels")
    return JointState(np.kron(a.matrix, b.matrix), a.labels + b.labels)


# -- linear algebra helpers -------------------------------------------------

def _hermitize(m: np.ndarray) -> np.ndarray:
    return (m + m.conj().T) / 2


def apply_local(matrix: np.ndarray, op: np.ndarray, positions: Sequence[int], n: int) -> np.ndarray:
    """Return O rho O^dagger with ``op`` acting on qubits ``positions``."""
    k = len(positions)
    positions = list(positions)
    t = matrix.reshape((2,) * (2 * n))
    o = op.reshape((2,) * (2 * k))
    t = np.tensordot(o, t, axes=(list(range(k, 2 * k)), positions))
    t = np.moveaxis(t, list(range(k)), positions)
    bra = [n + p for p in positions]
    t = np.tensordot(t, o.conj(), axes=(bra, list(range(k, 2 * k))))
    t = np.moveaxis(t, list(range(2 * n - k, 2 * n)), bra)
    return t.reshape(2**n, 2**n)


def partial_trace(state: JointState, keep: Iterable[Label]) -> JointState:
    """Reduce ``state`` to the photons in ``keep`` (original order retained)."""
    keep = set(keep)
    for label in keep:
        state.position(label)
    if not keep:
        raise ValueError("must keep at least one photon")
    return _partial_trace(state, frozenset(keep))


@functools.lru_cache(maxsize=8192)
def _partial_trace(state: JointState, keep: frozenset) -> JointState:
    n = state.n_photons
    t = state.matrix.reshape((2,) * (2 * n))
    kept_labels = [lab for lab in state.labels if lab in keep]
    current = n
    for pos in reversed(range(n)):
        if state.labels[pos] in keep:
            continue
        t = np.trace(t, axis1=pos, axis2=pos + current)
        current -= 1
    d = 2**current
    return JointState(_hermitize(t.reshape(d, d)), tuple(kept_labels))


def partial_transpose(matrix: np.ndarray, position: int, n: int) -> np.ndarray:
    t = matrix.reshape((2,) * (2 * n))
    t = np.swapaxes(t, position, n + position)
    return t.reshape(2**n, 2**n)


def is_separable(state: JointState, tol: float = 1e-12) -> bool:
    """Exact two-qubit separability via the positive-partial-transpose test."""
    if state.n_photons != 2:
        raise ValueError("separability test is only exact for two photons")
    pt = partial_transpose(state.matrix, 1, 2)
    return bool(np.linalg.eigvalsh(_hermitize(pt))[0] >= -tol)


def fidelity_with_bell(state: JointState, kind: BellKind) -> float:
    if state.n_photons != 2:
        raise ValueError("Bell fidelity needs a two-photon state")
    v = _BELL_VECTORS[kind]
    return float(np.real(v.conj() @ state.matrix @ v))


def identify_bell(state: JointState, tol: float = 1e-10) -> BellKind | None:
    """The Bell state ``state`` equals (fidelity 1), or None."""
    for kind in BELL_ORDER:
        if fidelity_with_bell(state, kind) > 1 - tol:
            return kind
    return None


def von_neumann_entropy(state: JointState) -> float:
    """Entropy in bits."""
    ev = np.linalg.eigvalsh(state.matrix)
    ev = ev[ev > 1e-15]
    return float(-np.sum(ev * np.log2(ev)))


# -- measurements -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Branch:
    """One outcome of a projective measurement: label, Born weight, collapsed state."""

    outcome: BellKind | Outcome
    probability: float
    state: JointState | None  # None when the outcome has zero weight


def _project(state: JointState, projector: np.ndarray, positions: Sequence[int]) -> tuple[float, JointState | None]:
    m = apply_local(state.matrix, projector, positions, state.n_photons)
    p = float(np.real(np.trace(m)))
    if p < 1e-14:
        return 0.0, None
    return p, JointState(_hermitize(m / p), state.labels)


def bsm_branches(state: JointState, targets: tuple) -> tuple[Branch, ...]:
    """Exact Bell-basis measurement branches on photon pair ``targets``."""
    a, b = targets
    if a == b:
        raise ValueError("BSM targets must be two distinct photons")
    return _bsm_branches(state, (state.position(a), state.position(b)))


@functools.lru_cache(maxsize=8192)
def _bsm_branches(state: JointState, positions: tuple[int, int]) -> tuple[Branch, ...]:
    branches = []
    for kind in BELL_ORDER:
        v = _BELL_VECTORS[kind]
        p, post = _project(state, np.outer(v, v.conj()), positions)
        branches.append(Branch(kind, p, post))
    return _normalized(branches)


def ssm_branches(state: JointState, target: Label, basis_angle: float = 0.0) -> tuple[Branch, ...]:
    """Exact branches of a linear-polarization measurement at ``basis_angle``."""
    return _ssm_branches(state, state.position(target), float(basis_angle))


@functools.lru_cache(maxsize=8192)
def _ssm_branches(state: JointState, position: int, angle: float) -> tuple[Branch, ...]:
    plus = polarization_ket(angle)
    minus = polarization_ket(angle + np.pi / 2)
    branches = []
    for outcome, ket in ((Outcome.PLUS, plus), (Outcome.MINUS, minus)):
        p, post = _project(state, np.outer(ket, ket.conj()), (position,))
        branches.append(Branch(outcome, p, post))
    return _normalized(branches)


def _normalized(branches: list[Branch]) -> tuple[Branch, ...]:
    total = sum(b.probability for b in branches)
    if abs(total - 1) > 1e-9:
        raise RuntimeError(f"Born weights sum to {total}")
    return tuple(Branch(b.outcome, b.probability / total, b.state) for b in branches)


def choose_branch(branches: Sequence[Branch], u: float) -> Branch:
    """Inverse-CDF pick of a branch for a uniform variate ``u`` in [0, 1)."""
    acc = 0.0
    last = None
    for br in branches:
        if br.state is None:
            continue
        acc += br.probability
        last = br
        if u < acc:
            return br
    return last


def bsm(state: JointState, targets: tuple, rng: np.random.Generator) -> tuple[BellKind, JointState]:
    br = choose_branch(bsm_branches(state, targets), rng.random())
    return br.outcome, br.state


def ssm(state: JointState, target: Label, basis_angle: float, rng: np.random.Generator) -> tuple[Outcome, JointState]:
    br = choose_branch(ssm_branches(state, target, basis_angle), rng.random())
    return br.outcome, br.state


def ensemble(branches: Sequence[Branch]) -> JointState:
    """Outcome-averaged post-measurement state (the non-selective update)."""
    live = [b for b in branches if b.state is not None]
    return mixture([b.state for b in live], [b.probability for b in live])


def swap_table(source_12: BellKind, source_34: BellKind) -> dict[BellKind, tuple[float, BellKind | None]]:
    """For Bell pairs on (1,2) and (3,4): BSM outcome on (2,3) -> (probability, Bell state of (1,4))."""
    state = tensor(bell_state(source_12, (1, 2)), bell_state(source_34, (3, 4)))
    table = {}
    for br in bsm_branches(state, (2, 3)):
        kind = identify_bell(partial_trace(br.state, (1, 4))) if br.state is not None else None
        table[br.outcome] = (br.probability, kind)
    return table
