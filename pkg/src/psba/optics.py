"""
Bob's two-photon analyzers.

Setup ``NON_POLARIZING_BS``: both photons enter a 50:50 beam splitter.
Only the antisymmetric polarization component (the singlet) exits through
different ports when the photons overlap perfectly. With temporal overlap
(visibility) v, the coincidence probability interpolates linearly to the
distinguishable-particle value 1/2:

    P(different) = (1 - v) / 2 + v * <Psi-|rho|Psi->

Setup ``BIREFRINGENT_PBS``: a birefringent delay tags whether the pair
lives in the {HV, VH} subspace (time-separated) or {HH, VV} (coincident),
each photon then goes to a polarizing beam splitter at its own angle.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .quantum import (
    BellKind,
    JointState,
    Outcome,
    _BELL_VECTORS,
    _hermitize,
    polarization_ket,
)


class Setup(enum.Enum):
    BIREFRINGENT_PBS = "birefringent_pbs"
    NON_POLARIZING_BS = "non_polarizing_bs"


class PortPattern(enum.Enum):
    DIFFERENT_PORTS = "different"
    SAME_PORT = "same"


@dataclass(frozen=True)
class AnalyzerConfig:
    setup: Setup = Setup.NON_POLARIZING_BS
    visibility: float = 1.0
    pbs_angles: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        _check_visibility(self.visibility)
        if not all(np.isfinite(a) for a in self.pbs_angles) or len(self.pbs_angles) != 2:
            raise ValueError("pbs_angles must be two finite angles")


@dataclass(frozen=True)
class AnalyzerEvent:
    """One detection.

    For the beam splitter only ``port_pattern`` is set. For the
    birefringent setup ``pbs_outcomes`` and ``time_separated`` are set.
    """

    port_pattern: PortPattern | None = None
    pbs_outcomes: tuple[Outcome, Outcome] | None = None
    time_separated: bool | None = None

    def __post_init__(self):
        if (self.port_pattern is None) == (self.pbs_outcomes is None):
            raise ValueError("an event has exactly one of port_pattern / pbs_outcomes")
        if self.port_pattern is not None and self.time_separated is not None:
            raise ValueError("time tagging only exists in the birefringent setup")


def _check_visibility(v: float):
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {v}")


def _two_photon(rho: JointState):
    if rho.n_photons != 2:
        raise ValueError(f"analyzer needs a two-photon state, got {rho.n_photons}")


_SINGLET = _BELL_VECTORS[BellKind.PSI_MINUS]
# {HV, VH} and {HH, VV} projectors in the HH, HV, VH, VV basis
_ANTI_DIAGONAL = np.diag([0, 1, 1, 0]).astype(complex)
_DIAGONAL = np.diag([1, 0, 0, 1]).astype(complex)


def antisymmetric_overlap(rho: JointState) -> float:
    _two_photon(rho)
    w = float(np.real(_SINGLET.conj() @ rho.matrix @ _SINGLET))
    return min(max(w, 0.0), 1.0)


def bs_different_port_probability(rho: JointState, visibility: float = 1.0) -> float:
    _check_visibility(visibility)
    return (1 - visibility) / 2 + visibility * antisymmetric_overlap(rho)


def sample_bs_event(rho: JointState, visibility: float, rng: np.random.Generator) -> AnalyzerEvent:
    p = bs_different_port_probability(rho, visibility)
    pattern = PortPattern.DIFFERENT_PORTS if rng.random() < p else PortPattern.SAME_PORT
    return AnalyzerEvent(port_pattern=pattern)


def time_tag_branches(rho: JointState) -> list[tuple[bool, float, JointState | None]]:
    """Exact (time_separated, probability, conditioned state) for both tags."""
    _two_photon(rho)
    out = []
    for separated, proj in ((True, _ANTI_DIAGONAL), (False, _DIAGONAL)):
        m = proj @ rho.matrix @ proj
        p = float(np.real(np.trace(m)))
        out.append((separated, p, JointState(_hermitize(m / p), rho.labels) if p > 1e-14 else None))
    return out


def birefringent_time_tag(rho: JointState, rng: np.random.Generator) -> tuple[bool, JointState]:
    branches = time_tag_branches(rho)
    separated, p_sep, state = branches[0]
    if state is None or rng.random() >= p_sep:
        separated, _, state = branches[1]
    return separated, state


def polarization_observable(angle: float) -> np.ndarray:
    """+1 on the PBS port along ``angle``, -1 on the orthogonal port."""
    c, s = np.cos(2 * angle), np.sin(2 * angle)
    return np.array([[c, s], [s, -c]], dtype=complex)


def pbs_correlation(rho: JointState, theta1: float, theta2: float) -> float:
    """P(same PBS outcome) - P(different) with the photons analyzed at theta1, theta2."""
    _two_photon(rho)
    op = np.kron(polarization_observable(theta1), polarization_observable(theta2))
    return float(np.clip(np.real(np.trace(rho.matrix @ op)), -1.0, 1.0))


def pbs_outcome_probabilities(rho: JointState, theta1: float, theta2: float) -> dict[tuple[Outcome, Outcome], float]:
    _two_photon(rho)
    kets = {
        1: {Outcome.PLUS: polarization_ket(theta1), Outcome.MINUS: polarization_ket(theta1 + np.pi / 2)},
        2: {Outcome.PLUS: polarization_ket(theta2), Outcome.MINUS: polarization_ket(theta2 + np.pi / 2)},
    }
    probs = {}
    for o1 in Outcome:
        for o2 in Outcome:
            psi = np.kron(kets[1][o1], kets[2][o2])
            probs[(o1, o2)] = max(float(np.real(psi.conj() @ rho.matrix @ psi)), 0.0)
    return probs


def sample_pbs_outcomes(rho: JointState, theta1: float, theta2: float, rng: np.random.Generator) -> tuple[Outcome, Outcome]:
    probs = pbs_outcome_probabilities(rho, theta1, theta2)
    keys = list(probs)
    p = np.array([probs[k] for k in keys])
    i = int(np.searchsorted(np.cumsum(p / p.sum()), rng.random(), side="right"))
    return keys[min(i, len(keys) - 1)]


def sample_pbs_event(rho: JointState, config: AnalyzerConfig, rng: np.random.Generator) -> AnalyzerEvent:
    """Birefringent time tag followed by the two PBS detections."""
    separated, conditioned = birefringent_time_tag(rho, rng)
    outcomes = sample_pbs_outcomes(conditioned, *config.pbs_angles, rng)
    return AnalyzerEvent(pbs_outcomes=outcomes, time_separated=separated)


def pbs_event_distribution(rho: JointState, theta1: float, theta2: float) -> dict[tuple[bool, Outcome, Outcome], float]:
    """Exact joint law of (time_separated, outcome1, outcome2) for setup a."""
    dist = {}
    for separated, p, state in time_tag_branches(rho):
        for o1 in Outcome:
            for o2 in Outcome:
                dist[(separated, o1, o2)] = 0.0
        if state is None:
            continue
        for key, q in pbs_outcome_probabilities(state, theta1, theta2).items():
            dist[(separated, *key)] = p * q
    return dist
