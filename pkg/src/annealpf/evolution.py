"""State evolution through the reverse-annealing schedule.

A trajectory starts in a computational-basis state of the driver diagonal,
is propagated by the split-step integrator in ``_kernels`` under

    H(t) = s H_target + (1-s) lam (-gamma sum_i sx_i) + (1-s)(1-lam) H_driver

with s(t) = lam(t) = t/tau, and ends with a projective measurement in the
computational basis (which is an eigenbasis of the diagonal target; each
member of a degenerate level counts separately).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .model import IsingInstance, h0_spectrum, target_spectrum

_SV_MAGIC = b"ANLPFSV1"


@dataclass(frozen=True)
class Schedule:
    """Evolution parameters: total time tau, step dt, transverse scale gamma.

    Times are in units of 1/gamma with gamma = 1 the energy unit; the
    configurable ``gamma`` exists for the gamma = 0 diagonal limit.
    """

    tau: float
    dt: float = 0.01
    gamma: float = 1.0

    def __post_init__(self):
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.dt <= 0:
            raise ValueError("dt must be > 0")
        if self.tau > 0 and self.dt > self.tau:
            raise ValueError("dt must not exceed tau")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")

    def halved(self) -> "Schedule":
        return Schedule(self.tau, self.dt / 2, self.gamma)


@dataclass(frozen=True)
class StateVector:
    """Complex amplitudes over the 2^n computational basis states."""

    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.ascontiguousarray(np.asarray(self.amplitudes, dtype=np.complex128))
        if a.ndim != 1 or a.size < 2 or a.size & (a.size - 1):
            raise ValueError("amplitudes must be a 1-D array of length 2^n, n >= 1")
        object.__setattr__(self, "amplitudes", a)

    @property
    def n(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def norm_error(self) -> float:
        """|sum |psi|^2 - 1|, the unitarity drift."""
        return abs(float(self.probabilities().sum()) - 1.0)


@dataclass(frozen=True)
class TransitionRow:
    """Measurement probabilities P(outcome n | initial m) for one fixed m."""

    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.ascontiguousarray(np.asarray(self.probs, dtype=np.float64))
        if p.ndim != 1 or p.size < 2 or p.size & (p.size - 1):
            raise ValueError("probs must be a 1-D array of length 2^n, n >= 1")
        if p.min() < 0:
            raise ValueError("probabilities must be nonnegative")
        object.__setattr__(self, "probs", p)

    @property
    def n(self) -> int:
        return self.probs.size.bit_length() - 1


def evolve(
    instance: IsingInstance,
    m: int,
    schedule: Schedule,
    engine: str | None = None,
    spectrum: np.ndarray | None = None,
) -> StateVector:
    """Propagate basis state m through the schedule.

    ``spectrum`` may pass a precomputed target-energy vector to avoid
    recomputation in batch loops.
    """
    n = instance.n
    dim = 1 << n
    if not 0 <= m < dim:
        raise ValueError(f"basis index {m} out of range for n={n}")
    e1 = target_spectrum(instance).energies if spectrum is None else spectrum
    psi = np.zeros((dim, 1), dtype=np.complex128)
    psi[m, 0] = 1.0
    _kernels.propagate(e1, h0_spectrum(n), schedule.gamma, schedule.tau, schedule.dt, psi, engine)
    return StateVector(psi[:, 0])


def transition_row(
    instance: IsingInstance,
    m: int,
    schedule: Schedule,
    engine: str | None = None,
    spectrum: np.ndarray | None = None,
) -> TransitionRow:
    """Measurement distribution after evolving from basis state m."""
    return TransitionRow(evolve(instance, m, schedule, engine, spectrum).probabilities())


def transition_matrix(
    instance: IsingInstance,
    schedule: Schedule,
    columns=None,
    engine: str | None = None,
    spectrum: np.ndarray | None = None,
) -> np.ndarray:
    """Probabilities P[outcome, initial] for the requested initial states.

    ``columns`` defaults to all 2^n initial states; the result has one
    column per entry, all propagated in a single kernel pass.  Memory is
    2^n * len(columns) complex amplitudes, so keep n at desk scale.
    """
    n = instance.n
    dim = 1 << n
    if columns is None:
        columns = np.arange(dim)
    columns = np.asarray(columns, dtype=np.int64)
    if columns.size and not (0 <= columns.min() and columns.max() < dim):
        raise ValueError("initial-state index out of range")
    e1 = target_spectrum(instance).energies if spectrum is None else spectrum
    psi = np.zeros((dim, columns.size), dtype=np.complex128)
    psi[columns, np.arange(columns.size)] = 1.0
    _kernels.propagate(e1, h0_spectrum(n), schedule.gamma, schedule.tau, schedule.dt, psi, engine)
    return np.abs(psi) ** 2


def measurement_cdf(probs: np.ndarray) -> np.ndarray:
    """Cumulative table for inverse-CDF draws in basis-index order."""
    return np.cumsum(probs)


def draw_outcome(cdf: np.ndarray, rng: np.random.Generator) -> int:
    """One inverse-CDF draw from a cumulative table."""
    u = rng.random()
    return min(int(np.searchsorted(cdf, u, side="right")), cdf.size - 1)


def sample_measurement(state: StateVector, rng: np.random.Generator) -> int:
    """Projectively measure the state in the computational basis.

    Deterministic given the generator state; raises if the norm has
    drifted by more than 1e-6 (an integrator fault, not a user error).
    """
    p = state.probabilities()
    if abs(float(p.sum()) - 1.0) > 1e-6:
        raise RuntimeError("state norm deviates from 1 by more than 1e-6; integrator fault")
    return draw_outcome(measurement_cdf(p), rng)


def convergence_check(
    instance: IsingInstance, m: int, schedule: Schedule, engine: str | None = None
) -> float:
    """L-infinity distance between transition rows at dt and dt/2."""
    coarse = transition_row(instance, m, schedule, engine)
    fine = transition_row(instance, m, schedule.halved(), engine)
    return float(np.max(np.abs(coarse.probs - fine.probs)))


def write_statevector(path, state: StateVector) -> None:
    """Binary dump: 8-byte magic, uint64 little-endian n, then 2^n
    little-endian complex-double pairs."""
    with open(path, "wb") as fh:
        fh.write(_SV_MAGIC)
        fh.write(struct.pack("<Q", state.n))
        fh.write(np.ascontiguousarray(state.amplitudes, dtype="<c16").tobytes())


def read_statevector(path) -> StateVector:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _SV_MAGIC:
            raise ValueError("not a statevector dump (bad magic)")
        (n,) = struct.unpack("<Q", fh.read(8))
        data = fh.read()
    expect = (1 << n) * 16
    if len(data) != expect:
        raise ValueError(f"truncated statevector dump: {len(data)} payload bytes, expected {expect}")
    return StateVector(np.frombuffer(data, dtype="<c16").astype(np.complex128))
