"""Exact brute-force references, gated to small spin counts.

Everything here enumerates the full basis (or worse) on purpose: these
are the ground truths the fast paths are tested against.  Hard caps
raise ``ResourceLimitError`` instead of running for hours.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._kernels import propagate
from .errors import NoRootError, ResourceLimitError
from .estimator import min_variance
from .evolution import Schedule, StateVector
from .model import DiagonalSpectrum, IsingInstance, h0_spectrum, target_spectrum
from .sampling import exact_optimal, solve_alpha_exact

_EXACT_MU_CAP = 14
_DENSE_CAP = 4
_LOCALITY_CAP = 12
_MU_BLOCK = 256


@dataclass(frozen=True, eq=False)
class ExactAnalysis:
    """Full exact characterization of one (instance, schedule, beta) cell."""

    beta: float
    z1: float
    mu: np.ndarray = field(repr=False)
    p_opt: np.ndarray = field(repr=False)
    sigma2_min: float = 0.0
    alpha_star: float = 0.0
    alpha_kl: float = 0.0
    q_dist: np.ndarray = field(default=None, repr=False)

    def to_json_dict(self) -> dict:
        return {
            "beta": self.beta,
            "z1": self.z1,
            "mu": [float(v) for v in self.mu],
            "p_opt": [float(v) for v in self.p_opt],
            "sigma2_min": self.sigma2_min,
            "alpha_star": self.alpha_star,
            "alpha_kl": self.alpha_kl,
            "q_dist": [float(v) for v in self.q_dist],
        }


def analysis_from_json(doc: dict) -> ExactAnalysis:
    return ExactAnalysis(
        beta=float(doc["beta"]),
        z1=float(doc["z1"]),
        mu=np.asarray(doc["mu"], dtype=np.float64),
        p_opt=np.asarray(doc["p_opt"], dtype=np.float64),
        sigma2_min=float(doc["sigma2_min"]),
        alpha_star=float(doc["alpha_star"]),
        alpha_kl=float(doc["alpha_kl"]),
        q_dist=np.asarray(doc["q_dist"], dtype=np.float64),
    )


def _energies_of(spectrum) -> np.ndarray:
    if isinstance(spectrum, DiagonalSpectrum):
        return spectrum.energies
    return np.asarray(spectrum, dtype=np.float64)


def exact_partition(spectrum, beta: float) -> float:
    """sum_n exp(-beta E_n) in ascending basis order, compensated."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    e = _energies_of(spectrum)
    return math.fsum(np.exp(-beta * e))


def exact_mu_multi(
    instance: IsingInstance, schedule: Schedule, betas, engine: str | None = None
) -> np.ndarray:
    """mu_m for several betas from one propagation; shape (len(betas), 2^n).

    The full transition operator is applied to identity columns in blocks,
    so memory stays at 2^n * block complex values while every requested
    beta reuses the same amplitudes.
    """
    n = instance.n
    if n > _EXACT_MU_CAP:
        raise ResourceLimitError(f"exact mu is capped at n <= {_EXACT_MU_CAP}, got n={n}")
    betas = [float(b) for b in betas]
    if any(b < 0 for b in betas):
        raise ValueError("beta must be >= 0")
    dim = 1 << n
    e1 = target_spectrum(instance).energies
    e0 = h0_spectrum(n)
    weights = np.empty((len(betas), dim))
    for row, b in enumerate(betas):
        weights[row] = np.exp(-2.0 * b * e1)
    if not np.isfinite(weights).all():
        raise ValueError("exp(-2 beta E) overflows float64 for this spectrum")
    mu = np.empty((len(betas), dim))
    for start in range(0, dim, _MU_BLOCK):
        cols = np.arange(start, min(start + _MU_BLOCK, dim))
        psi = np.zeros((dim, cols.size), dtype=np.complex128)
        psi[cols, np.arange(cols.size)] = 1.0
        propagate(e1, e0, schedule.gamma, schedule.tau, schedule.dt, psi, engine)
        mu[:, cols] = weights @ (np.abs(psi) ** 2)
    return mu


def exact_mu(
    instance: IsingInstance, schedule: Schedule, beta: float, engine: str | None = None
) -> np.ndarray:
    """mu_m = sum_n exp(-2 beta E_n) P(n|m) for every initial state m."""
    return exact_mu_multi(instance, schedule, [beta], engine)[0]


def dense_reference_evolve(
    instance: IsingInstance, m: int, tau: float, dt_ref: float, gamma: float = 1.0
) -> StateVector:
    """Ground-truth propagation by dense eigendecomposition per micro-step.

    The Hamiltonian is frozen at each step midpoint and exponentiated
    exactly (Hermitian eigendecomposition), so the only error is the
    piecewise-constant approximation, second order in dt_ref.
    """
    n = instance.n
    if n > _DENSE_CAP:
        raise ResourceLimitError(f"dense reference is capped at n <= {_DENSE_CAP}, got n={n}")
    dim = 1 << n
    if not 0 <= m < dim:
        raise ValueError(f"basis index {m} out of range for n={n}")
    if not 0 < dt_ref <= 1e-3:
        raise ValueError("dt_ref must lie in (0, 1e-3]")
    if tau < 0:
        raise ValueError("tau must be >= 0")
    psi = np.zeros(dim, dtype=np.complex128)
    psi[m] = 1.0
    if tau == 0:
        return StateVector(psi)
    e1 = target_spectrum(instance).energies
    e0 = h0_spectrum(n)
    hx = np.zeros((dim, dim))
    for state in range(dim):
        for i in range(n):
            hx[state, state ^ (1 << i)] -= 1.0  # transverse term -sum sx
    nsteps = max(1, round(tau / dt_ref))
    h = tau / nsteps
    for step in range(nsteps):
        t = (step + 0.5) * h
        s = t / tau
        lam = t / tau
        ham = np.diag(s * e1 + (1.0 - s) * (1.0 - lam) * e0) + (1.0 - s) * lam * gamma * hx
        w, v = np.linalg.eigh(ham)
        psi = v @ (np.exp(-1j * h * w) * (v.conj().T @ psi))
    return StateVector(psi)


def kl_fit_alpha(p_opt, n: int) -> float:
    """Gibbs temperature whose mean driver energy matches the distribution.

    Closed form: (1+e^alpha) <E0> = n, so alpha = ln(n/<E0> - 1); exact
    whenever the input is itself a Gibbs product distribution.
    """
    p = np.asarray(p_opt, dtype=np.float64)
    if p.size != 1 << n:
        raise ValueError("distribution must have length 2^n")
    if p.min() < 0 or abs(float(p.sum()) - 1.0) > 1e-6:
        raise ValueError("input is not a probability distribution")
    pops = np.bitwise_count(np.arange(1 << n, dtype=np.uint64)).astype(np.float64)
    mean = float(pops @ p)
    if not 0 < mean < n:
        raise NoRootError(f"mean driver energy {mean} is at the boundary of (0, {n})")
    return math.log(n / mean - 1.0)


def q_distribution(mu, alpha: float, n: int) -> np.ndarray:
    """Shell distribution Q_E proportional to e^(alpha E) sum_(I_E) mu_m."""
    mu = np.asarray(mu, dtype=np.float64)
    if mu.size != 1 << n:
        raise ValueError("mu must have length 2^n")
    if mu.min() <= 0:
        raise ValueError("mu entries must be strictly positive")
    pops = np.bitwise_count(np.arange(1 << n, dtype=np.uint64)).astype(np.int64)
    shell_sums = np.bincount(pops, weights=mu, minlength=n + 1)
    logq = np.log(shell_sums) + alpha * np.arange(n + 1)
    logq -= logq.max()
    q = np.exp(logq)
    return q / q.sum()


def exact_analysis(
    instance: IsingInstance, schedule: Schedule, beta: float, engine: str | None = None
) -> ExactAnalysis:
    """Everything exact for one cell: Z1, mu, optimal table, variances, alphas."""
    n = instance.n
    mu = exact_mu(instance, schedule, beta, engine)
    z1 = exact_partition(target_spectrum(instance), beta)
    p_opt = exact_optimal(mu).probs
    alpha_star = solve_alpha_exact(mu, n)
    return ExactAnalysis(
        beta=float(beta),
        z1=z1,
        mu=mu,
        p_opt=p_opt,
        sigma2_min=min_variance(mu, z1),
        alpha_star=alpha_star,
        alpha_kl=kl_fit_alpha(p_opt, n),
        q_dist=q_distribution(mu, alpha_star, n),
    )


def locality_diagnostic(
    instance: IsingInstance, schedule: Schedule, beta: float, alpha: float, engine: str | None = None
):
    """Three site-pair matrices comparing sqrt(mu) across neighboring shells.

    For each pair (j1, j2): (a) the decayed mean of the two single-bit
    weights below, (b) the two-bit weight itself, (c) the raised mean of
    the three-bit weights above.  Diagonals are NaN (excluded).
    """
    n = instance.n
    if n < 3:
        raise ValueError("locality diagnostic requires n >= 3")
    if n > _LOCALITY_CAP:
        raise ResourceLimitError(f"locality diagnostic is capped at n <= {_LOCALITY_CAP}")
    nu = np.sqrt(exact_mu(instance, schedule, beta, engine))
    below = np.full((n, n), np.nan)
    direct = np.full((n, n), np.nan)
    above = np.full((n, n), np.nan)
    for j1 in range(n):
        for j2 in range(n):
            if j1 == j2:
                continue
            pair = (1 << j1) | (1 << j2)
            below[j1, j2] = 0.5 * math.exp(-alpha) * (nu[1 << j1] + nu[1 << j2])
            direct[j1, j2] = nu[pair]
            upper = [nu[pair | (1 << j3)] for j3 in range(n) if j3 != j1 and j3 != j2]
            above[j1, j2] = math.exp(alpha) * math.fsum(upper) / (n - 2)
    return below, direct, above


def write_locality_csv(path, matrix: np.ndarray) -> None:
    """One matrix as CSV with j1/j2 headers and empty diagonal cells."""
    n = matrix.shape[0]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("j1\\j2," + ",".join(str(j) for j in range(n)) + "\n")
        for j1 in range(n):
            cells = ["" if j1 == j2 else repr(matrix[j1, j2]) for j2 in range(n)]
            fh.write(f"{j1}," + ",".join(cells) + "\n")
