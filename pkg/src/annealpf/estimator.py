"""Trajectory estimator for the target partition function, plus variance
and scaling analysis.

One trajectory draws an initial basis state m from a distribution P,
evolves it through the schedule, measures an outcome state, and scores
z = exp(-beta E_outcome) / P(m).  The mean of z over trajectories is an
unbiased estimate of Z(beta) = sum_n exp(-beta E_n) for any strictly
positive P; the choice of P controls only the variance.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .evolution import Schedule, draw_outcome, transition_matrix
from .model import IsingInstance, h0_spectrum, target_spectrum
from .sampling import je_gibbs

FORMAT_VERSION = "1"


@dataclass(frozen=True, eq=False)
class EstimateResult:
    """One estimation run: the estimate, its sampling statistics, and the
    raw trajectory records (initial state and measured outcome per draw)."""

    beta: float
    z_est: float
    m_s: int
    empirical_variance: float
    standard_error: float
    seed: int
    sampler: str
    tau: float
    dt: float
    gamma: float
    initial_states: np.ndarray = field(repr=False)
    outcomes: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares slope of log2(relative variance) against spin count."""

    points: tuple
    gamma: float
    intercept: float
    residual_norm: float


def _stream(seed: int, i: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((int(seed), int(i)))))


def estimate_z(
    instance: IsingInstance,
    schedule: Schedule,
    dist,
    beta: float,
    m_s: int,
    seed: int = 0,
    workers: int | None = None,
    engine: str | None = None,
) -> EstimateResult:
    """Average z over m_s trajectories drawn from ``dist``.

    Trajectory i owns the stream keyed (seed, i): it first drives the
    initial-state draw, then the measurement draw.  Distinct initial
    states are evolved once each (the evolution is deterministic) and the
    accumulation runs in trajectory order, so the result is bit-identical
    for any worker count or scheduling.
    """
    if m_s < 1:
        raise ValueError("m_s must be >= 1")
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if workers is not None and workers < 1:
        raise ValueError("workers must be >= 1")
    if dist.n != instance.n:
        raise ValueError("distribution size does not match the instance")

    initial = np.empty(m_s, dtype=np.int64)
    for i in range(m_s):
        initial[i] = dist.sample(_stream(seed, i))

    e1 = target_spectrum(instance).energies
    uniq = np.unique(initial)
    probs = transition_matrix(instance, schedule, columns=uniq, engine=engine, spectrum=e1)
    cdfs = np.cumsum(probs, axis=0)
    col_of = {int(m): c for c, m in enumerate(uniq)}

    outcomes = np.empty(m_s, dtype=np.int64)
    for i in range(m_s):
        rng = _stream(seed, i)
        replay = dist.sample(rng)  # advance the stream exactly as in the first pass
        if replay != initial[i]:
            raise RuntimeError("distribution sampling is not reproducible from its stream")
        outcomes[i] = draw_outcome(cdfs[:, col_of[int(replay)]], rng)

    z = np.exp(-beta * e1[outcomes]) / dist.prob(initial)
    z_est = float(np.mean(z))
    variance = float(np.var(z, ddof=1)) if m_s > 1 else 0.0
    return EstimateResult(
        beta=float(beta),
        z_est=z_est,
        m_s=m_s,
        empirical_variance=variance,
        standard_error=math.sqrt(variance / m_s),
        seed=int(seed),
        sampler=dist.descriptor(),
        tau=schedule.tau,
        dt=schedule.dt,
        gamma=schedule.gamma,
        initial_states=initial,
        outcomes=outcomes,
    )


def reuse_estimate(
    instance: IsingInstance,
    schedule: Schedule,
    pre,
    dist,
    beta: float,
    m_s: int,
    seed: int = 0,
    workers: int | None = None,
    engine: str | None = None,
) -> EstimateResult:
    """Stratified estimate that folds presample records into the answer.

    Z splits exactly over initial states into sum_m E[exp(-beta E_out) | m].
    The low-shell part (popcount <= n_e) is the sample mean of
    exp(-beta E) over each state's stored presample records; the high
    shells are importance-sampled with the practical distribution
    renormalized to popcount > n_e.  Unbiased because the presample draws
    and the estimation draws are independent.  The reported variance
    covers only the estimation phase; the presample contribution is a
    fixed offset once the records exist.
    """
    from .sampling import PracticalDistribution, high_shell_distribution

    if not isinstance(dist, PracticalDistribution):
        raise ValueError("reuse estimation requires a practical distribution")
    if pre.m_ps < 1:
        raise ValueError("reuse estimation needs real presample records")
    if (pre.n, pre.n_e) != (dist.n, dist.n_e):
        raise ValueError("presample data and distribution disagree on (n, n_e)")
    if dist.n != instance.n:
        raise ValueError("distribution size does not match the instance")
    if m_s < 1:
        raise ValueError("m_s must be >= 1")
    if beta < 0:
        raise ValueError("beta must be >= 0")

    low_term = math.fsum(
        math.fsum(np.exp(-beta * energies)) / energies.size for _, energies in pre.records
    )

    high = high_shell_distribution(dist)
    initial = np.empty(m_s, dtype=np.int64)
    for i in range(m_s):
        initial[i] = high.sample(_stream(seed, i))

    e1 = target_spectrum(instance).energies
    uniq = np.unique(initial)
    probs = transition_matrix(instance, schedule, columns=uniq, engine=engine, spectrum=e1)
    cdfs = np.cumsum(probs, axis=0)
    col_of = {int(m): c for c, m in enumerate(uniq)}

    outcomes = np.empty(m_s, dtype=np.int64)
    for i in range(m_s):
        rng = _stream(seed, i)
        replay = high.sample(rng)
        if replay != initial[i]:
            raise RuntimeError("distribution sampling is not reproducible from its stream")
        outcomes[i] = draw_outcome(cdfs[:, col_of[int(replay)]], rng)

    z = np.exp(-beta * e1[outcomes]) / high.prob(initial)
    variance = float(np.var(z, ddof=1)) if m_s > 1 else 0.0
    return EstimateResult(
        beta=float(beta),
        z_est=low_term + float(np.mean(z)),
        m_s=m_s,
        empirical_variance=variance,
        standard_error=math.sqrt(variance / m_s),
        seed=int(seed),
        sampler=f"practical-reuse(n_e={dist.n_e})",
        tau=schedule.tau,
        dt=schedule.dt,
        gamma=schedule.gamma,
        initial_states=initial,
        outcomes=outcomes,
    )


def je_work_estimate(
    instance: IsingInstance,
    schedule: Schedule,
    beta: float,
    m_s: int,
    seed: int = 0,
    engine: str | None = None,
):
    """Estimate with the Gibbs(beta) initial distribution and report the
    exponential-work average.

    With W = E_outcome - popcount(initial), every trajectory satisfies
    z = Z0(beta) exp(-beta W) where Z0 = (1+e^-beta)^n, so the partition
    estimate and Z0 times the work average must agree; a relative
    mismatch beyond 1e-12 raises.
    Returns (work_average, EstimateResult).
    """
    dist = je_gibbs(beta, instance.n)
    result = estimate_z(instance, schedule, dist, beta, m_s, seed=seed, engine=engine)
    e1 = target_spectrum(instance).energies
    e0 = h0_spectrum(instance.n)
    work = e1[result.outcomes] - e0[result.initial_states]
    ratio = float(np.mean(np.exp(-beta * work)))
    z0 = (1.0 + math.exp(-beta)) ** instance.n
    if abs(z0 * ratio - result.z_est) > 1e-12 * max(abs(result.z_est), 1.0):
        raise RuntimeError("work-average identity violated; estimator internals inconsistent")
    return ratio, result


def exact_variance(dist, mu, z1: float) -> float:
    """Single-trajectory variance sum_m mu_m / P_m - Z1^2 for ``dist``."""
    mu = np.asarray(mu, dtype=np.float64)
    if mu.ndim != 1 or mu.size != 1 << dist.n:
        raise ValueError("mu length does not match the distribution")
    p = dist.prob(np.arange(mu.size))
    return math.fsum(mu / p) - z1 * z1


def min_variance(mu, z1: float) -> float:
    """Variance of the optimal distribution: (sum_m sqrt(mu_m))^2 - Z1^2."""
    mu = np.asarray(mu, dtype=np.float64)
    if mu.min() <= 0:
        raise ValueError("mu entries must be strictly positive")
    s = math.fsum(np.sqrt(mu))
    return s * s - z1 * z1


def required_samples(sigma2: float, epsilon: float, z1: float) -> int:
    """Trajectories needed for relative standard error epsilon."""
    if sigma2 <= 0 or epsilon <= 0 or z1 <= 0:
        raise ValueError("sigma2, epsilon and z1 must all be positive")
    return math.ceil(sigma2 / (epsilon * epsilon * z1 * z1))


def fit_gamma(points) -> ScalingFit:
    """Fit relvar ~ 2^(gamma n) by least squares on log2(relvar) vs n."""
    pts = tuple((int(n), float(rv)) for n, rv in points)
    if len(pts) < 3:
        raise ValueError("at least 3 points are required")
    if any(rv <= 0 for _, rv in pts):
        raise ValueError("relative variances must be positive")
    x = np.asarray([n for n, _ in pts], dtype=np.float64)
    y = np.log2([rv for _, rv in pts])
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.linalg.norm(y - (slope * x + intercept)))
    return ScalingFit(points=pts, gamma=float(slope), intercept=float(intercept), residual_norm=residual)


def gamma_theory(alpha: float) -> float:
    """Predicted scaling exponent of the Gibbs(alpha) sampler at large beta."""
    return math.log2(1.0 + 2.0 * math.exp(-alpha) / (1.0 + math.exp(-2.0 * alpha)))


def gamma_prime(alpha: float, alpha_prime: float) -> float:
    """Scaling exponent when sampling at alpha_prime instead of alpha.

    Equals ``gamma_theory(alpha)`` at alpha_prime = alpha and exceeds it
    for any mismatch.
    """
    num = math.exp(-alpha_prime) + math.exp(-(2.0 * alpha - alpha_prime))
    return math.log2(1.0 + num / (1.0 + math.exp(-2.0 * alpha)))


def total_cost(tau0: float, tau: float, sigma2: float) -> float:
    """Wall-clock-weighted sampling cost (tau0 + tau) sigma2."""
    if tau0 < 0 or tau < 0:
        raise ValueError("times must be nonnegative")
    return (tau0 + tau) * sigma2


# ---------------------------------------------------------------------------
# result records

def result_record(
    result: EstimateResult,
    instance_digest: str,
    config: dict | None = None,
    extras: dict | None = None,
    include_trajectories: bool = True,
) -> dict:
    """Self-describing JSON record for one estimation cell."""
    rec = {
        "format_version": FORMAT_VERSION,
        "record": "estimate",
        "instance_digest": instance_digest,
        "beta": result.beta,
        "z_est": result.z_est,
        "m_s": result.m_s,
        "empirical_variance": result.empirical_variance,
        "standard_error": result.standard_error,
        "seed": result.seed,
        "sampler": result.sampler,
        "schedule": {"tau": result.tau, "dt": result.dt, "gamma": result.gamma},
    }
    if config:
        rec["config"] = dict(config)
    if extras:
        rec.update(extras)
    if include_trajectories:
        rec["trajectories"] = {
            "initial_states": [int(v) for v in result.initial_states],
            "outcomes": [int(v) for v in result.outcomes],
        }
    return rec


def append_jsonl(path, records) -> None:
    """Append one JSON object per line; safe to extend an existing file."""
    with open(path, "a", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec))
            fh.write("\n")


def read_jsonl(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def _flatten(rec: dict, prefix: str = "") -> dict:
    flat = {}
    for key, value in rec.items():
        name = f"{prefix}{key}"
        if key == "trajectories":
            continue  # bulk arrays stay in the JSONL
        if isinstance(value, dict):
            flat.update(_flatten(value, prefix=f"{name}."))
        elif isinstance(value, list):
            flat[name] = json.dumps(value)
        else:
            flat[name] = value
    return flat


def export_csv(records, path) -> None:
    """Flatten records (minus trajectory arrays) into one CSV table."""
    rows = [_flatten(rec) for rec in records]
    columns: list[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
