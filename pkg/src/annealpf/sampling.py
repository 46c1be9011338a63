"""Initial-state distributions and the presampling/extrapolation protocol.

Four distributions over the 2^n driver basis states are provided:

* ``je_gibbs(beta, n)``: Gibbs weights exp(-beta popcount(m)), the choice
  that turns the trajectory estimator into an exponential-work average.
* ``variational_gibbs(alpha, n)``: the same family at a free inverse
  temperature alpha, normally the root found by ``solve_alpha_exact``.
* ``exact_optimal(mu)``: probabilities proportional to sqrt(mu_m), the
  variance-minimizing choice, requiring the full mu table.
* ``practical_distribution(...)``: sqrt(mu)-weights estimated by
  presampling all states with popcount <= n_e and extrapolated to higher
  shells through an exponential-decay model in the shell energy.

Every distribution exposes ``prob`` (exact probability lookup, scalar or
vectorized), ``sample`` (one draw from an explicit numpy Generator) and
``descriptor`` (a short label for result records).  Probabilities are
strictly positive and sum to 1 through closed-form shell sums; no mode
enumerates the full basis except the explicitly tabulated optimal one.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoRootError
from .evolution import Schedule, draw_outcome, measurement_cdf, transition_matrix
from .model import IsingInstance, canonical_json, h0_spectrum, target_spectrum

_log = logging.getLogger(__name__)

_ALPHA_BRACKET = (-10.0, 40.0)
_ALPHA_SCAN_STEP = 0.05
_RESIDUAL_TOL = 1e-10


def _popcounts(m) -> np.ndarray:
    return np.bitwise_count(np.asarray(m, dtype=np.uint64)).astype(np.int64)


def _checked_indices(m, n: int) -> np.ndarray:
    marr = np.atleast_1d(np.asarray(m, dtype=np.int64))
    if marr.size and not (0 <= marr.min() and marr.max() < (1 << n)):
        raise ValueError(f"basis index out of range for n={n}")
    return marr


# ---------------------------------------------------------------------------
# distributions

@dataclass(frozen=True)
class GibbsDistribution:
    """Product distribution: each spin down with probability 1/(1+e^alpha)."""

    alpha: float
    n: int
    kind: str = "variational-gibbs"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")

    def descriptor(self) -> str:
        return f"{self.kind}(alpha={self.alpha!r})"

    def prob(self, m):
        marr = _checked_indices(m, self.n)
        lp = -self.alpha * _popcounts(marr) - self.n * np.logaddexp(0.0, -self.alpha)
        out = np.exp(lp)
        return float(out[0]) if np.ndim(m) == 0 else out

    def sample(self, rng: np.random.Generator) -> int:
        p_down = math.exp(-np.logaddexp(0.0, self.alpha))
        bits = rng.random(self.n) < p_down
        m = 0
        for i in range(self.n):
            if bits[i]:
                m |= 1 << i
        return m


def je_gibbs(beta: float, n: int) -> GibbsDistribution:
    """Gibbs initial distribution at the estimation temperature itself."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    return GibbsDistribution(float(beta), n, kind="je-gibbs")


def variational_gibbs(alpha: float, n: int) -> GibbsDistribution:
    """Gibbs initial distribution at a free alpha (negative allowed)."""
    return GibbsDistribution(float(alpha), n)


@dataclass(frozen=True)
class OptimalDistribution:
    """Explicit table proportional to sqrt(mu_m)."""

    probs: np.ndarray = field(repr=False)
    _cdf: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.probs.size.bit_length() - 1

    def descriptor(self) -> str:
        return f"exact-optimal(n={self.n})"

    def prob(self, m):
        out = self.probs[_checked_indices(m, self.n)]
        return float(out[0]) if np.ndim(m) == 0 else out

    def sample(self, rng: np.random.Generator) -> int:
        return draw_outcome(self._cdf, rng)


def exact_optimal(mu) -> OptimalDistribution:
    """The variance-minimizing distribution, prob(m) = sqrt(mu_m)/sum sqrt."""
    mu = np.asarray(mu, dtype=np.float64)
    if mu.ndim != 1 or mu.size < 2 or mu.size & (mu.size - 1):
        raise ValueError("mu must be a 1-D vector of length 2^n")
    if mu.min() <= 0:
        raise ValueError("mu entries must be strictly positive")
    w = np.sqrt(mu)
    probs = w / np.sum(w)
    probs.setflags(write=False)
    return OptimalDistribution(probs, np.cumsum(probs))


@dataclass(frozen=True)
class PracticalDistribution:
    """Presampled sqrt(mu) weights below n_e, shell-uniform weights above.

    States with popcount <= n_e carry their individual nu-hat weight;
    every state in a higher shell E carries the extrapolated shell value
    nu_bar_E, so a draw picks a category (single low state or whole
    shell) and then, for shells, a uniform member.
    """

    n: int
    n_e: int
    low_states: np.ndarray = field(repr=False)   # ascending basis indices
    low_probs: np.ndarray = field(repr=False)    # aligned with low_states
    shell_state_probs: np.ndarray = field(repr=False)  # per-state prob, index E
    _category_cdf: np.ndarray = field(repr=False)

    def descriptor(self) -> str:
        return f"practical(n_e={self.n_e})"

    def prob(self, m):
        marr = _checked_indices(m, self.n)
        pops = _popcounts(marr)
        out = self.shell_state_probs[pops]
        low = pops <= self.n_e
        if low.any():
            pos = np.searchsorted(self.low_states, marr[low])
            out[low] = self.low_probs[pos]
        return float(out[0]) if np.ndim(m) == 0 else out

    def sample(self, rng: np.random.Generator) -> int:
        idx = draw_outcome(self._category_cdf, rng)
        if idx < self.low_states.size:
            return int(self.low_states[idx])
        shell = self.n_e + 1 + (idx - self.low_states.size)
        return uniform_in_shell(shell, self.n, rng)


def uniform_in_shell(E: int, n: int, rng: np.random.Generator) -> int:
    """Uniformly random n-bit word with popcount E, by combination unranking."""
    if not 0 <= E <= n:
        raise ValueError(f"shell energy {E} out of range for n={n}")
    r = int(rng.integers(math.comb(n, E)))
    m = 0
    for k in range(E, 0, -1):
        c = k - 1
        while math.comb(c + 1, k) <= r:
            c += 1
        m |= 1 << c
        r -= math.comb(c, k)
    return m


# ---------------------------------------------------------------------------
# presampling

@dataclass(frozen=True, eq=False)
class PresampleData:
    """Measured trajectory energies for every state with popcount <= n_e.

    ``records`` pairs each presampled basis index with its m_ps measured
    target energies; moment tables at any beta derive from them, so one
    presampling run serves every later temperature.  ``from_exact_mu``
    builds the same interface from an exact mu table (m_ps = 0 marks the
    synthetic origin); such instances serve diagnostics only and cannot
    be written to a file.
    """

    n: int
    n_e: int
    m_ps: int
    tau: float
    dt: float
    records: tuple  # ((m, energies ndarray), ...) ascending in m
    seed: int
    _exact: dict = field(default_factory=dict, repr=False)
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not 1 <= self.n_e <= self.n:
            raise ValueError("n_e must satisfy 1 <= n_e <= n")
        expect = sum(math.comb(self.n, e) for e in range(self.n_e + 1))
        if len(self.records) != expect:
            raise ValueError(
                f"records must cover all {expect} states with popcount <= n_e, got {len(self.records)}"
            )
        ms = [m for m, _ in self.records]
        if ms != sorted(ms) or len(set(ms)) != len(ms):
            raise ValueError("records must be sorted by basis index without duplicates")

    @classmethod
    def from_exact_mu(cls, mu, n: int, n_e: int, beta: float) -> "PresampleData":
        """Wrap exact mu values (full 2^n vector) as a noise-free table at one beta."""
        mu = np.asarray(mu, dtype=np.float64)
        if mu.size != 1 << n:
            raise ValueError("mu must have length 2^n")
        states = [m for m in range(1 << n) if m.bit_count() <= n_e]
        records = tuple((m, np.empty(0)) for m in states)
        pre = cls(n, n_e, 0, 0.0, 0.0, records, 0)
        pre._exact[float(beta)] = mu[np.asarray(states)]
        return pre

    def states(self) -> np.ndarray:
        return np.asarray([m for m, _ in self.records], dtype=np.int64)

    def mu_hat(self, beta: float) -> np.ndarray:
        """Second-moment estimates, aligned with ``states()``.

        Computed in shifted log space so large beta*energy products do not
        underflow term-by-term; a result that still underflows float64 is
        reported rather than silently zeroed.
        """
        key = float(beta)
        if key in self._exact:
            return self._exact[key]
        if self.m_ps < 1:
            raise ValueError(
                f"synthetic moment table holds beta={sorted(self._exact)} only, not beta={beta}"
            )
        if key not in self._cache:
            out = np.empty(len(self.records))
            for pos, (_, energies) in enumerate(self.records):
                ex = -2.0 * key * energies
                top = ex.max()
                out[pos] = math.exp(top) * (np.exp(ex - top).mean())
            if out.min() <= 0:
                raise ValueError(
                    f"mu-hat underflows float64 at beta={beta}; measured energies too large"
                )
            out.setflags(write=False)
            self._cache[key] = out
        return self._cache[key]

    def nu_hat(self, beta: float) -> np.ndarray:
        return np.sqrt(self.mu_hat(beta))

    def shell_of_states(self) -> np.ndarray:
        return _popcounts(self.states())

    def mu_bar_direct(self, beta: float) -> np.ndarray:
        """Per-shell means of mu-hat for E = 0..n_e."""
        shells = self.shell_of_states()
        mu = self.mu_hat(beta)
        return np.asarray([mu[shells == e].mean() for e in range(self.n_e + 1)])

    def nu_bar_direct(self, beta: float) -> np.ndarray:
        """Per-shell means of nu-hat for E = 0..n_e."""
        shells = self.shell_of_states()
        nu = self.nu_hat(beta)
        return np.asarray([nu[shells == e].mean() for e in range(self.n_e + 1)])


def presample(
    instance: IsingInstance,
    schedule: Schedule,
    n_e: int,
    m_ps: int,
    betas=(),
    seed: int = 0,
    engine: str | None = None,
) -> PresampleData:
    """Run m_ps evolve+measure trajectories from every state with popcount <= n_e.

    The evolution from each initial state is computed once (it is
    deterministic); each trajectory i of state m draws its measurement
    from an independent stream keyed (seed, m, i), so results do not
    depend on execution order.  ``betas`` only prewarms the moment cache.
    """
    if not 1 <= n_e <= instance.n:
        raise ValueError("n_e must satisfy 1 <= n_e <= n")
    if m_ps < 1:
        raise ValueError("m_ps must be >= 1")
    if schedule.gamma != 1.0:
        raise ValueError("presampling is defined at gamma = 1 (the file format has no gamma field)")
    e1 = target_spectrum(instance).energies
    states = [m for m in range(1 << instance.n) if m.bit_count() <= n_e]
    probs = transition_matrix(instance, schedule, columns=states, engine=engine, spectrum=e1)
    records = []
    for col, m in enumerate(states):
        cdf = measurement_cdf(probs[:, col])
        energies = np.empty(m_ps)
        for i in range(m_ps):
            stream = np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, m, i))))
            energies[i] = e1[draw_outcome(cdf, stream)]
        records.append((m, energies))
    pre = PresampleData(
        instance.n, n_e, m_ps, schedule.tau, schedule.dt, tuple(records), int(seed)
    )
    for beta in betas:
        pre.mu_hat(beta)
    return pre


def write_presample(path, pre: PresampleData) -> None:
    if pre.m_ps < 1:
        raise ValueError("synthetic moment tables cannot be serialized")
    doc = {
        "n": pre.n,
        "n_e": pre.n_e,
        "m_ps": pre.m_ps,
        "schedule": {"tau": pre.tau, "dt": pre.dt},
        "records": [{"m": int(m), "energies": [float(e) for e in en]} for m, en in pre.records],
        "seed": pre.seed,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(doc))
        fh.write("\n")


def read_presample(path) -> PresampleData:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    records = tuple(
        (int(r["m"]), np.asarray(r["energies"], dtype=np.float64)) for r in doc["records"]
    )
    return PresampleData(
        int(doc["n"]), int(doc["n_e"]), int(doc["m_ps"]),
        float(doc["schedule"]["tau"]), float(doc["schedule"]["dt"]),
        records, int(doc["seed"]),
    )


# ---------------------------------------------------------------------------
# shell extrapolation

def shell_moment(mu_base: float, nu_base: float, alpha: float, n: int, n_e: int, E: int) -> float:
    """Extrapolated second moment of one shell under finite-population mixing.

    The base layer contributes its mean mu and mean-nu-squared weighted by
    exact binomial ratios; both boundary substitutions are exact: E = n_e
    returns mu_base, E = n returns exp(-2 alpha (n - n_e)) nu_base^2.
    """
    cn = math.comb(n, n_e)
    ce = math.comb(E, n_e)
    if cn <= 1:
        raise ValueError("extrapolation requires C(n, n_e) > 1")
    if not n_e <= E <= n:
        raise ValueError(f"shell energy {E} out of range [{n_e}, {n}]")
    within = mu_base * (float(cn - ce) / float(ce * (cn - 1)))
    across = (nu_base * nu_base) * (float(cn * (ce - 1)) / float(ce * (cn - 1)))
    return math.exp(-2.0 * alpha * (E - n_e)) * (within + across)


def extrapolate_shells(pre: PresampleData, alpha: float, n: int, beta: float):
    """Shell means (nu_bar_E, mu_bar_E) for E in (n_e, n].

    nu decays exponentially from the base-layer mean; mu follows the
    finite-population formula of ``shell_moment``.  Returns two arrays of
    length n - n_e, index 0 holding shell n_e + 1.
    """
    if n != pre.n:
        raise ValueError("n does not match the presample data")
    if math.comb(n, pre.n_e) <= 1:
        raise ValueError("extrapolation requires C(n, n_e) > 1")
    nu_base = float(pre.nu_bar_direct(beta)[pre.n_e])
    mu_base = float(pre.mu_bar_direct(beta)[pre.n_e])
    shells = np.arange(pre.n_e + 1, n + 1)
    nu_bar = np.exp(-alpha * (shells - pre.n_e)) * nu_base
    mu_bar = np.asarray([shell_moment(mu_base, nu_base, alpha, n, pre.n_e, int(E)) for E in shells])
    return nu_bar, mu_bar


# ---------------------------------------------------------------------------
# self-consistent alpha

def _mean_shell_energy(log_weights: np.ndarray) -> float:
    """Mean of E under weights exp(log_weights), E = 0..len-1."""
    w = log_weights - log_weights.max()
    p = np.exp(w)
    p /= p.sum()
    return float(p @ np.arange(p.size))


def _bisect_residual(f, lo: float, hi: float, what: str) -> float:
    f_lo, f_hi = f(lo), f(hi)
    if abs(f_lo) < _RESIDUAL_TOL:
        return lo
    if abs(f_hi) < _RESIDUAL_TOL:
        return hi
    if (f_lo > 0) == (f_hi > 0):
        raise NoRootError(
            f"{what}: no sign change on [{lo}, {hi}] (f({lo})={f_lo:.3e}, f({hi})={f_hi:.3e})",
            f_lo,
            f_hi,
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if abs(f_mid) < _RESIDUAL_TOL:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    raise NoRootError(f"{what}: residual tolerance not reached", f_lo, f_hi)


def solve_alpha_exact(mu, n: int) -> float:
    """Root of n/(1+e^a) = <E> under shell weights e^{aE} sum_{I_E} mu_m.

    The weighted mean is evaluated in shifted log space, so any alpha in
    the bracket [-10, 40] is safe.  The residual is driven below 1e-10;
    the root is unique (the underlying variance is convex in alpha).
    """
    mu = np.asarray(mu, dtype=np.float64)
    if mu.size != 1 << n:
        raise ValueError("mu must have length 2^n")
    if mu.min() <= 0:
        raise ValueError("mu entries must be strictly positive")
    shell_sums = np.bincount(_popcounts(np.arange(1 << n)), weights=mu, minlength=n + 1)
    ln_s = np.log(shell_sums)
    energies = np.arange(n + 1)

    def residual(a):
        return n * math.exp(-np.logaddexp(0.0, a)) - _mean_shell_energy(ln_s + a * energies)

    return _bisect_residual(residual, *_ALPHA_BRACKET, what="alpha self-consistency")


def _practical_log_weights(pre: PresampleData, n: int, beta: float):
    """alpha-independent pieces of log Q_E for the practical condition.

    Returns (base, slope) arrays over E = 0..n with
    log w_E(alpha) = base_E + slope_E * alpha.
    """
    n_e = pre.n_e
    mu_direct = pre.mu_bar_direct(beta)
    base = np.empty(n + 1)
    slope = np.empty(n + 1)
    for e in range(n_e + 1):
        base[e] = math.log(math.comb(n, e)) + math.log(mu_direct[e])
        slope[e] = e
    if n_e < n:
        nu_base = float(pre.nu_bar_direct(beta)[n_e])
        mu_base = float(mu_direct[n_e])
        for e in range(n_e + 1, n + 1):
            bracket = shell_moment(mu_base, nu_base, 0.0, n, n_e, e)
            base[e] = math.log(math.comb(n, e)) + math.log(bracket)
            slope[e] = e - 2.0 * (e - n_e)
    return base, slope


def solve_alpha_practical(pre: PresampleData, n: int, beta: float) -> float:
    """Self-consistent alpha from presampled moments and shell extrapolation.

    Unlike the exact condition, the shell weights above n_e depend on
    alpha through the extrapolation itself.  A 0.05-step scan of the
    bracket detects root multiplicity; with several sign changes the
    smallest nonnegative root is returned and a warning logged.
    """
    base, slope = _practical_log_weights(pre, n, beta)

    def residual(a):
        return n * math.exp(-np.logaddexp(0.0, a)) - _mean_shell_energy(base + a * slope)

    lo, hi = _ALPHA_BRACKET
    grid = np.arange(lo, hi + _ALPHA_SCAN_STEP / 2, _ALPHA_SCAN_STEP)
    values = np.asarray([residual(x) for x in grid])
    signs = np.sign(values)
    flips = np.nonzero(signs[:-1] * signs[1:] < 0)[0]
    if len(flips) == 0:
        exact_zero = np.nonzero(signs == 0)[0]
        if len(exact_zero):
            return float(grid[exact_zero[0]])
        raise NoRootError(
            f"practical alpha: no sign change on [{lo}, {hi}]",
            float(values[0]),
            float(values[-1]),
        )
    if len(flips) == 1:
        i = flips[0]
        return _bisect_residual(residual, grid[i], grid[i + 1], what="practical alpha")
    roots = sorted(
        _bisect_residual(residual, grid[i], grid[i + 1], what="practical alpha") for i in flips
    )
    _log.warning(
        "practical alpha condition has %d roots in [%g, %g]: %s; returning smallest nonnegative",
        len(roots), lo, hi, roots,
    )
    for r in roots:
        if r >= 0:
            return r
    return roots[0]


def practical_distribution(
    pre: PresampleData, alpha: float, n: int, beta: float
) -> PracticalDistribution:
    """Assemble the deployable distribution from presampled weights.

    Normalization sums individual nu-hat weights over the presampled
    states and closed-form C(n,E) nu_bar_E terms over the extrapolated
    shells.  With n_e = n there is nothing to extrapolate and the result
    equals ``exact_optimal`` built from the mu-hat table.
    """
    if n != pre.n:
        raise ValueError("n does not match the presample data")
    nu_low = pre.nu_hat(beta)
    if nu_low.min() <= 0:
        raise RuntimeError("nonpositive nu-hat weight; presample moments are corrupt")
    n_e = pre.n_e
    shell_values = np.zeros(n + 1)
    norm = float(np.sum(nu_low))
    if n_e < n:
        nu_bar, _ = extrapolate_shells(pre, alpha, n, beta)
        for pos, e in enumerate(range(n_e + 1, n + 1)):
            shell_values[e] = nu_bar[pos]
            norm += math.comb(n, e) * nu_bar[pos]
    shell_state_probs = shell_values / norm
    shell_state_probs[: n_e + 1] = np.nan  # low shells resolve per state
    low_probs = nu_low / norm
    low_probs.setflags(write=False)
    shell_state_probs.setflags(write=False)
    shell_masses = [
        math.comb(n, e) * shell_state_probs[e] for e in range(n_e + 1, n + 1)
    ]
    category = np.concatenate([low_probs, np.asarray(shell_masses)])
    return PracticalDistribution(
        n=n,
        n_e=n_e,
        low_states=pre.states(),
        low_probs=low_probs,
        shell_state_probs=shell_state_probs,
        _category_cdf=np.cumsum(category),
    )


@dataclass(frozen=True, eq=False)
class HighShellDistribution:
    """Practical distribution conditioned on popcount > n_e.

    Serves the presample-reuse estimator, where the low shells are
    covered by stored records and only the extrapolated shells are
    importance-sampled.  prob() is 0 on the excluded low states.
    """

    n: int
    n_e: int
    shell_state_probs: np.ndarray = field(repr=False)  # renormalized, index E
    _shell_cdf: np.ndarray = field(repr=False)

    def descriptor(self) -> str:
        return f"practical-high(n_e={self.n_e})"

    def prob(self, m):
        marr = _checked_indices(m, self.n)
        out = self.shell_state_probs[_popcounts(marr)]
        return float(out[0]) if np.ndim(m) == 0 else out

    def sample(self, rng: np.random.Generator) -> int:
        shell = self.n_e + 1 + draw_outcome(self._shell_cdf, rng)
        return uniform_in_shell(shell, self.n, rng)


def high_shell_distribution(dist: PracticalDistribution) -> HighShellDistribution:
    """Renormalize the extrapolated shells of ``dist`` to a standalone distribution."""
    if dist.n_e >= dist.n:
        raise ValueError("no shells above n_e to condition on")
    masses = np.array(
        [math.comb(dist.n, e) * dist.shell_state_probs[e] for e in range(dist.n_e + 1, dist.n + 1)]
    )
    total = float(np.sum(masses))
    shell_state_probs = np.zeros(dist.n + 1)
    shell_state_probs[dist.n_e + 1 :] = dist.shell_state_probs[dist.n_e + 1 :] / total
    shell_state_probs.setflags(write=False)
    return HighShellDistribution(
        n=dist.n,
        n_e=dist.n_e,
        shell_state_probs=shell_state_probs,
        _shell_cdf=np.cumsum(masses / total),
    )


def recursive_nu(pre: PresampleData, alpha: float, m: int, beta: float) -> float:
    """Per-state extrapolated weight via the lower-neighbor recursion.

    nu(m) at shell L averages the L states one bit below m, scaled by
    e^{-alpha}.  Diagnostic only; bulk sampling uses shell averages.
    """
    if m.bit_count() <= pre.n_e:
        raise ValueError("recursion applies only above the presampled shells")
    nu_low = pre.nu_hat(beta)
    table = {int(s): float(v) for s, v in zip(pre.states(), nu_low)}
    decay = math.exp(-alpha)

    def value(state: int) -> float:
        if state in table:
            return table[state]
        level = state.bit_count()
        total = 0.0
        for bit in range(pre.n):
            if state >> bit & 1:
                total += value(state & ~(1 << bit))
        result = decay * total / level
        table[state] = result
        return result

    return value(int(m))
