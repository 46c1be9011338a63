"""Problem instances and diagonal spectra.

Two instance families are supported: Sherrington-Kirkpatrick spin glasses
(all-to-all Gaussian pair couplings plus Gaussian fields) and random 3-SAT
formulas built around a planted satisfying assignment.  Both are stored in
a common diagonal-Ising form

    E(m) = offset - sum_i F_i s_i - sum_{i<j} J_ij s_i s_j
                  - sum_{i<j<k} K_ijk s_i s_j s_k

where s_i = +1 - 2*bit_i(m): bit i of the basis index m is 1 when spin i
points down, which is also the convention under which Boolean variable
x_i is FALSE.  The driver diagonal is then simply the number of down
spins, ``h0_energy(m) = popcount(m)``, with ground state m = 0.

Instances are immutable, generated deterministically from a 64-bit seed
via the Philox counter-based generator, and round-trip through a JSON
file format documented in the README.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

_SK = "sk"
_SAT3 = "sat3"

# Clause variants: which literal positions are falsified under the planted
# assignment.  Order is fixed; generation walks the cumulative probabilities
# (p0, p1, p1, p1, p2, p2, p2) in this order.
_CLAUSE_VARIANTS = (
    (),
    (0,), (1,), (2,),
    (0, 1), (0, 2), (1, 2),
)


@dataclass(frozen=True)
class SatClause:
    """One 3-SAT clause: three distinct variables with literal signs.

    ``signs[p] = +1`` means position p holds the plain literal x_v,
    ``-1`` the negated literal.
    """

    vars: tuple[int, int, int]
    signs: tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "vars", tuple(int(v) for v in self.vars))
        object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))
        if len(self.vars) != 3 or len(set(self.vars)) != 3:
            raise ValueError(f"clause variables must be 3 distinct indices, got {self.vars}")
        if len(self.signs) != 3 or any(s not in (-1, 1) for s in self.signs):
            raise ValueError(f"clause signs must be three values in {{-1,+1}}, got {self.signs}")

    def satisfied_by(self, m: int) -> bool:
        """True when basis state m (bit=1 means x FALSE) satisfies the clause."""
        for v, c in zip(self.vars, self.signs):
            bit = (m >> v) & 1
            if (c == 1 and bit == 0) or (c == -1 and bit == 1):
                return True
        return False


@dataclass(frozen=True)
class IsingInstance:
    """A diagonal target Hamiltonian in the common coefficient form.

    ``pairs`` holds (i, j, J_ij) with i < j, ``triples`` (i, j, k, K_ijk)
    with i < j < k, ``fields`` one F_i per spin.  SAT3 instances carry the
    originating clauses and the planted assignment (x-bit convention,
    entry 1 = TRUE); their coefficients are exactly the clause-derived
    ones and are revalidated on construction.
    """

    kind: str
    n: int
    fields: tuple[float, ...]
    pairs: tuple[tuple[int, int, float], ...]
    triples: tuple[tuple[int, int, int, float], ...]
    offset: float
    seed: int
    clauses: tuple[SatClause, ...] | None = None
    planted: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.kind not in (_SK, _SAT3):
            raise ValueError(f"kind must be '{_SK}' or '{_SAT3}', got {self.kind!r}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "fields", tuple(float(f) for f in self.fields))
        object.__setattr__(
            self, "pairs", tuple((int(i), int(j), float(v)) for i, j, v in self.pairs)
        )
        object.__setattr__(
            self,
            "triples",
            tuple((int(i), int(j), int(k), float(v)) for i, j, k, v in self.triples),
        )
        if len(self.fields) != self.n:
            raise ValueError("fields must have one entry per spin")
        seen = set()
        for i, j, _ in self.pairs:
            if not (0 <= i < j < self.n):
                raise ValueError(f"pair indices must satisfy 0 <= i < j < n, got ({i}, {j})")
            if (i, j) in seen:
                raise ValueError(f"duplicate pair ({i}, {j})")
            seen.add((i, j))
        seen = set()
        for i, j, k, _ in self.triples:
            if not (0 <= i < j < k < self.n):
                raise ValueError(f"triple indices must satisfy 0 <= i < j < k < n, got ({i}, {j}, {k})")
            if (i, j, k) in seen:
                raise ValueError(f"duplicate triple ({i}, {j}, {k})")
            seen.add((i, j, k))

        if self.kind == _SK:
            if self.triples:
                raise ValueError("SK instances carry no triple couplings")
            if self.offset != 0.0:
                raise ValueError("SK instances have zero offset")
            if self.clauses is not None or self.planted is not None:
                raise ValueError("SK instances carry no clauses or planted assignment")
        else:
            if self.clauses is None or self.planted is None:
                raise ValueError("SAT3 instances require clauses and a planted assignment")
            object.__setattr__(self, "clauses", tuple(self.clauses))
            object.__setattr__(self, "planted", tuple(int(b) for b in self.planted))
            if len(self.planted) != self.n or any(b not in (0, 1) for b in self.planted):
                raise ValueError("planted must be n bits")
            for cl in self.clauses:
                if any(v >= self.n for v in cl.vars):
                    raise ValueError("clause variable out of range")
            off, fld, prs, trp = _clause_coefficients(self.n, self.clauses)
            if (off, fld, prs, trp) != (self.offset, self.fields, self.pairs, self.triples):
                raise ValueError("coefficients do not match the clause list")
            if clause_violations_of_state(self, self.planted_index()) != 0:
                raise ValueError("planted assignment does not satisfy all clauses")

    def planted_index(self) -> int:
        """Basis index of the planted assignment (bit=1 where x_i is FALSE)."""
        if self.planted is None:
            raise ValueError("instance has no planted assignment")
        return sum((1 - b) << i for i, b in enumerate(self.planted))


@dataclass(frozen=True)
class DiagonalSpectrum:
    """Target energies E_m for every basis index m, length 2^n."""

    energies: np.ndarray = field(repr=False)

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=np.float64)
        if e.ndim != 1 or e.size == 0 or e.size & (e.size - 1):
            raise ValueError("energies must be a 1-D array of length 2^n")
        e = np.ascontiguousarray(e)
        e.setflags(write=False)
        object.__setattr__(self, "energies", e)

    @property
    def n(self) -> int:
        return self.energies.size.bit_length() - 1


def _rng(seed: int) -> np.random.Generator:
    # Philox is counter-based: the stream depends only on the seed material,
    # never on scheduling.
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def sk_instance(n: int, seed: int) -> IsingInstance:
    """Draw a Sherrington-Kirkpatrick instance.

    Fields h_i and pair couplings J_ij are independent standard normals
    (fields drawn first, then pairs in lexicographic i < j order); each
    unordered pair appears once with the stored coupling J_ij / sqrt(n).
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    gen = _rng(seed)
    h = gen.standard_normal(n)
    raw = gen.standard_normal(n * (n - 1) // 2)
    scale = 1.0 / math.sqrt(n)
    pairs = []
    pos = 0
    for i in range(n):
        for j in range(i + 1, n):
            pairs.append((i, j, float(raw[pos] * scale)))
            pos += 1
    return IsingInstance(
        kind=_SK,
        n=n,
        fields=tuple(float(x) for x in h),
        pairs=tuple(pairs),
        triples=(),
        offset=0.0,
        seed=int(seed),
    )


def sat3_instance(
    n: int,
    clause_ratio: float = 4.25,
    p0: float = 1 / 7,
    p1: float = 1 / 14,
    p2: float = 3 / 14,
    seed: int = 0,
) -> IsingInstance:
    """Draw a planted random 3-SAT instance.

    A uniform planted assignment is chosen, then M = round(clause_ratio*n)
    clauses.  Each clause draws 3 distinct variables, then one of seven
    sign variants: all literals satisfied by the planted assignment
    (probability p0), exactly one falsified (p1 per choice of position),
    or exactly two (p2 per choice).  p0 + 3*p1 + 3*p2 must equal 1, which
    guarantees the planted assignment satisfies every clause.

    Coefficients come from expanding the per-clause violation indicator
    prod_p (1 - c_p s_p)/2 over the M clauses, so the spectrum counts
    unsatisfied clauses exactly; all coefficients are multiples of 1/8.
    """
    if n < 3:
        raise ValueError("n must be >= 3")
    probs = (p0, p1, p1, p1, p2, p2, p2)
    if min(probs) < 0 or abs(p0 + 3 * p1 + 3 * p2 - 1.0) > 1e-12:
        raise ValueError("clause-type probabilities must be nonnegative with p0 + 3*p1 + 3*p2 = 1")
    gen = _rng(seed)
    planted = tuple(int(b) for b in gen.integers(0, 2, size=n))
    m_clauses = round(clause_ratio * n)
    cum = np.cumsum(probs)
    clauses = []
    for _ in range(m_clauses):
        vs = gen.choice(n, size=3, replace=False)
        u = gen.random()
        variant = _CLAUSE_VARIANTS[min(int(np.searchsorted(cum, u, side="right")), 6)]
        signs = []
        for p, v in enumerate(vs):
            c = 1 if planted[v] else -1  # satisfied form of the literal
            signs.append(-c if p in variant else c)
        clauses.append(SatClause(tuple(int(v) for v in vs), tuple(signs)))
    offset, fields, pairs, triples = _clause_coefficients(n, clauses)
    return IsingInstance(
        kind=_SAT3,
        n=n,
        fields=fields,
        pairs=pairs,
        triples=triples,
        offset=offset,
        seed=int(seed),
        clauses=tuple(clauses),
        planted=planted,
    )


def _clause_coefficients(n, clauses):
    """Expand clause violation indicators into the common coefficient form.

    Per clause with signs c on variables (a, b, c): the violation indicator
    (1/8) prod (1 - c_p s_p) contributes 1/8 to the offset, c_p/8 to F,
    -c_p c_q/8 to J and +c_p c_q c_r/8 to K.  Exact-zero sums are dropped.
    """
    fields = [0.0] * n
    pairs: dict[tuple[int, int], float] = {}
    triples: dict[tuple[int, int, int], float] = {}
    for cl in clauses:
        (a, b, c), (ca, cb, cc) = cl.vars, cl.signs
        fields[a] += ca / 8
        fields[b] += cb / 8
        fields[c] += cc / 8
        for (i, ci), (j, cj) in (((a, ca), (b, cb)), ((a, ca), (c, cc)), ((b, cb), (c, cc))):
            key = (i, j) if i < j else (j, i)
            pairs[key] = pairs.get(key, 0.0) - ci * cj / 8
        key = tuple(sorted((a, b, c)))
        triples[key] = triples.get(key, 0.0) + ca * cb * cc / 8
    return (
        len(clauses) / 8,
        tuple(fields),
        tuple((i, j, v) for (i, j), v in sorted(pairs.items()) if v != 0.0),
        tuple((i, j, k, v) for (i, j, k), v in sorted(triples.items()) if v != 0.0),
    )


def target_spectrum(instance: IsingInstance) -> DiagonalSpectrum:
    """Evaluate E(m) for every basis index m in [0, 2^n)."""
    n = instance.n
    dim = 1 << n
    idx = np.arange(dim, dtype=np.int64)
    signs = np.empty((n, dim), dtype=np.float64)
    for i in range(n):
        signs[i] = 1.0 - 2.0 * ((idx >> i) & 1)
    e = np.full(dim, instance.offset, dtype=np.float64)
    for i, f in enumerate(instance.fields):
        if f != 0.0:
            e -= f * signs[i]
    for i, j, v in instance.pairs:
        e -= v * (signs[i] * signs[j])
    for i, j, k, v in instance.triples:
        e -= v * (signs[i] * signs[j] * signs[k])
    if instance.kind == _SAT3:
        # clause counts: the expansion is exact in dyadic arithmetic
        if not np.array_equal(e, np.round(e)) or e.min() < 0:
            raise ValueError("SAT3 spectrum must consist of nonnegative clause counts")
    return DiagonalSpectrum(e)


def clause_violation_counts(instance: IsingInstance) -> np.ndarray:
    """Count violated clauses per basis state by direct evaluation.

    Independent of the coefficient expansion; agrees with
    ``target_spectrum`` exactly for SAT3 instances.
    """
    if instance.clauses is None:
        raise ValueError("instance has no clause list")
    dim = 1 << instance.n
    idx = np.arange(dim, dtype=np.int64)
    counts = np.zeros(dim, dtype=np.int64)
    for cl in instance.clauses:
        violated = np.ones(dim, dtype=bool)
        for v, c in zip(cl.vars, cl.signs):
            bit = (idx >> v) & 1
            # literal true iff bit == 0 for plain, bit == 1 for negated
            violated &= bit != (0 if c == 1 else 1)
        counts += violated
    return counts


def clause_violations_of_state(instance: IsingInstance, m: int) -> int:
    """Number of clauses the single basis state m violates."""
    if instance.clauses is None:
        raise ValueError("instance has no clause list")
    return sum(0 if cl.satisfied_by(m) else 1 for cl in instance.clauses)


def h0_energy(m: int, n: int) -> int:
    """Driver-diagonal energy of basis state m: the number of down spins."""
    if not 0 <= m < (1 << n):
        raise ValueError(f"basis index {m} out of range for n={n}")
    return int(m).bit_count()


def h0_spectrum(n: int) -> np.ndarray:
    """Popcount of every basis index in [0, 2^n), as float64."""
    return np.bitwise_count(np.arange(1 << n, dtype=np.uint64)).astype(np.float64)


# ---------------------------------------------------------------------------
# serialization

def instance_to_json_dict(instance: IsingInstance) -> dict:
    d = {
        "kind": instance.kind,
        "n": instance.n,
        "seed": instance.seed,
        "fields": list(instance.fields),
        "pairs": [[i, j, v] for i, j, v in instance.pairs],
        "triples": [[i, j, k, v] for i, j, k, v in instance.triples],
        "offset": instance.offset,
    }
    if instance.kind == _SAT3:
        # literals as signed 1-based indices: +k is x_{k-1}, -k its negation
        d["clauses"] = [
            [c * (v + 1) for v, c in zip(cl.vars, cl.signs)] for cl in instance.clauses
        ]
        d["planted"] = list(instance.planted)
    return d


def instance_from_json_dict(d: dict) -> IsingInstance:
    clauses = None
    if d.get("clauses") is not None:
        clauses = tuple(
            SatClause(
                tuple(abs(lit) - 1 for lit in lits),
                tuple(1 if lit > 0 else -1 for lit in lits),
            )
            for lits in d["clauses"]
        )
    return IsingInstance(
        kind=d["kind"],
        n=int(d["n"]),
        fields=tuple(d["fields"]),
        pairs=tuple((p[0], p[1], p[2]) for p in d["pairs"]),
        triples=tuple((t[0], t[1], t[2], t[3]) for t in d["triples"]),
        offset=float(d["offset"]),
        seed=int(d["seed"]),
        clauses=clauses,
        planted=tuple(d["planted"]) if d.get("planted") is not None else None,
    )


def _emit_json(obj, out: list) -> None:
    if isinstance(obj, dict):
        out.append("{")
        for pos, key in enumerate(sorted(obj)):
            if pos:
                out.append(",")
            out.append(json.dumps(key, ensure_ascii=False))
            out.append(":")
            _emit_json(obj[key], out)
        out.append("}")
    elif isinstance(obj, (list, tuple)):
        out.append("[")
        for pos, item in enumerate(obj):
            if pos:
                out.append(",")
            _emit_json(item, out)
        out.append("]")
    elif isinstance(obj, float):
        if not math.isfinite(obj):
            raise ValueError(f"non-finite float in document: {obj}")
        out.append(format(obj, ".17g"))
    else:
        out.append(json.dumps(obj, ensure_ascii=False))


def canonical_json(obj) -> str:
    """Canonical serialization used for digests: sorted keys, compact, UTF-8.

    Floats carry 17 significant digits (trailing zeros stripped), which
    round-trips binary64 exactly, so equal values always produce
    identical bytes.
    """
    out: list = []
    _emit_json(obj, out)
    return "".join(out)


def instance_digest(instance: IsingInstance) -> str:
    """sha256 hex digest of the canonical JSON form."""
    return hashlib.sha256(canonical_json(instance_to_json_dict(instance)).encode()).hexdigest()


def write_instance(path, instance: IsingInstance) -> str:
    """Write the instance file (canonical JSON + newline); returns the digest."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(instance_to_json_dict(instance)))
        fh.write("\n")
    return instance_digest(instance)


def read_instance(path) -> IsingInstance:
    with open(path, encoding="utf-8") as fh:
        return instance_from_json_dict(json.load(fh))
