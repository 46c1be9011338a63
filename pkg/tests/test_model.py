import dataclasses
import json
import math

import numpy as np
import pytest

from annealpf import (
    IsingInstance,
    SatClause,
    h0_energy,
    h0_spectrum,
    instance_digest,
    read_instance,
    sat3_instance,
    sk_instance,
    target_spectrum,
    write_instance,
)
from annealpf.model import (
    clause_violation_counts,
    clause_violations_of_state,
    instance_from_json_dict,
    instance_to_json_dict,
)


class TestSkInstance:
    def test_deterministic_given_seed(self):
        a = sk_instance(3, seed=99)
        b = sk_instance(3, seed=99)
        assert a == b
        assert instance_digest(a) == instance_digest(b)

    def test_different_seeds_differ(self):
        assert sk_instance(3, seed=1) != sk_instance(3, seed=2)

    def test_structure(self, sk4):
        assert sk4.kind == "sk"
        assert len(sk4.fields) == 4
        assert len(sk4.pairs) == 6  # C(4,2), one coupling per unordered pair
        assert sk4.triples == ()
        assert sk4.offset == 0.0
        ij = [(i, j) for i, j, _ in sk4.pairs]
        assert ij == sorted(ij)
        assert all(i < j for i, j in ij)

    def test_coupling_variance_near_unit(self):
        # stored pair values are J/sqrt(n); the raw draws are standard normal
        n = 8
        vals = []
        for seed in range(10_000):
            inst = sk_instance(n, seed)
            vals.append([v * math.sqrt(n) for _, _, v in inst.pairs])
        var = float(np.var(np.asarray(vals), ddof=1))
        assert 0.97 < var < 1.03

    def test_zero_field_flip_symmetry(self, sk4):
        inst = dataclasses.replace(sk4, fields=(0.0,) * 4)
        e = target_spectrum(inst).energies
        mask = (1 << 4) - 1
        for m in range(1 << 4):
            assert e[m] == pytest.approx(e[m ^ mask], abs=1e-12)

    def test_rejects_zero_spins(self):
        with pytest.raises(ValueError):
            sk_instance(0, seed=1)


class TestSat3Instance:
    def test_deterministic_given_seed(self):
        a = sat3_instance(6, seed=5)
        b = sat3_instance(6, seed=5)
        assert a == b
        assert a.clauses == b.clauses
        assert a.planted == b.planted

    def test_clause_count_rounds_half_to_even(self):
        assert len(sat3_instance(10, seed=1).clauses) == 42  # round(42.5)
        assert len(sat3_instance(6, seed=1).clauses) == 26   # round(25.5)

    def test_planted_energy_zero(self, sat5):
        e = target_spectrum(sat5).energies
        assert e[sat5.planted_index()] == 0.0

    def test_spectrum_nonnegative_integers(self, sat5):
        e = target_spectrum(sat5).energies
        assert np.all(e >= 0)
        assert np.all(e == np.round(e))
        assert np.all(e <= len(sat5.clauses))

    def test_spectrum_sum_equals_m_over_8_of_states(self):
        # each clause is violated by exactly 1/8 of all assignments
        for n in (3, 4, 5, 6):
            inst = sat3_instance(n, seed=n)
            e = target_spectrum(inst).energies
            assert math.fsum(e) == len(inst.clauses) * (1 << n) / 8

    def test_coefficient_path_matches_clause_counting(self):
        for n, seed in ((6, 0), (7, 1), (8, 2)):
            inst = sat3_instance(n, seed=seed)
            assert np.array_equal(
                target_spectrum(inst).energies, clause_violation_counts(inst)
            )

    def test_rejects_bad_probability_normalization(self):
        with pytest.raises(ValueError):
            sat3_instance(5, p0=0.5, p1=0.5, p2=0.5, seed=1)

    def test_rejects_too_few_spins(self):
        with pytest.raises(ValueError):
            sat3_instance(2, seed=1)


class TestSingleClause:
    """Hand-built instance holding the one clause (x0 or x1 or x2)."""

    def build(self):
        clause = SatClause(vars=(0, 1, 2), signs=(1, 1, 1))
        return IsingInstance(
            kind="sat3",
            n=3,
            fields=(0.125, 0.125, 0.125),
            pairs=((0, 1, -0.125), (0, 2, -0.125), (1, 2, -0.125)),
            triples=((0, 1, 2, 0.125),),
            offset=0.125,
            seed=0,
            clauses=(clause,),
            planted=(1, 1, 1),
        )

    def test_all_false_violates(self):
        inst = self.build()
        e = target_spectrum(inst).energies
        all_false = 0b111  # bit set means x_i is FALSE
        assert e[all_false] == 1.0

    def test_all_true_satisfies(self):
        inst = self.build()
        e = target_spectrum(inst).energies
        assert e[0] == 0.0

    def test_direct_count_agrees(self):
        inst = self.build()
        for m in range(8):
            assert clause_violations_of_state(inst, m) == target_spectrum(inst).energies[m]

    def test_coefficient_mismatch_rejected(self):
        clause = SatClause(vars=(0, 1, 2), signs=(1, 1, 1))
        with pytest.raises(ValueError):
            IsingInstance(
                kind="sat3",
                n=3,
                fields=(0.25, 0.125, 0.125),  # wrong F_0
                pairs=((0, 1, -0.125), (0, 2, -0.125), (1, 2, -0.125)),
                triples=((0, 1, 2, 0.125),),
                offset=0.125,
                seed=0,
                clauses=(clause,),
                planted=(1, 1, 1),
            )


class TestInstanceValidation:
    def test_unordered_pair_rejected(self):
        with pytest.raises(ValueError):
            IsingInstance(
                kind="sk", n=3, fields=(0.0,) * 3,
                pairs=((1, 0, 0.5),), triples=(), offset=0.0, seed=0,
            )

    def test_duplicate_pair_rejected(self):
        with pytest.raises(ValueError):
            IsingInstance(
                kind="sk", n=3, fields=(0.0,) * 3,
                pairs=((0, 1, 0.5), (0, 1, 0.2)), triples=(), offset=0.0, seed=0,
            )

    def test_sk_with_triples_rejected(self):
        with pytest.raises(ValueError):
            IsingInstance(
                kind="sk", n=3, fields=(0.0,) * 3,
                pairs=(), triples=((0, 1, 2, 0.5),), offset=0.0, seed=0,
            )

    def test_out_of_range_index_rejected(self):
        with pytest.raises(ValueError):
            IsingInstance(
                kind="sk", n=3, fields=(0.0,) * 3,
                pairs=((0, 3, 0.5),), triples=(), offset=0.0, seed=0,
            )

    def test_distinct_clause_vars_enforced(self):
        with pytest.raises(ValueError):
            SatClause(vars=(0, 0, 2), signs=(1, 1, 1))


class TestH0:
    def test_ground_state(self):
        assert h0_energy(0, 4) == 0

    def test_popcount(self):
        assert h0_energy(0b101, 3) == 2

    def test_shell_size(self):
        count = sum(1 for m in range(1 << 5) if h0_energy(m, 5) == 2)
        assert count == 10  # C(5,2)

    def test_shell_cardinality_all_levels(self):
        n = 6
        spec = h0_spectrum(n)
        counts = np.bincount(spec.astype(int), minlength=n + 1)
        assert [int(c) for c in counts] == [math.comb(n, e) for e in range(n + 1)]

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            h0_energy(8, 3)
        with pytest.raises(ValueError):
            h0_energy(-1, 3)


class TestSerialization:
    def test_sk_round_trip(self, tmp_path, sk4):
        path = tmp_path / "inst.json"
        digest = write_instance(path, sk4)
        back = read_instance(path)
        assert back == sk4
        assert instance_digest(back) == digest

    def test_sat3_round_trip(self, tmp_path, sat5):
        path = tmp_path / "inst.json"
        write_instance(path, sat5)
        back = read_instance(path)
        assert back == sat5
        assert back.clauses == sat5.clauses
        assert back.planted == sat5.planted

    def test_floats_keep_full_precision(self, tmp_path, sk4):
        path = tmp_path / "inst.json"
        write_instance(path, sk4)
        doc = json.loads(path.read_text())
        got = [row[2] for row in doc["pairs"]]
        want = [v for _, _, v in sk4.pairs]
        assert got == want  # exact binary64 round trip through the text form

    def test_clause_literal_encoding(self):
        inst = TestSingleClause().build()
        doc = instance_to_json_dict(inst)
        assert doc["clauses"] == [[1, 2, 3]]  # +k encodes x_{k-1}
        assert doc["planted"] == [1, 1, 1]
        assert instance_from_json_dict(doc) == inst

    def test_negated_literal_encoding(self):
        inst = sat3_instance(4, seed=8)
        assert any(-1 in c.signs for c in inst.clauses)
        doc = instance_to_json_dict(inst)
        back = instance_from_json_dict(doc)
        assert back.clauses == inst.clauses

    def test_digest_is_sha256_hex(self, sk4):
        digest = instance_digest(sk4)
        assert len(digest) == 64
        int(digest, 16)


def test_spectrum_vector_is_read_only(sk4):
    spec = target_spectrum(sk4)
    assert spec.n == 4
    with pytest.raises(ValueError):
        spec.energies[0] = 1.0
