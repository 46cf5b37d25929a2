"""Genotype entropy, kinship key sharing and the reduced-roster attack."""

import itertools
import math
import random

import numpy as np
import pytest

from strvault import _pure
from strvault.errors import Exhausted, FrequencyTableError, MalformedCiphertext
from strvault.keygen import derive_search_key, shared_bits
from strvault.population import (
    ATTACK_ROSTER,
    RELATIONS,
    AlleleFrequencyTable,
    RelationStats,
    brute_force_key,
    genotype_distribution,
    key_code_entropy,
    kinship_attack,
    locus_entropy,
    parse_frequency_table,
    sample_pair,
    sample_pairs,
    sample_population,
    security_report,
    shared_bits_array,
    simulate_shared_bits,
    total_entropy,
)
from strvault.profile import CORE_LOCI, Genotype
from strvault.record import EncryptedRecord, PlainRecord, seal

from conftest import random_profile


def _table_text(rows):
    return "locus,allele,frequency\n" + "".join(f"{l},{a},{f}\n" for l, a, f in rows)


def _uniform_rows(n=2):
    return [(l, i + 8, 1 / n) for l in CORE_LOCI for i in range(n)]


# -- entropy -----------------------------------------------------------------


def _enumerated_entropy(pairs):
    """Oracle: sum over ordered allele draws, folded into unordered genotypes."""
    probs = {}
    for (a, pa), (b, pb) in itertools.product(pairs, repeat=2):
        g = (min(a, b), max(a, b))
        probs[g] = probs.get(g, 0.0) + pa * pb
    return -sum(p * math.log2(p) for p in probs.values())


def test_degenerate_locus_zero_entropy():
    t = AlleleFrequencyTable({l: [(100, 1.0)] for l in CORE_LOCI})
    assert total_entropy(t) == 0.0


def test_four_equifrequent_alleles():
    t = AlleleFrequencyTable.uniform(4)
    # 4 homozygotes at 1/16, 6 heterozygotes at 1/8
    assert locus_entropy(t, "FGA") == pytest.approx(3.25, abs=1e-12)
    assert total_entropy(t) == pytest.approx(65.0, abs=1e-9)


def test_bundled_table_matches_enumeration(table):
    for locus in CORE_LOCI:
        assert locus_entropy(table, locus) == pytest.approx(
            _enumerated_entropy(table[locus]), abs=1e-9
        )
        assert math.fsum(genotype_distribution(table, locus).values()) == pytest.approx(1.0)
    h = total_entropy(table)
    assert 60 < h < 120
    assert key_code_entropy(table) < h
    assert key_code_entropy(table) <= 20 * math.log2(10) + 1e-9  # at most 10 code pairs per locus


def test_uniform_maximizes_entropy():
    rng = random.Random(0)
    for n in (2, 3, 5, 8):
        uni = locus_entropy(AlleleFrequencyTable.uniform(n), "TPOX")
        for _ in range(20):
            w = [rng.random() + 0.01 for _ in range(n)]
            s = sum(w)
            pairs = [(10 * (i + 1), x / s) for i, x in enumerate(w)]
            t = AlleleFrequencyTable({l: pairs for l in CORE_LOCI}, tol=1e-6)
            assert locus_entropy(t, "TPOX") <= uni + 1e-12


def test_entropy_permutation_invariant(table):
    pairs = list(table["D18S51"])
    freqs = [f for _, f in pairs]
    random.Random(1).shuffle(freqs)
    permuted = [(a, f) for (a, _), f in zip(pairs, freqs)]
    t = AlleleFrequencyTable({l: (permuted if l == "D18S51" else table[l]) for l in CORE_LOCI})
    assert locus_entropy(t, "D18S51") == pytest.approx(locus_entropy(table, "D18S51"), abs=1e-12)


# -- table validation --------------------------------------------------------


def test_parse_table_round_trip():
    t = parse_frequency_table(_table_text(_uniform_rows(2)))
    assert t["CSF1PO"] == ((80, 0.5), (90, 0.5))


@pytest.mark.parametrize(
    "mutate, fragment",
    [
        (lambda r: r[:-1], "sum"),
        (lambda r: [x for x in r if x[0] != "FGA"], "missing"),
        (lambda r: r + [("FGA", 8, 0.0)], "duplicate"),
        (lambda r: [(l, a, -f if l == "TPOX" and a == 8 else f) for l, a, f in r], "> 0"),
        (lambda r: r + [("D99S1", 8, 1.0)], "unknown"),
    ],
)
def test_table_errors(mutate, fragment):
    with pytest.raises(FrequencyTableError, match=f"(?i){fragment}"):
        parse_frequency_table(_table_text(mutate(_uniform_rows(2))))


def test_table_bad_rows():
    with pytest.raises(FrequencyTableError, match=":2:"):
        parse_frequency_table("locus,allele,frequency\nFGA,8\n")
    with pytest.raises(FrequencyTableError):
        parse_frequency_table("FGA,eight,0.5\n")


# -- kinship simulation ------------------------------------------------------


def test_twins_share_all_bits(table, nprng):
    assert (simulate_shared_bits(table, "twin", 500, seed=1) == 80).all()
    assert sample_pair(table, "twin", nprng).shared_bits == 80


def test_relation_ordering(table):
    means = {r: simulate_shared_bits(table, r, 4000, seed=7).mean() for r in RELATIONS}
    assert means["twin"] > means["sibling"] > means["cousin"] > means["unrelated"]


def _expected_unrelated_shared(table):
    """Oracle: exact E[shared bits] for unrelated pairs by enumerating genotype pairs."""
    total = 0.0
    for locus in CORE_LOCI:
        dist = genotype_distribution(table, locus)
        for (a1, a2), p in dist.items():
            for (b1, b2), q in dist.items():
                diff = bin((a1 % 4) ^ (b1 % 4)).count("1") + bin((a2 % 4) ^ (b2 % 4)).count("1")
                total += p * q * (4 - diff)
    return total


def test_unrelated_mean_matches_exact_expectation(table):
    s = simulate_shared_bits(table, "unrelated", 20000, seed=3)
    exact = _expected_unrelated_shared(table)
    assert abs(s.mean() - exact) < 5 * s.std() / math.sqrt(s.size)
    # well above the 40 of independent uniform keys: the 2-bit codes are skewed
    assert exact > 50


def test_seed_determinism(table):
    a = simulate_shared_bits(table, "cousin", 300, seed=42)
    b = simulate_shared_bits(table, "cousin", 300, seed=42)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, simulate_shared_bits(table, "cousin", 300, seed=43))


def test_vectorized_shared_bits_matches_scalar(table, nprng):
    a, b = sample_pairs(table, "sibling", 200, nprng)
    vec = shared_bits_array(a, b)
    for i in range(200):
        pa = {l: Genotype(int(a[i, j, 0]), int(a[i, j, 1])) for j, l in enumerate(CORE_LOCI)}
        pb = {l: Genotype(int(b[i, j, 0]), int(b[i, j, 1])) for j, l in enumerate(CORE_LOCI)}
        from strvault.profile import StrProfile

        assert vec[i] == shared_bits(derive_search_key(StrProfile(pa)),
                                     derive_search_key(StrProfile(pb)))


def test_siblings_inherit_from_parents(table, nprng):
    a, b = sample_pairs(table, "sibling", 1000, nprng)
    # IBD 0/1/2 at a locus has probabilities 1/4, 1/2, 1/4, so identical genotypes are common
    same = (np.sort(a, axis=2) == np.sort(b, axis=2)).all(axis=2).mean()
    assert 0.25 < same < 0.6


def test_unknown_relation(table, nprng):
    with pytest.raises(ValueError):
        sample_pairs(table, "aunt", 1, nprng)


def test_sample_population(table, nprng):
    pop = sample_population(table, 50, nprng)
    assert len(pop) == 50
    for p in pop:
        for l in CORE_LOCI:
            alleles = {a for a, _ in table[l]}
            g = p[l]
            assert g.low in alleles and g.high in alleles


def test_relation_stats_ci():
    s = RelationStats.from_samples("x", np.array([1, 2, 3, 4, 5]))
    lo, hi = s.ci99
    half = 2.5758293035489004 * np.std([1, 2, 3, 4, 5], ddof=1) / math.sqrt(5)
    assert (lo, hi) == pytest.approx((3 - half, 3 + half))
    assert s.effective_bits == 77 and s.histogram == {1: 1, 2: 1, 3: 1, 4: 1, 5: 1}


def test_security_report(table):
    rep = security_report(table, n=2000, seed=0)
    assert set(rep.relations) == set(RELATIONS)
    assert rep.relations["twin"].mean == 80
    kv = rep.to_kv()
    assert "sibling.reference_shared_bits=28" in kv
    assert "cousin.reference_effective_bits=76" in kv
    assert f"total_entropy_bits={total_entropy(table):.6f}" in kv
    assert "effective" in rep.to_text()
    assert security_report(table, n=2000, seed=0).to_kv() == kv


# -- attack ------------------------------------------------------------------


def _reduced_target(seed=0):
    prof = random_profile(random.Random(seed))
    return prof, seal(PlainRecord(prof, "victim", b"img"), "t", loci=ATTACK_ROSTER)


def test_attack_with_three_known_loci():
    prof, target = _reduced_target(1)
    relative = prof
    for l in ATTACK_ROSTER[3:]:
        relative = relative.replace(l, Genotype(100, 110))
    res = kinship_attack(target, relative, known_loci=ATTACK_ROSTER[:3])
    assert res.unknown_bits == 12
    assert res.trials <= 1 << 12
    assert res.search_key == derive_search_key(prof, ATTACK_ROSTER)
    assert res.plain.profile == prof and res.plain.metadata == "victim"


def test_attack_pure_kernel_matches(monkeypatch):
    import strvault.population as pop

    prof, target = _reduced_target(2)
    relative = prof.replace(ATTACK_ROSTER[5], Genotype(70, 90))
    compiled = kinship_attack(target, relative, known_loci=ATTACK_ROSTER[:5])
    monkeypatch.setattr(pop, "kernels", _pure)
    pure = kinship_attack(target, relative, known_loci=ATTACK_ROSTER[:5])
    assert pure.trials == compiled.trials <= 16
    assert pure.search_key == compiled.search_key


def test_brute_force_counter_order():
    prof, target = _reduced_target(3)
    key = derive_search_key(prof, ATTACK_ROSTER)
    unknown = [0, 5, 9, 23]
    res = brute_force_key(target, key.flip(5).flip(23), unknown)
    # trials equals counter index of the true bits plus one
    idx = int("".join(str(key.bits[p]) for p in unknown), 2)
    assert res.trials == idx + 1 and res.search_key == key


@pytest.mark.slow
def test_attack_exhausts_full_space():
    # sealed under the 20-locus key, so no 24-bit candidate can open it
    prof = random_profile(random.Random(4))
    target = seal(PlainRecord(prof), "t")
    with pytest.raises(Exhausted) as ei:
        kinship_attack(target, None)
    assert ei.value.trials == 1 << 24


def test_attack_argument_checks():
    prof, target = _reduced_target(5)
    with pytest.raises(ValueError):
        kinship_attack(target, None, known_loci=ATTACK_ROSTER[:1])
    with pytest.raises(ValueError):
        kinship_attack(target, prof, known_loci=["VWA"])
    with pytest.raises(ValueError):
        kinship_attack(target, prof, loci=CORE_LOCI[:7])
    with pytest.raises(MalformedCiphertext):
        brute_force_key(EncryptedRecord("t", bytes(16), bytes(15)),
                        derive_search_key(prof, ATTACK_ROSTER), [0])
