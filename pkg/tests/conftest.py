import importlib
import random

import numpy as np
import pytest
from hypothesis import strategies as st

from strvault import _pure
from strvault.population import load_frequency_table
from strvault.profile import CORE_LOCI, Genotype, StrProfile, parse_profile

# Loci deliberately not in key order; TH01 given as "9.3,6".
SAMPLE_PROFILE_TEXT = """\
# sample profile
VWA,16,18
TPOX,8,11
TH01,9.3,6
FGA,21,24
D8S1179,13,14
D7S820,10,11
D5S818,11,12
D3S1358,15,17
D2S441,11,14
D2S1338,17,23
D22S1045,15,16
D21S11,29,30.2
D1S1656,15,17.3
D19S433,13,14
D18S51,14,16
D16S539,11,12
D13S317,11,12
D12S391,18,20
D10S1248,13,14
CSF1PO,10,12
"""


def _kernel_modules():
    mods = [_pure]
    try:
        mods.append(importlib.import_module("strvault._kernels"))
    except ImportError:
        pass
    return mods


KERNELS = _kernel_modules()


@pytest.fixture(params=KERNELS, ids=lambda m: m.NAME)
def kernel(request):
    return request.param


@pytest.fixture(scope="session")
def table():
    return load_frequency_table()


@pytest.fixture
def sample_profile():
    return parse_profile(SAMPLE_PROFILE_TEXT)


def random_profile(rng: random.Random) -> StrProfile:
    entries = {}
    for locus in CORE_LOCI:
        a = rng.randrange(5, 50) * 10 + rng.choice((0, 1, 2, 3))
        b = rng.randrange(5, 50) * 10 + rng.choice((0, 1, 2, 3))
        entries[locus] = Genotype(a, b)
    return StrProfile(entries)


alleles = st.builds(lambda w, f: w * 10 + f, st.integers(1, 99), st.integers(0, 3))
genotypes = st.tuples(alleles, alleles)
profiles = st.fixed_dictionaries({l: genotypes for l in CORE_LOCI}).map(StrProfile)


def brute_force_matches(vault, query):
    """Oracle: try_unseal each record on its own, no batching kernels."""
    from strvault.keygen import profile_cipher_key
    from strvault.record import try_unseal, verify_match

    key = profile_cipher_key(query)
    out = []
    for i, rec in enumerate(vault.scan()):
        plain = try_unseal(rec, key)
        if plain and verify_match(plain, query):
            out.append(i)
    return out


@pytest.fixture
def nprng():
    return np.random.default_rng(12345)


# -- acceptance reporting ----------------------------------------------------

_ACCEPTANCE: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): numbered acceptance criterion")


@pytest.fixture
def detail(request):
    """Append a human-readable measurement to the criterion's summary line."""
    def add(text):
        request.node.user_properties.append(("detail", text))
    return add


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when not in ("setup", "call"):
        return
    if rep.when == "setup" and rep.passed:
        return
    n, title = mark.args
    details = [v for k, v in item.user_properties if k == "detail"]
    prev = _ACCEPTANCE.get(n)
    ok = rep.passed and (prev is None or prev[1])
    _ACCEPTANCE[n] = (title, ok, (prev[2] if prev else []) + details)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, ok, details = _ACCEPTANCE[n]
        line = f"[{'PASS' if ok else 'FAIL'}] {n}. {title}"
        if details:
            line += ": " + "; ".join(details)
        terminalreporter.write_line(line)
