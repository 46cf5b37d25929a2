"""Compare the compiled and pure-Python kernels on the two hot paths.

    python benchmarks/bench_backends.py [--records N] [--record-size BYTES] [--attack-bits B]

scan:   trial-decrypt a packed chunk of records under a non-matching key
attack: enumerate 2**B candidate search keys (HKDF + one AES block each)
"""

import argparse
import os
import random
import time

from strvault import _pure
from strvault.keygen import KDF_LABEL, KDF_SALT, CipherKey
from strvault.record import PlainRecord, encrypt, frame
from strvault.search import random_profile

try:
    from strvault import _kernels
except ImportError:  # extension not built
    _kernels = None


def _chunk(n, size, seed):
    rng = random.Random(seed)
    ivs, cts, offsets = [], [], [0]
    for _ in range(n):
        key = CipherKey(rng.randbytes(32))
        iv = rng.randbytes(16)
        ct = encrypt(frame(PlainRecord(random_profile(rng), "", rng.randbytes(size))), key, iv)
        ivs.append(iv)
        cts.append(ct)
        offsets.append(offsets[-1] + len(ct))
    return b"".join(ivs), b"".join(cts), offsets


def _best(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--records", type=int, default=2000)
    ap.add_argument("--record-size", type=int, default=4096)
    ap.add_argument("--attack-bits", type=int, default=14)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)

    ivs, cts, offsets = _chunk(args.records, args.record_size, 0)
    probe = os.urandom(32)
    nbits = args.attack_bits
    unknown = list(range(24 - nbits, 24))
    iv, block0 = os.urandom(16), os.urandom(16)  # no candidate matches: full enumeration

    backends = [_pure] + ([_kernels] if _kernels is not None else [])
    rows = {}
    for k in backends:
        scan = _best(lambda: k.scan_block(probe, ivs, cts, offsets), args.repeats)
        attack = _best(
            lambda: k.attack_search(KDF_SALT, KDF_LABEL, 24, 0, unknown, iv, block0, 0),
            args.repeats,
        )
        rows[k.NAME] = (scan, attack)

    mb = len(cts) / 1e6
    trials = 1 << nbits
    print(f"scan: {args.records} records, {mb:.1f} MB; attack: 2^{nbits} candidates")
    print(f"{'backend':<10} {'scan MB/s':>10} {'rec/s':>12} {'attack us/key':>14}")
    for name, (scan, attack) in rows.items():
        print(f"{name:<10} {mb / scan:>10.1f} {args.records / scan:>12.0f} "
              f"{attack / trials * 1e6:>14.2f}")
    if len(rows) == 2:
        (ps, pa), (cs, ca) = rows["pure"], rows["compiled"]
        print(f"speedup    scan x{ps / cs:.1f}  attack x{pa / ca:.1f}")
    else:
        print("compiled kernels not built; pure fallback only")


if __name__ == "__main__":
    main()
