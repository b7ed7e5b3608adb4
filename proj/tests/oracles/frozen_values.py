#!/usr/bin/env python3
"""Standalone oracles for values frozen into the C++ unit tests.

Nothing here imports or calls the library. Re-run to regenerate the
constants quoted in tests/*.cpp.
"""
import math
from fractions import Fraction

FNV_OFFSET = 0xcbf29ce484222325
FNV_PRIME = 0x100000001b3


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def fmix64(h: int) -> int:
    h ^= h >> 33
    h = (h * 0xff51afd7ed558ccd) & 0xFFFFFFFFFFFFFFFF
    h ^= h >> 33
    h = (h * 0xc4ceb9fe1a85ec53) & 0xFFFFFFFFFFFFFFFF
    h ^= h >> 33
    return h


def feature_hash(key: bytes) -> int:
    return fmix64(fnv1a64(key))


def tokens(text: str):
    out, cur = [], bytearray()
    for b in text.encode("utf-8"):
        if (0x30 <= b <= 0x39) or (0x61 <= b <= 0x7A) or b >= 0x80:
            cur.append(b)
        elif 0x41 <= b <= 0x5A:
            cur.append(b + 32)
        elif cur:
            out.append(bytes(cur))
            cur = bytearray()
    if cur:
        out.append(bytes(cur))
    return out


def featurize(text: str, dim: int):
    toks = tokens(text)
    keys = list(toks)
    for a, b in zip(toks, toks[1:]):
        if a != b:
            keys.append(a + b" " + b)
    acc = {}
    for k in keys:
        h = feature_hash(k)
        idx = h % dim
        sign = -1.0 if (h >> 63) & 1 else 1.0
        acc[idx] = acc.get(idx, 0.0) + sign
    acc = {i: w for i, w in acc.items() if w != 0.0}
    norm = math.sqrt(sum(w * w for w in acc.values()))
    return sorted((i, w / norm) for i, w in acc.items())


def logistic(x):
    return 1.0 / (1.0 + math.exp(-x))


def macro_prf(conf):
    n = len(conf)
    prec, rec = [], []
    for c in range(n):
        tp = conf[c][c]
        col = sum(conf[g][c] for g in range(n))
        row = sum(conf[c])
        prec.append(Fraction(tp, col) if col else Fraction(0))
        rec.append(Fraction(tp, row) if row else Fraction(0))
    mp = sum(prec) / n
    mr = sum(rec) / n
    f1 = 2 * mp * mr / (mp + mr)
    return prec, rec, mp, mr, f1


if __name__ == "__main__":
    print("featurize('water death', 2^18):")
    for i, w in featurize("water death", 1 << 18):
        print(f"  index={i} weight={w!r}")
    for key in [b"water", b"death", b"water death"]:
        print(f"  feature_hash({key!r}) = {feature_hash(key):#018x}")
    print(f"logistic(4)  = {logistic(4.0)!r}")
    print(f"logistic(-4) = {logistic(-4.0)!r}")
    print(f"other share at beta=4, 3 labels = {(1 - logistic(4.0)) / 2!r}")
    prec, rec, mp, mr, f1 = macro_prf([[2, 1, 0], [0, 2, 0], [1, 0, 4]])
    print("per-class P", [str(p) for p in prec], "R", [str(r) for r in rec])
    print(f"macro P = {mp} = {float(mp)!r}")
    print(f"macro R = {mr} = {float(mr)!r}")
    print(f"headline F1 = {f1} = {float(f1)!r}")
    kl = 0.5 * math.log(0.5 / 0.8) + 0.5 * math.log(0.5 / 0.2)
    print(f"two-point KL = {kl!r}")
    print(f"mixture: outside top-3 mass = {0.1 * 17 / 20!r}, per doc = {0.1 / 20!r}")
