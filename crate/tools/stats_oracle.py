#!/usr/bin/env python3
"""Reference values for crates/core/src/stats.rs tests, computed with mpmath
at 50 digits. The SP 800-22 statistics are reimplemented here from their
definitions; only the inputs are shared with the Rust tests.

Usage: tools/stats_oracle.py
"""

from fractions import Fraction

import mpmath as mp

mp.mp.dps = 50

E_100 = (
    "1100100100001111110110101010001000100001011010001100001000110100"
    "110001001100011001100010100010111000"
)
LONGEST_128 = (
    "11001100000101010110110001001100111000000000001001"
    "00110101010001000100111101011010000000110101111100"
    "1100111001101101100010110010"
)


def bits(s):
    return [c == "1" for c in s]


def Q(a, x):
    return mp.gammainc(a, x, mp.inf, regularized=True)


def monobit(b):
    s = sum(1 if x else -1 for x in b)
    return mp.erfc(abs(s) / mp.sqrt(len(b)) / mp.sqrt(2))


def block_frequency(b, m):
    n = len(b) // m
    chi = 4 * m * sum((mp.mpf(sum(b[i * m:(i + 1) * m])) / m - mp.mpf(1) / 2) ** 2 for i in range(n))
    return Q(mp.mpf(n) / 2, chi / 2)


def runs(b):
    n = len(b)
    pi = mp.mpf(sum(b)) / n
    v = 1 + sum(1 for i in range(n - 1) if b[i] != b[i + 1])
    return mp.erfc(abs(v - 2 * n * pi * (1 - pi)) / (2 * mp.sqrt(2 * n) * pi * (1 - pi)))


def longest_run_m8(b):
    pi = [mp.mpf("0.2148"), mp.mpf("0.3672"), mp.mpf("0.2305"), mp.mpf("0.1875")]
    v = [0] * 4
    n = len(b) // 8
    for i in range(n):
        best = run = 0
        for x in b[i * 8:(i + 1) * 8]:
            run = run + 1 if x else 0
            best = max(best, run)
        v[min(max(best - 1, 0), 3)] += 1
    chi = sum((v[i] - n * pi[i]) ** 2 / (n * pi[i]) for i in range(4))
    return chi, Q(mp.mpf(3) / 2, chi / 2)


def cusum(b, reverse):
    seq = list(reversed(b)) if reverse else b
    s = z = 0
    for x in seq:
        s += 1 if x else -1
        z = max(z, abs(s))
    n = len(b)
    phi = lambda x: mp.ncdf(x)
    t1 = sum(
        phi((4 * k + 1) * z / mp.sqrt(n)) - phi((4 * k - 1) * z / mp.sqrt(n))
        for k in range(int(mp.floor((-mp.mpf(n) / z + 1) / 4)), int(mp.floor((mp.mpf(n) / z - 1) / 4)) + 1)
    )
    t2 = sum(
        phi((4 * k + 3) * z / mp.sqrt(n)) - phi((4 * k + 1) * z / mp.sqrt(n))
        for k in range(int(mp.floor((-mp.mpf(n) / z - 3) / 4)), int(mp.floor((mp.mpf(n) / z - 1) / 4)) + 1)
    )
    return 1 - t1 + t2


def counts(b, m):
    n = len(b)
    ext = b + b[: m - 1]
    c = {}
    for i in range(n):
        key = tuple(ext[i:i + m])
        c[key] = c.get(key, 0) + 1
    return c


def psi(b, m):
    if m == 0:
        return mp.mpf(0)
    n = len(b)
    return mp.mpf(2) ** m / n * sum(v * v for v in counts(b, m).values()) - n


def serial(b, m):
    d1 = psi(b, m) - psi(b, m - 1)
    d2 = psi(b, m) - 2 * psi(b, m - 1) + psi(b, m - 2)
    return Q(mp.mpf(2) ** (m - 2), d1 / 2), Q(mp.mpf(2) ** (m - 3), d2 / 2)


def apen(b, m):
    n = len(b)

    def phi(mm):
        return sum(mp.mpf(v) / n * mp.log(mp.mpf(v) / n) for v in counts(b, mm).values())

    ap = phi(m) - phi(m + 1)
    chi = 2 * n * (mp.log(2) - ap)
    return Q(mp.mpf(2) ** (m - 1), chi / 2)


def poker(d):
    s = [0, 1, 15, 25, 10, 1]
    out = []
    for r in range(1, 6):
        falling = 1
        for j in range(r):
            falling *= d - j
        out.append(Fraction(falling * s[r], d ** 5))
    return out


def show(label, v):
    print(f"{label:<40} {mp.nstr(v, 17)}")


def main():
    print("# regularized upper incomplete gamma Q(a, x)")
    for a, x in [(0.5, 0.1), (1.5, 3.0), (10, 12.5), (133, 140.2), (133, 100), (512, 530),
                 (32768, 32900), (35644, 35700.3), (35644, 36500)]:
        show(f"Q({a}, {x})", Q(mp.mpf(a), mp.mpf(x)))
    print("# erfc")
    for x in [0.0, 0.5, 1.0, 3.0, 6.0]:
        show(f"erfc({x})", mp.erfc(mp.mpf(x)))
    print("# SP 800-22 worked examples")
    show("monobit 1011010101", monobit(bits("1011010101")))
    show("monobit e100", monobit(bits(E_100)))
    show("block_frequency 0110011010 M=3", block_frequency(bits("0110011010"), 3))
    show("block_frequency e100 M=10", block_frequency(bits(E_100), 10))
    show("runs 1001101011", runs(bits("1001101011")))
    show("runs e100", runs(bits(E_100)))
    chi, p = longest_run_m8(bits(LONGEST_128))
    show("longest_run 128 chi", chi)
    show("longest_run 128 p", p)
    show("cusum 1011010111 fwd", cusum(bits("1011010111"), False))
    show("cusum e100 fwd", cusum(bits(E_100), False))
    show("cusum e100 rev", cusum(bits(E_100), True))
    p1, p2 = serial(bits("0011011101"), 3)
    show("serial 0011011101 m=3 p1", p1)
    show("serial 0011011101 m=3 p2", p2)
    show("apen 0100110101 m=3", apen(bits("0100110101"), 3))
    show("apen e100 m=2", apen(bits(E_100), 2))
    print("# poker probabilities, d = 267")
    for r, p in enumerate(poker(267), 1):
        show(f"p_{r}", mp.mpf(p.numerator) / p.denominator)


if __name__ == "__main__":
    main()
