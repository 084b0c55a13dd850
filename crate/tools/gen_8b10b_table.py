#!/usr/bin/env python3
"""Generate crates/core/data/8b10b_table.csv from the IEEE 802.3 Clause 36
5b/6b and 3b/4b sub-block tables, and validate the result.

Checks performed before writing:
  * every 10-bit group has 4, 5 or 6 ones
  * every sub-block has disparity 0 or +-2, and the column chosen for each
    running disparity never pushes the running disparity past +-1
  * all 268 x 2 groups decode to a unique symbol

Usage: tools/gen_8b10b_table.py [output.csv]
"""

import sys

# abcdei, (RD-, RD+)
FIVE_SIX = {
    0: ("100111", "011000"),
    1: ("011101", "100010"),
    2: ("101101", "010010"),
    3: ("110001", "110001"),
    4: ("110101", "001010"),
    5: ("101001", "101001"),
    6: ("011001", "011001"),
    7: ("111000", "000111"),
    8: ("111001", "000110"),
    9: ("100101", "100101"),
    10: ("010101", "010101"),
    11: ("110100", "110100"),
    12: ("001101", "001101"),
    13: ("101100", "101100"),
    14: ("011100", "011100"),
    15: ("010111", "101000"),
    16: ("011011", "100100"),
    17: ("100011", "100011"),
    18: ("010011", "010011"),
    19: ("110010", "110010"),
    20: ("001011", "001011"),
    21: ("101010", "101010"),
    22: ("011010", "011010"),
    23: ("111010", "000101"),
    24: ("110011", "001100"),
    25: ("100110", "100110"),
    26: ("010110", "010110"),
    27: ("110110", "001001"),
    28: ("001110", "001110"),
    29: ("101110", "010001"),
    30: ("011110", "100001"),
    31: ("101011", "010100"),
}
K28_SIX = ("001111", "110000")

# fghj, (RD-, RD+)
THREE_FOUR_D = {
    0: ("1011", "0100"),
    1: ("1001", "1001"),
    2: ("0101", "0101"),
    3: ("1100", "0011"),
    4: ("1101", "0010"),
    5: ("1010", "1010"),
    6: ("0110", "0110"),
    7: ("1110", "0001"),  # primary P7
}
THREE_FOUR_A7 = ("0111", "1000")
THREE_FOUR_K = {
    0: ("1011", "0100"),
    1: ("0110", "1001"),
    2: ("1010", "0101"),
    3: ("1100", "0011"),
    4: ("1101", "0010"),
    5: ("0101", "1010"),
    6: ("1001", "0110"),
    7: ("0111", "1000"),
}

K_CODES = [(28, y) for y in range(8)] + [(23, 7), (27, 7), (29, 7), (30, 7)]


def sub_rd(bits, rd):
    ones = bits.count("1")
    half = len(bits) // 2
    if ones > half or bits in ("000111", "0011"):
        return +1
    if ones < half or bits in ("111000", "1100"):
        return -1
    return rd


def col(rd):
    return 0 if rd < 0 else 1


def encode(x, y, k, rd):
    six = (K28_SIX if k and x == 28 else FIVE_SIX[x])[col(rd)]
    rd6 = sub_rd(six, rd)
    if k:
        four = THREE_FOUR_K[y][col(rd6)]
    elif y == 7 and ((rd6 < 0 and x in (17, 18, 20)) or (rd6 > 0 and x in (11, 13, 14))):
        four = THREE_FOUR_A7[col(rd6)]
    else:
        four = THREE_FOUR_D[y][col(rd6)]
    rd4 = sub_rd(four, rd6)
    for block, start in ((six, rd), (four, rd6)):
        ones = block.count("1")
        disp = 2 * ones - len(block)
        assert disp in (-2, 0, 2), (x, y, k, block)
        # an unbalanced block must move the disparity toward the other sign
        if disp == 2:
            assert start < 0, (x, y, k, rd, block)
        if disp == -2:
            assert start > 0, (x, y, k, rd, block)
    return six + four, rd4


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "crates/core/data/8b10b_table.csv"
    rows = []
    seen = {}
    symbols = [(f"D{x}.{y}", x + 32 * y, False, x, y) for y in range(8) for x in range(32)]
    symbols.sort(key=lambda s: s[1])
    symbols += [(f"K{x}.{y}", x + 32 * y, True, x, y) for (x, y) in K_CODES]
    for name, octet, k, x, y in symbols:
        groups = []
        for rd in (-1, +1):
            g, _ = encode(x, y, k, rd)
            ones = g.count("1")
            assert 4 <= ones <= 6, (name, rd, g)
            prev = seen.get(g)
            assert prev is None or prev == name, (name, prev, g)
            seen[g] = name
            groups.append(g)
        rows.append((name, octet, groups[0], groups[1]))
    assert len(rows) == 268
    with open(out, "w") as f:
        f.write("# 8b10b code groups, bits in transmission order abcdeifghj\n")
        f.write("name,octet,rd_minus,rd_plus,hex\n")
        for name, octet, m, p in rows:
            f.write(f"{name},0x{octet:02X},{m},{p},0x{int(m, 2):03X}/0x{int(p, 2):03X}\n")
    print(f"wrote {len(rows)} rows to {out}")


if __name__ == "__main__":
    main()
