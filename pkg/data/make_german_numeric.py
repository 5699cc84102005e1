"""Derive an all-numeric german-credit file from the categorical german.data.

Each categorical cell ``A<attr><code>`` becomes the integer ``<code>``
(e.g. ``A43`` in attribute 4 -> 3, ``A410`` -> 10); numeric cells pass
through, except the credit amount (attribute 5), which is expressed in
hundreds of DM rounded half up (1169 -> 12) as in the UCI numeric release.
The class column (1 = good, 2 = bad) is kept last.

Usage: python data/make_german_numeric.py data/german.data data/german.numeric
"""

import sys

AMOUNT_ATTR = 5


def encode_row(cells):
    out = []
    for attr, cell in enumerate(cells[:-1], start=1):
        prefix = f"A{attr}"
        if cell.startswith(prefix):
            out.append(cell[len(prefix):])
        elif attr == AMOUNT_ATTR:
            out.append(str(int(float(cell) / 100 + 0.5)))
        else:
            out.append(cell)
    out.append(cells[-1])
    return out


def main(src, dst):
    with open(src) as fin, open(dst, "w") as fout:
        for line in fin:
            cells = line.split()
            if cells:
                fout.write(" ".join(encode_row(cells)) + "\n")


if __name__ == "__main__":
    main(sys.argv[1], sys.argv[2])
