"""Regenerate tests/data/reference_problems.csv.

Loop-by-loop transcription of the Regularization Tools generators for the
gravity (example 2) and heat problems, written independently of the package
so the stored table can serve as an oracle for its vectorized code.
"""

import csv
import math
from pathlib import Path

N = 32
OUT = Path(__file__).resolve().parent.parent / "tests" / "data" / "reference_problems.csv"


def matlab_round(x):
    return math.floor(x + 0.5)


def gravity(n, d=0.25):
    dt = 1.0 / n
    t = [dt * (i - 0.5) for i in range(1, n + 1)]
    A = [[dt * d * (d**2 + (t[i] - t[j]) ** 2) ** -1.5 for j in range(n)] for i in range(n)]
    nt = matlab_round(n / 3)
    nn = matlab_round(n * 7 / 8)
    x = [0.0] * n
    for i in range(1, n + 1):
        if i <= nt:
            x[i - 1] = 2 / nt * i
        elif i <= nn:
            x[i - 1] = ((2 * nn - nt) - i) / (nn - nt)
        else:
            x[i - 1] = (n - i) / (n - nn)
    return A, x


def heat(n, kappa=1.0):
    h = 1.0 / n
    c = h / (2 * kappa * math.sqrt(math.pi))
    d = 1 / (4 * kappa**2)
    col = []
    for i in range(1, n + 1):
        t = (i - 0.5) * h
        col.append(c * t**-1.5 * math.exp(-d / t))
    A = [[col[i - j] if i >= j else 0.0 for j in range(n)] for i in range(n)]
    x = [0.0] * n
    for i in range(1, n // 2 + 1):
        ti = i * 20 / n
        if ti < 2:
            x[i - 1] = 0.75 * ti**2 / 4
        elif ti < 3:
            x[i - 1] = 0.75 + (ti - 2) * (3 - ti)
        else:
            x[i - 1] = 0.75 * math.exp(-(ti - 3) * 2)
    return A, x


def main():
    rows = []
    for name, (A, x) in (("gravity", gravity(N)), ("heat", heat(N))):
        b = [sum(a * v for a, v in zip(row, x)) for row in A]
        for i in range(N):
            rows.append((name, i + 1, repr(x[i]), repr(b[i])))
    OUT.parent.mkdir(parents=True, exist_ok=True)
    with OUT.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["problem", "index", "x", "b"])
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {OUT}")


if __name__ == "__main__":
    main()
