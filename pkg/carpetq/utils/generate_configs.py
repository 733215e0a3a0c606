"""
Generate the bundled carpet configs.

The worked example has two probabilities fixed only implicitly: x1 and x2
are the roots of

    g1(x) = sqrt(x) + sqrt(3/8 - x) - sqrt(2)/2   on (0, 3/16)
    g2(x) = sqrt(x) + sqrt(7/16 - x) - sqrt(2)/2  on (0, 7/32)

which make every row constant C_{j,1} equal to 3/2 at r = 1. They are found
by bisection in 60-digit arithmetic and written with 50 significant digits.
"""

import json
from decimal import Decimal, localcontext
from pathlib import Path
from typing import Callable, Dict, List, Optional

import mpmath
import numpy as np

_PROJECT_ROOT = Path(__file__).resolve().parent.parent.parent
CONFIG_DIR = _PROJECT_ROOT / "data" / "configs"

DIGITS = 50


def _bisect(func: Callable, lo, hi, iterations: int = 400):
    """Bisection on a sign change, entirely in mpmath."""
    f_lo = func(lo)
    for _ in range(iterations):
        mid = (lo + hi) / 2
        f_mid = func(mid)
        if f_mid == 0:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return (lo + hi) / 2


def derive_x_values() -> Dict[str, "mpmath.mpf"]:
    """x1, x2 of the worked example, each with its closed form for comparison."""
    with mpmath.workdps(60):
        target = mpmath.sqrt(2) / 2
        a1, a2 = mpmath.mpf(3) / 8, mpmath.mpf(7) / 16

        def g1(x):
            return mpmath.sqrt(x) + mpmath.sqrt(a1 - x) - target

        def g2(x):
            return mpmath.sqrt(x) + mpmath.sqrt(a2 - x) - target

        # g is negative at 0 and increasing up to a/2, so the root is unique there
        x1 = _bisect(g1, mpmath.mpf(0), a1 / 2)
        x2 = _bisect(g2, mpmath.mpf(0), a2 / 2)
        return {
            "x1": x1,
            "x2": x2,
            "x1_closed": (3 - 2 * mpmath.sqrt(2)) / 16,
            "x2_closed": (7 - 4 * mpmath.sqrt(3)) / 32,
            "a1": a1,
            "a2": a2,
        }


def _decimal(value) -> str:
    with mpmath.workdps(60):
        return mpmath.nstr(value, DIGITS, min_fixed=-20, max_fixed=20)


def _complement(total: str, value: str) -> str:
    """total - value in exact decimal arithmetic."""
    with localcontext() as ctx:
        ctx.prec = 2 * DIGITS + 10
        return str(Decimal(total) - Decimal(value))


def worked_example() -> Dict:
    """n = 9, m = 3 with rows j = 0 and j = 2, each of total mass exactly 1/2."""
    xs = derive_x_values()
    x1, x2 = _decimal(xs["x1"]), _decimal(xs["x2"])
    digits = [
        (1, 0, "0.125"),
        (3, 0, x1),
        (5, 0, _complement("0.375", x1)),
        (1, 2, x2),
        (3, 2, _complement("0.4375", x2)),
        (5, 2, "0.03125"),
        (7, 2, "0.03125"),
    ]
    return {"n": 9, "m": 3, "digits": [{"i": i, "j": j, "p": p} for i, j, p in digits]}


def uniform_full() -> Dict:
    """Every digit of the 3 x 2 grid with equal weight (Lebesgue measure)."""
    return {
        "n": 3,
        "m": 2,
        "digits": [{"i": i, "j": j, "p": "0.1666666666666667"} for j in range(2) for i in range(3)],
    }


def twomap() -> Dict:
    return {"n": 3, "m": 2, "digits": [{"i": 0, "j": 0, "p": "0.5"}, {"i": 2, "j": 1, "p": "0.5"}]}


def unequal_rows() -> Dict:
    """Rows with different C_{j,r}, so the conformal heuristic undershoots."""
    digits = [(0, 0, "0.1"), (1, 0, "0.4"), (0, 1, "0.25"), (2, 1, "0.25")]
    return {"n": 3, "m": 2, "digits": [{"i": i, "j": j, "p": p} for i, j, p in digits]}


def permutation() -> Dict:
    """Two rows carrying the same multiset of ratios p/q."""
    digits = [(0, 0, "0.36"), (2, 0, "0.24"), (1, 1, "0.16"), (3, 1, "0.24")]
    return {"n": 4, "m": 2, "digits": [{"i": i, "j": j, "p": p} for i, j, p in digits]}


BUNDLED = {
    "worked_example.json": worked_example,
    "uniform_full.json": uniform_full,
    "twomap.json": twomap,
    "unequal_rows.json": unequal_rows,
    "permutation.json": permutation,
}


def random_spec(rng: np.random.Generator, max_n: int = 7) -> Dict:
    """A random valid config: m < n, at least two rows and two columns, random weights."""
    n = int(rng.integers(3, max_n + 1))
    m = int(rng.integers(2, n))
    cells = [(i, j) for j in range(m) for i in range(n)]
    while True:
        count = int(rng.integers(2, len(cells) + 1))
        picked = [cells[idx] for idx in rng.choice(len(cells), size=count, replace=False)]
        if len({i for i, _ in picked}) >= 2 and len({j for _, j in picked}) >= 2:
            break
    weights = rng.dirichlet(np.ones(count)) * 0.9 + 0.1 / count
    weights[-1] = 1.0 - weights[:-1].sum()
    picked.sort(key=lambda d: (d[1], d[0]))
    return {
        "n": n,
        "m": m,
        "digits": [{"i": i, "j": j, "p": repr(float(w))} for (i, j), w in zip(picked, weights)],
    }


def write_configs(output_dir: Optional[Path] = None) -> List[Path]:
    output_dir = Path(output_dir) if output_dir is not None else CONFIG_DIR
    output_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for name, build in BUNDLED.items():
        path = output_dir / name
        path.write_text(json.dumps(build(), indent=2) + "\n", encoding="utf-8")
        written.append(path)
        print(f"✅ Generated {name}: {path}")
    return written


def main():
    print("\n📐 Generating bundled carpet configs...\n")
    xs = derive_x_values()
    with mpmath.workdps(60):
        print(f"x1 = {_decimal(xs['x1'])}  (closed form gap {mpmath.nstr(abs(xs['x1'] - xs['x1_closed']), 3)})")
        print(f"x2 = {_decimal(xs['x2'])}  (closed form gap {mpmath.nstr(abs(xs['x2'] - xs['x2_closed']), 3)})")
    paths = write_configs()
    print(f"\n✅ All configs written to {paths[0].parent}/")


if __name__ == "__main__":
    main()
