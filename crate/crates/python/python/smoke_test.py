"""Smoke test for the `cellhom` extension module.

Build and run from the repository root:

    cargo build -p cellhom-python --release --features extension-module
    cp target/release/libcellhom_py.so crates/python/python/cellhom.so
    python3 crates/python/python/smoke_test.py
"""

import math
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import cellhom  # noqa: E402

LAMINATE = """
kind = "laminate"
axis = 0
fractions = [0.5, 0.5]
phases = [
  { lame = { lambda = 0.0, mu = 1.0 }, density = 1.0 },
  { lame = { lambda = 0.0, mu = 3.0 }, density = 1.0 },
]
"""

CONSTANT = """
kind = "constant"
material = { lame = { lambda = 0.8, mu = 1.2 }, density = 2.0 }
"""


def check(label, ok, detail=""):
    print(f"{'PASS' if ok else 'FAIL'}  {label}  {detail}")
    return ok


def main():
    results = []

    const = cellhom.Medium(CONSTANT, 2, 16)
    model = cellhom.homogenize(const)
    # homogeneous medium: Cbar = C, so C_0000 = lambda + 2 mu
    results.append(check("constant cbar", abs(model.c(0, 0, 0, 0) - 3.2) < 1e-12, model.c(0, 0, 0, 0)))
    results.append(check("constant battery", model.all_passed()))

    lam = cellhom.Medium(LAMINATE, 2, 64)
    model = cellhom.homogenize(lam)
    # shear across the layers sees the harmonic mean of mu: 2 / (1 + 1/3) = 1.5
    c0101 = model.c(0, 1, 0, 1)
    results.append(check("laminate harmonic mean", abs(c0101 - 1.5) < 1e-10, c0101))
    results.append(check("laminate battery", model.all_passed()))
    failed = [c for c in model.checks() if not c[3]]
    if failed:
        print("  failing checks:", failed)

    k = 0.05 * 2 * math.pi
    bloch = lam.bloch_bands([k, 0.0], 2)
    static = sorted(z.real for z in model.dispersion([k, 0.0], 0.0))
    disp = sorted(z.real for z in model.dispersion([k, 0.0], 1.0))
    e0 = max(abs(a - b) for a, b in zip(bloch, static))
    e2 = max(abs(a - b) for a, b in zip(bloch, disp))
    results.append(check("dispersive model closer to Bloch", e2 < e0, f"{e0:.2e} -> {e2:.2e}"))

    rows = cellhom.dtn_table(12, 2.0, 1.7, 1.0, 1.0)
    results.append(check("dtn rows", len(rows) == 13 and rows[0][0] == 0))

    try:
        cellhom.Medium(LAMINATE.replace("mu = 3.0", "mu = -3.0"), 2, 16)
        results.append(check("negative modulus rejected", False))
    except ValueError as e:
        results.append(check("negative modulus rejected", True, str(e)[:60]))

    print(f"{sum(results)}/{len(results)} passed")
    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
