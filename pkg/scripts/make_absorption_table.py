"""Regenerate thzroom/data/absorption.csv.

The bundled table is a smooth stand-in for humid indoor air (about 50 %
relative humidity at 23 C): a sum of Lorentzian water-vapour lines at
their tabulated centre frequencies plus a quadratic continuum. Line peak
strengths are rounded, order-of-magnitude values; swap in a line-by-line
database export with the same two-column schema for quantitative work.
"""
import sys
from pathlib import Path

import numpy as np

HWHM_GHZ = 2.5
# centre frequency (GHz): peak absorption coefficient (1/m)
LINES = {
    183.31: 0.008, 325.15: 0.012, 380.20: 0.06, 448.00: 0.05, 474.69: 0.01,
    556.94: 3.0, 620.70: 0.05, 752.03: 2.0, 916.17: 0.1, 970.32: 0.2,
    987.93: 1.0, 1097.37: 20.0, 1113.34: 4.0, 1162.91: 15.0, 1207.64: 8.0,
    1228.79: 3.0, 1410.62: 10.0, 1602.22: 6.0, 1661.01: 15.0, 1669.90: 30.0,
    1716.77: 25.0, 1762.04: 10.0, 1794.79: 8.0, 1867.75: 8.0, 1919.36: 10.0,
    2040.48: 12.0, 2074.43: 15.0, 2164.13: 8.0, 2196.35: 6.0, 2221.75: 5.0,
    2264.15: 6.0, 2344.25: 5.0, 2391.57: 10.0, 2531.09: 6.0, 2640.47: 8.0,
    2685.64: 4.0, 2773.98: 8.0, 2968.75: 4.0, 3013.20: 10.0, 3182.15: 5.0,
    3331.46: 8.0, 3536.67: 6.0, 3654.60: 5.0, 3807.26: 4.0, 3977.05: 6.0,
}


def k_per_m(f_ghz: np.ndarray) -> np.ndarray:
    k = 0.0012 * (f_ghz / 300.0) ** 2
    for centre, peak in LINES.items():
        k = k + peak / (1.0 + ((f_ghz - centre) / HWHM_GHZ) ** 2)
    return k


def main(dest: Path) -> None:
    f = np.arange(100, 4001, 1, dtype=float)
    with open(dest, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("frequency_ghz,k_per_m\n")
        for fi, ki in zip(f, k_per_m(f)):
            fh.write(f"{fi:g},{ki:.6g}\n")


if __name__ == "__main__":
    default = Path(__file__).resolve().parents[1] / "src" / "thzroom" / "data" / "absorption.csv"
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else default)
