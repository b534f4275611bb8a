"""Generate the shipped logistic BLER anchors.

Public LDPC link curves are not shipped with the 3GPP specs, so each MCS
gets a parametric logistic BLER(gamma) anchored at a threshold derived
from its spectral efficiency by a fixed Shannon-gap rule:

    gamma50_db = 10 log10(2**(Q * rate) - 1) + GAP_DB

All MCS share one slope.  Throughput comparisons in this package are
relative (dB gaps between feedback schemes at a fixed MCS), which any
common monotone BLER family preserves.

Run from the repository root: ``python3 tools/gen_bler_anchors.py``
"""

from __future__ import annotations

import math
import pathlib

GAP_DB = 1.5
SLOPE_DB = 0.5

HERE = pathlib.Path(__file__).resolve().parents[1]
DATA = HERE / "src" / "mimolink" / "data"


def main():
    rows = []
    for line in (DATA / "mcs_pdsch_table2.csv").read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        mcs, q_bits, rate_x1024 = line.split(",")
        se = float(q_bits) * float(rate_x1024) / 1024.0
        gamma50 = 10.0 * math.log10(2.0**se - 1.0) + GAP_DB
        rows.append((int(mcs), gamma50))
    out = DATA / "bler_anchors.csv"
    with out.open("w") as fh:
        fh.write("# name: logistic BLER anchors per PDSCH MCS\n")
        fh.write("# source: synthesized Shannon-gap rule "
                 f"(gap {GAP_DB} dB, slope {SLOPE_DB} dB), "
                 "tools/gen_bler_anchors.py\n")
        fh.write("# mcs,gamma50_db,slope_db\n")
        for mcs, gamma50 in rows:
            fh.write(f"{mcs},{gamma50:.6f},{SLOPE_DB:.6f}\n")
    print(f"wrote {out} ({len(rows)} anchors)")


if __name__ == "__main__":
    main()
