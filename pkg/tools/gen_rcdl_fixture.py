"""Generate the frozen reduced-CDL fixture shipped under mimolink/data.

Draws the fixed coupling permutations and polarization phases once from
the seeded streams, runs the reduction pipeline against the CDL-C base
under the reference antenna setting (8x2 cross-polarized sector panel,
10 deg downtilt, facing a 2x1 0/90 isotropic panel, direct AAV), and
writes:

  rcdl_fixed_base.json  fixed ray data for all 24 base clusters
  rcdl_c.csv            reduced 12-cluster table (ns delays)
  rcdl_c_fixed.json     fixed ray data for the kept clusters

Rerunning reproduces the shipped files byte-for-byte.
"""

import pathlib

import numpy as np

from mimolink import cdl, rcdl
from mimolink.antenna import Isotropic, PanelConfig, Sector3gpp
from mimolink.geometry import Orientation
from mimolink.seeding import seed_stream

DATA = pathlib.Path(__file__).resolve().parents[1] / "src" / "mimolink" / "data"

TARGETS = rcdl.SpreadTargets(asd_deg=25.0, asa_deg=55.0, zsd_deg=4.0,
                             zsa_deg=9.0, ds_ns=365.0)


def reference_context() -> rcdl.ProbeContext:
    return rcdl.ProbeContext(
        tx_panel=PanelConfig(n_cols=8, n_rows=2, pol_slants_deg=(45.0, -45.0),
                             orientation=Orientation.from_degrees(0.0, 10.0, 0.0),
                             pattern=Sector3gpp.from_data()),
        rx_panel=PanelConfig(n_cols=2, n_rows=1, pol_slants_deg=(0.0, 90.0),
                             orientation=Orientation.from_degrees(180.0, 0.0, 0.0),
                             pattern=Isotropic()),
        wavelength_m=299792458.0 / 3.5e9)


def draw_fixed(base: cdl.ClusterTable) -> cdl.FixedRayData:
    n, m = base.n_clusters, base.n_rays
    rng = seed_stream(0, ("rcdl-fixed-coupling", base.name))
    perms = [np.stack([rng.permutation(m) for _ in range(n)]) for _ in range(3)]
    phase_rng = seed_stream(0, ("rcdl-fixed-phases", base.name))
    phases = phase_rng.uniform(-np.pi, np.pi, size=(n, m, 4))
    return cdl.FixedRayData(aoa_perm=perms[0], zod_perm=perms[1],
                            zoa_perm=perms[2], phases=phases)


def main():
    base = cdl.load_cluster_table("cdl_c", delay_spread_ns=TARGETS.ds_ns)
    fixed = draw_fixed(base)
    table, fixed_kept, report = rcdl.build_rcdl(
        base, TARGETS, fixed, reference_context(), n_keep=12, name="rcdl_c")

    fixed.to_json(DATA / "rcdl_fixed_base.json")
    fixed_kept.to_json(DATA / "rcdl_c_fixed.json")
    table.to_csv(DATA / "rcdl_c.csv", extra_header={
        "base": base.name,
        "targets_deg": (f"asd={TARGETS.asd_deg},asa={TARGETS.asa_deg},"
                        f"zsd={TARGETS.zsd_deg},zsa={TARGETS.zsa_deg}"),
        "ds_ns": TARGETS.ds_ns,
        "kept_clusters": ",".join(str(i + 1) for i in report.kept),
        "probe": "8x2 x-pol sector panel (0,10,0) -> 2x1 0/90 iso (180,0,0), direct AAV",
    })
    for line in report.lines():
        print(line)


if __name__ == "__main__":
    main()
