"""Command-line front end.

Verbs: ``gen-channel`` (dump one drop's channel tensor), ``bartlett``
(spatial profile + decorrelation CSVs), ``svd-sinr`` (per-layer SINR
samples), ``csi-sweep`` (throughput sweep CSVs), and
``validate-tables`` (load every shipped data table and check basic
invariants).  Failures exit nonzero with a one-line JSON error on
stderr.
"""

import argparse
import json
import sys
from dataclasses import replace

import numpy as np

from . import cdl, tdl
from .csi import etypeii_params
from .harness import (Scenario, layer_sinr_samples, load_scenario,
                      run_bartlett, run_sweep)
from .linkabs import (load_bler_curve, load_mcs_table, load_mi_curve)
from .antenna import Sector3gpp


def _scenario(args) -> Scenario:
    s = load_scenario(args.config)
    if getattr(args, "seed", None) is not None:
        s = replace(s, seed=args.seed)
    if getattr(args, "drops", None) is not None:
        s = replace(s, drops=args.drops)
    return s


def _cmd_gen_channel(args) -> int:
    s = _scenario(args)
    from .harness import _context_for
    ctx = _context_for(s)
    times = np.array([0.0, s.delay_ms * 1e-3])
    h = ctx.generate(s, args.drop, times, s.freqs_hz)
    np.savez(args.out, data=h.data, times_s=h.times_s, freqs_hz=h.freqs_hz)
    print(json.dumps({"out": args.out, "shape": list(h.data.shape)}))
    return 0


def _cmd_bartlett(args) -> int:
    s = _scenario(args)
    profile, decorr = run_bartlett(s, duration_ms=args.duration_ms,
                                   re_stride=args.re_stride, drop=args.drop)
    profile.to_csv(f"{args.out}_profile.csv")
    with open(f"{args.out}_decorr.csv", "w", encoding="utf-8") as f:
        f.write("lag_ms,correlation\n")
        for lag, corr in zip(decorr.lags_s, decorr.correlation):
            f.write(f"{lag * 1e3:.6f},{corr:.6f}\n")
    peaks = profile.peak_azimuth_deg
    print(json.dumps({"out": args.out,
                      "peak_std_deg": float(np.std(peaks)),
                      "final_correlation": float(decorr.correlation[-1])}))
    return 0


def _cmd_svd_sinr(args) -> int:
    s = _scenario(args)
    report = layer_sinr_samples(s, snr_db=args.snr_db,
                                precoding=args.precoding)
    report.to_csv(args.out)
    print(json.dumps({"out": args.out,
                      "layer_medians_db": [round(float(m), 3) for m in
                                           report.layer_medians_db],
                      "spread_db": round(report.spread_db, 3)}))
    return 0


def _cmd_csi_sweep(args) -> int:
    s = _scenario(args)
    result = run_sweep(s, workers=args.workers)
    result.to_csv(args.out)
    detail = args.out.rsplit(".", 1)[0] + "_drops.csv"
    result.detail_csv(detail)
    crossings = {scheme: result.crossing_snr_db(scheme, 0.7)
                 for scheme in result.schemes}
    print(json.dumps({"out": args.out, "detail": detail,
                      "snr_at_70pct": {k: (None if np.isnan(v)
                                           else round(v, 3))
                                       for k, v in crossings.items()}}))
    return 0


def _cmd_validate_tables(args) -> int:
    status = {}
    for name in ("tdl_a", "tdl_b", "tdl_c", "tdlc300"):
        profile = tdl.load_tap_profile(name)
        assert abs(profile.powers.sum() - 1.0) < 1e-9
        status[f"tap_profile/{name}"] = "ok"
    for name in ("low", "medium_a"):
        spec = tdl.load_correlation_spec(name)
        tdl.correlation_root(spec, 4, 16)       # PSD check
        status[f"correlation/{name}"] = "ok"
    for name in ("cdl_c", "rcdl_c"):
        table = cdl.load_cluster_table(name)
        assert abs(table.powers.sum() - 1.0) < 1e-9
        status[f"cluster_table/{name}"] = "ok"
    for name in ("rcdl_fixed_base", "rcdl_c_fixed"):
        cdl.load_fixed_ray_data(name)
        status[f"fixed_rays/{name}"] = "ok"
    for q in (2, 4, 6):
        curve = load_mi_curve(q)
        mi = curve.forward(np.linspace(-20, 35, 200))
        assert np.all(np.diff(mi) >= -1e-12)
        status[f"mi_curve/q{q}"] = "ok"
    mcs_table = load_mcs_table()
    for mcs in mcs_table:
        load_bler_curve(mcs)
    status["mcs_table"] = f"ok ({len(mcs_table)} entries)"
    for combo in range(1, 7):
        etypeii_params(combo, 1, 14)
    status["etypeii_params"] = "ok"
    Sector3gpp.from_data()
    status["sector_pattern"] = "ok"
    print(json.dumps({"tables": status}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mimolink",
        description="Link-level MIMO channel simulation and CSI evaluation")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("gen-channel", help="dump one drop's channel tensor")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--drop", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_gen_channel)

    p = sub.add_parser("bartlett", help="spatial profile over time")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--drop", type=int, default=0)
    p.add_argument("--duration-ms", type=float, default=5.0)
    p.add_argument("--re-stride", type=int, default=1)
    p.add_argument("--out", required=True,
                   help="output prefix for _profile.csv and _decorr.csv")
    p.set_defaults(func=_cmd_bartlett)

    p = sub.add_parser("svd-sinr", help="per-layer SINR sample report")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--drops", type=int)
    p.add_argument("--snr-db", type=float, default=20.0)
    p.add_argument("--precoding", choices=("svd", "random"), default="svd")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_svd_sinr)

    p = sub.add_parser("csi-sweep", help="throughput sweep over schemes")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--drops", type=int)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_csi_sweep)

    p = sub.add_parser("validate-tables", help="check shipped data tables")
    p.set_defaults(func=_cmd_validate_tables)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:                       # noqa: BLE001
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
