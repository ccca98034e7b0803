"""Delay statistics and CFR/sub-band data versus UAV height for every S-V preset.

    python scripts/height_sweep.py --n 1000 --out out/sweep
"""
import argparse
from pathlib import Path

import numpy as np

from uavuwb import io as fio
from uavuwb.core import RandomSource
from uavuwb.metrics import average_pdp, delay_stats, sparse_pdp, subband_power_stats
from uavuwb.presets import SWEEP_HEIGHTS, all_presets
from uavuwb.sv import generate_cir, sweep_geometry


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--out", default="out/sweep")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    print(f"{'preset':<16}{'h (m)':>6}{'mean tau':>10}{'E[t_rms]':>10}{'PDP t_rms':>11}{'CB (MHz)':>10}")
    for p in all_presets():
        if p.v_mph:
            continue
        for h in SWEEP_HEIGHTS:
            g = sweep_geometry(p.scenario, h)
            # matched seeds across presets
            cirs = [generate_cir(p, g, RandomSource(args.seed, i)) for i in range(args.n)]
            per_cir = np.mean([delay_stats(sparse_pdp(c)).t_rms for c in cirs])
            s = delay_stats(average_pdp(cirs))
            rows.append((h, p.key, s.t_mean, s.t_rms, s.cb_hz))
            print(f"{p.key:<16}{h:>6g}{s.t_mean:>10.3f}{per_cir:>10.3f}{s.t_rms:>11.3f}{s.cb_hz / 1e6:>10.1f}")
            tag = f"{p.key}_h{h:g}m"
            fio.write_subband(out / f"subband_{tag}.csv", subband_power_stats(cirs, n_bands=15), seed=args.seed)
    fio.write_delay_stats(out / "delay_stats.csv", rows, seed=args.seed, n=args.n)


if __name__ == "__main__":
    main()
