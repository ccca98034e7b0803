"""Generate -> fit round trip for every preset; prints estimated vs tabulated parameters.

    python scripts/reproduce_tables.py --seed 0 --n 1000 --out out/tables
"""
import argparse
from pathlib import Path

import numpy as np

from uavuwb import io as fio
from uavuwb.core import RandomSource
from uavuwb.estimation import fit_nakagami, fit_report
from uavuwb.pathloss import PathLossSample, fit_path_loss, sample_path_loss
from uavuwb.presets import PL_DISTANCE_RANGE, all_presets
from uavuwb.sv import generate_cir, informative_heights, small_scale_ensemble, sweep_geometry


def path_loss_rows(seed, n):
    d = np.repeat(PL_DISTANCE_RANGE, n // 2)
    rows = []
    for k, p in enumerate(all_presets()):
        pl = sample_path_loss(p.pl, d, RandomSource(seed, k))
        fit = fit_path_loss(PathLossSample(a, b) for a, b in zip(d, pl))
        rows.append((p.key, p.pl.alpha, fit.alpha_hat, p.pl.pl0_db, fit.pl0_hat_db, p.pl.sigma_db, fit.sigma_hat_db))
    return rows


def sv_reports(seed, n, locations, realizations, out):
    for p in all_presets():
        if p.v_mph:
            continue
        geoms = [sweep_geometry(p.scenario, h) for h in informative_heights(p.sv)]
        cirs = [generate_cir(p, geoms[i % len(geoms)], RandomSource(seed, i)) for i in range(n)]
        report = fit_report(cirs)
        small, groups = [], []
        for loc in range(locations):
            g = sweep_geometry(p.scenario, (4.0, 8.0, 12.0, 16.0)[loc % 4])
            part = small_scale_ensemble(p, g, realizations, RandomSource(seed + 1, loc))
            small += part
            groups += [loc] * len(part)
        nf = fit_nakagami(small, groups)
        report.eta_hat, report.xi_hat, report.m0_hat, report.v0_hat = nf.eta_hat, nf.xi_hat, nf.m0_hat, nf.v0_hat
        d = out / p.key.rsplit("-", 1)[0]
        d.mkdir(parents=True, exist_ok=True)
        fio.write_fit_report(d, report, p, seed=seed, n_cirs=n)
        print(fio.format_fit_table(report, p))
        print()


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n", type=int, default=1000, help="CIRs per S-V preset")
    ap.add_argument("--pl-samples", type=int, default=10_000)
    ap.add_argument("--locations", type=int, default=40)
    ap.add_argument("--realizations", type=int, default=1000)
    ap.add_argument("--out", default="out/tables")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows = path_loss_rows(args.seed, args.pl_samples)
    cols = ("preset", "alpha", "alpha_hat", "pl0_db", "pl0_hat_db", "sigma_db", "sigma_hat_db")
    fio.write_table(out / "pathloss_round_trip.csv", {"kind": "pathloss_round_trip", "seed": args.seed}, cols, rows)
    print(f"{'preset':<18}{'alpha':>8}{'fit':>9}{'PL0':>10}{'fit':>10}{'sigma':>8}{'fit':>8}")
    for r in rows:
        print(f"{r[0]:<18}{r[1]:>8.4f}{r[2]:>9.4f}{r[3]:>10.4f}{r[4]:>10.4f}{r[5]:>8.3f}{r[6]:>8.3f}")
    print()
    sv_reports(args.seed, args.n, args.locations, args.realizations, out)


if __name__ == "__main__":
    main()
