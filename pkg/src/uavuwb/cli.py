"""Command-line front end: ``uavuwb {generate,analyze,fit,pathloss,presets}``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import io as fio
from .core import (
    RandomSource,
    ScanSet,
    UavUwbError,
    ValidationError,
)
from .estimation import default_gap, fit_report
from .metrics import (
    average_pdp,
    cfr,
    delay_stats,
    sparse_pdp,
    subband_power_stats,
    threshold_pdp,
    toa_cdf,
)
from .pathloss import PathLossSample, fit_path_loss, sample_path_loss
from .presets import (
    PL_DISTANCE_RANGE,
    PRESET_COLUMNS,
    SWEEP_HEIGHTS,
    parse_preset_key,
    preset_lookup,
    preset_rows,
)
from .sv import generate_cir, small_scale_ensemble, sweep_geometry

log = logging.getLogger("uavuwb")

OUT_ENV = "UAVUWB_OUT"


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "uavuwb_out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _preset(args):
    return preset_lookup(args.env, args.scenario, args.v)


def _heights(text: str) -> list[float]:
    return [float(h) for h in text.split(",") if h.strip()]


def _geometry(args, preset, h):
    kw = {"h_opt": args.h_opt}
    if args.d is not None:
        from .core import Geometry

        return Geometry.for_scenario(preset.scenario, h, args.d, **kw)
    return sweep_geometry(preset.scenario, h, **kw)


def cmd_generate(args) -> int:
    if args.n < 1:
        raise ValidationError("--n must be >= 1")
    preset = _preset(args)
    out = _out_dir(args)
    heights = _heights(args.h)
    entries = []
    if args.mode == "sv":
        for i in range(args.n):
            g = _geometry(args, preset, heights[i % len(heights)])
            cir = generate_cir(preset, g, RandomSource(args.seed, i))
            entries.append(dict(file=f"cir_{i:05d}.csv", seed=args.seed, stream=i, group=i,
                                h_uav_m=g.h_uav, d_m=g.d, h_gnd_m=g.h_gnd, h_opt_m=g.h_opt, cir=cir))
    else:
        k = 0
        for loc in range(args.locations):
            g = _geometry(args, preset, heights[loc % len(heights)])
            for r, cir in enumerate(small_scale_ensemble(preset, g, args.n, RandomSource(args.seed, loc))):
                entries.append(dict(file=f"cir_{k:05d}.csv", seed=args.seed, stream=loc, group=loc,
                                    realization=r, h_uav_m=g.h_uav, d_m=g.d, h_gnd_m=g.h_gnd,
                                    h_opt_m=g.h_opt, cir=cir))
                k += 1
    meta = dict(preset=preset.key, seed=args.seed, mode=args.mode, labels="truth")
    for e in entries:
        fio.write_cir(out / e["file"], e.pop("cir"), preset=preset.key, seed=e["seed"],
                      stream=e["stream"], group=e["group"], mode=args.mode)
    fio.write_manifest(out, entries, **meta)
    print(f"wrote {len(entries)} CIRs and {fio.MANIFEST_NAME} to {out}")
    return 0


def _analyze_cirs(cirs, label, out, height=None, scenario="", rows=None, thresholded=False):
    suffix = f"_h{height:g}m" if height is not None else ""
    pdp = average_pdp(cirs)
    stats_pdp = threshold_pdp(pdp) if thresholded else pdp
    st = delay_stats(stats_pdp)
    fio.write_pdp(out / f"pdp{suffix}.csv", pdp, source=label)
    fio.write_cfr(out / f"cfr{suffix}.csv", cfr(cirs[0]), source=label)
    t, c = toa_cdf(cirs)
    fio.write_toa_cdf(out / f"toa_cdf{suffix}.csv", t, c, source=label)
    fio.write_subband(out / f"subband{suffix}.csv", subband_power_stats(cirs), source=label)
    rows.append((height, scenario, st.t_mean, st.t_rms, st.cb_hz))


def cmd_analyze(args) -> int:
    out = _out_dir(args)
    rows = []
    if args.input:
        path = Path(args.input)
        if path.is_dir():
            header, entries, cirs = fio.read_ensemble(path)
            if not cirs:
                raise ValidationError(f"no CIRs listed in {path}")
            heights = {e["h_uav_m"] for e in entries}
            h = heights.pop() if len(heights) == 1 else None
            _analyze_cirs(cirs, str(path), out, None, header.get("preset", ""), rows)
            rows[-1] = (h,) + rows[-1][1:]
        else:
            ss: ScanSet = fio.read_scanset(path)
            from .estimation import CleanConfig, clean_deconvolve

            cirs = [clean_deconvolve(s, ss.template, CleanConfig(), ss.t_s).cir for s in ss.scans]
            log.info("CLEAN applied to %d scans", len(cirs))
            h = ss.geometry.h_uav if ss.geometry else None
            sc = ss.scenario.key if ss.scenario else ""
            _analyze_cirs(cirs, str(path), out, None, sc, rows, thresholded=True)
            rows[-1] = (h,) + rows[-1][1:]
    else:
        preset = _preset(args)
        for k, h in enumerate(_heights(args.heights)):
            g = _geometry(args, preset, h)
            cirs = [generate_cir(preset, g, RandomSource(args.seed, k * args.n + i)) for i in range(args.n)]
            _analyze_cirs(cirs, preset.key, out, h, preset.key, rows)
    fio.write_delay_stats(out / "delay_stats.csv", rows)
    print(f"wrote analysis of {len(rows)} ensemble(s) to {out}")
    return 0


def cmd_fit(args) -> int:
    src = Path(args.input)
    if not (src / fio.MANIFEST_NAME).is_file():
        print(f"error: no ensemble manifest in {src}", file=sys.stderr)
        return 2
    header, entries, cirs = fio.read_ensemble(src)
    if not cirs:
        print(f"error: manifest in {src} lists no CIRs", file=sys.stderr)
        return 2
    truth = parse_preset_key(args.truth) if args.truth else None
    labels = args.labels
    gap = args.gap_ns
    if labels == "gap" and gap is None:
        prior = truth or (parse_preset_key(header["preset"]) if header.get("preset") else None)
        if prior is None:
            raise ValidationError("gap labeling needs --gap-ns or a preset for the prior")
        gap = default_gap(prior.sv.lam)
    groups = [e["group"] for e in entries] if header.get("mode") == "smallscale" else None
    report = fit_report(
        cirs, groups=groups, distances=[e["d_m"] for e in entries], labels=labels, gap_ns=gap
    )
    out = _out_dir(args)
    fio.write_fit_report(out, report, truth, source=str(src), seed=header.get("seed"))
    print(fio.format_fit_table(report, truth))
    core_missing = [k for k in ("Lambda_hat", "lambda_hat", "mu_hat", "beta_hat") if getattr(report, k) is None]
    if core_missing:
        print(f"insufficient data for: {', '.join(core_missing)}", file=sys.stderr)
        return 3
    return 0


def cmd_pathloss(args) -> int:
    out = _out_dir(args)
    if args.input:
        samples = fio.read_pathloss_samples(args.input)
    else:
        preset = _preset(args)
        gen = RandomSource(args.seed).generator
        d = gen.uniform(args.d_min, args.d_max, size=args.n)
        pl = sample_path_loss(preset.pl, d, gen, h_gnd=args.h_gnd, h_opt=args.h_opt)
        samples = [PathLossSample(float(a), float(b), preset.env, preset.scenario, preset.v_mph)
                   for a, b in zip(d, pl)]
        fio.write_pathloss_samples(out / "pathloss_samples.csv", samples, preset=preset.key, seed=args.seed)
    fit = fit_path_loss(samples)
    fio.write_table(out / "pathloss_fit.csv", {"kind": "pathloss_fit", "n": len(samples)},
                    ("alpha", "pl0_db", "sigma_db"), [(fit.alpha_hat, fit.pl0_hat_db, fit.sigma_hat_db)])
    print(f"alpha={fit.alpha_hat:.4f} PL0={fit.pl0_hat_db:.4f} dB sigma={fit.sigma_hat_db:.4f} dB "
          f"(n={len(samples)})")
    return 0


def cmd_presets(args) -> int:
    rows = preset_rows()
    print(",".join(PRESET_COLUMNS))
    for r in rows:
        print(",".join(fio.fmt(r.get(c)) for c in PRESET_COLUMNS))
    if args.out or os.environ.get(OUT_ENV):
        fio.write_presets(_out_dir(args) / "presets.csv", rows, PRESET_COLUMNS)
    return 0


def build_parser() -> argparse.ArgumentParser:
    def global_flags(p, defaults):
        d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
        p.add_argument("--seed", type=int, default=d(0), help="base seed (default 0)")
        p.add_argument("--out", default=d(None), help=f"output directory (default ${OUT_ENV} or ./uavuwb_out)")
        p.add_argument("--format-version", default=d(fio.FORMAT_VERSION))
        p.add_argument("-v", "--verbose", action="store_true", default=d(False))

    # subcommands repeat the flags without defaults so they do not mask global ones
    common = argparse.ArgumentParser(add_help=False)
    global_flags(common, defaults=False)

    def preset_args(p, required=True):
        p.add_argument("--env", required=required, choices=["open", "suburban"])
        p.add_argument("--scenario", required=required, choices=["1", "2", "3", "s1", "s2", "s3"])
        p.add_argument("--v", type=int, default=0, choices=[0, 20], help="speed label in mph")
        p.add_argument("--d", type=float, default=None, help="link distance (m); default from height")
        p.add_argument("--h-opt", type=float, default=1.5)

    ap = argparse.ArgumentParser(prog="uavuwb", description=__doc__)
    global_flags(ap, defaults=True)
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="synthesize a CIR ensemble")
    preset_args(g)
    g.add_argument("--h", default="8", help="UAV height(s) in m, comma separated (cycled)")
    g.add_argument("--n", type=int, default=25, help="CIRs (sv) or realizations per location (smallscale)")
    g.add_argument("--mode", choices=["sv", "smallscale"], default="sv")
    g.add_argument("--locations", type=int, default=20, help="measurement points in smallscale mode")
    g.set_defaults(func=cmd_generate)

    a = sub.add_parser("analyze", parents=[common], help="PDP/CFR/delay/TOA/sub-band statistics")
    a.add_argument("--input", help="ensemble directory or scan-set CSV")
    preset_args(a, required=False)
    a.add_argument("--heights", default=",".join(f"{h:g}" for h in SWEEP_HEIGHTS))
    a.add_argument("--n", type=int, default=25)
    a.set_defaults(func=cmd_analyze)

    f = sub.add_parser("fit", parents=[common], help="fit model parameters to an ensemble")
    f.add_argument("--input", required=True)
    f.add_argument("--truth", help="preset key such as open-s2-v0 to compare against")
    f.add_argument("--labels", choices=["truth", "gap"], default="truth")
    f.add_argument("--gap-ns", type=float, default=None)
    f.set_defaults(func=cmd_fit)

    p = sub.add_parser("pathloss", parents=[common], help="draw or fit path loss samples")
    preset_args(p, required=False)
    p.add_argument("--input", help="path loss sample CSV to fit instead of drawing")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--d-min", type=float, default=PL_DISTANCE_RANGE[0])
    p.add_argument("--d-max", type=float, default=PL_DISTANCE_RANGE[1])
    p.add_argument("--h-gnd", type=float, default=0.0, help="receiver height (m); 0 keeps dh/h_opt = 1")
    p.set_defaults(func=cmd_pathloss)

    s = sub.add_parser("presets", parents=[common], help="dump the preset registry")
    s.set_defaults(func=cmd_presets)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.format_version != fio.FORMAT_VERSION:
        print(f"error: unsupported format version {args.format_version}", file=sys.stderr)
        return 2
    needs_preset = args.command in ("analyze", "pathloss") and not getattr(args, "input", None)
    if needs_preset and (args.env is None or args.scenario is None):
        print("error: --env and --scenario are required without --input", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (UavUwbError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
