"""Command-line pipeline: simulate, analyze, reconstruct, aperture, report.

Exit codes: 0 success, 2 config or usage error, 3 empty evidence,
4 fit failure.  All artifacts land in the --out directory; manifest.json
snapshots the effective config so a run can be reproduced exactly.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__, serialize
from .config import Config, RunManifest, emit_config, load_config
from .errors import ConfigError, EmptyEvidenceError, FitError, SpeckleScopeError
from .reconstruct import aperture_report, disambiguate, search
from .speckle import SpeckleRun, estimate_g_m, nearest_magic_pixels, sample_frames, uniform_grid
from .spectrum import aggregate, fit_free, gate

_CURVE_PREFIX = "curves_m"
_FRAMES_NAME = "frames.sstk"


def _parse_orders(text: str) -> tuple[int, ...]:
    """Order lists as '3,5,6' or inclusive ranges as '3..6'."""
    text = text.strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            orders = tuple(range(int(lo), int(hi) + 1))
        else:
            orders = tuple(int(tok) for tok in text.split(",") if tok)
    except ValueError as exc:
        raise ConfigError(f"cannot parse orders {text!r}: {exc}") from exc
    if not orders or any(m < 2 for m in orders) or len(set(orders)) != len(orders):
        raise ConfigError(f"orders must be distinct integers >= 2, got {text!r}")
    return orders


def _load_config_arg(args: argparse.Namespace) -> Config:
    config = load_config(args.config) if args.config else Config()
    sim = config.simulate
    if getattr(args, "seed", None) is not None:
        sim = replace(sim, seed=args.seed)
    if getattr(args, "frames", None) is not None:
        if args.frames < 1:
            raise ConfigError(f"--frames must be positive, got {args.frames}")
        sim = replace(sim, frames=args.frames)
    if getattr(args, "orders", None) is not None:
        sim = replace(sim, orders=_parse_orders(args.orders))
    return replace(config, simulate=sim)


def _out_dir(args: argparse.Namespace) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _load_config_arg(args)
    out = _out_dir(args)
    sim = config.simulate
    geometry = config.source_geometry()

    run = SpeckleRun(
        geometry=geometry,
        frames=sim.frames,
        seed=sim.seed,
        delta_axis=uniform_grid(sim.pixels),
        weights=sim.weights,
        quantization_bits=sim.bits,
    )
    stack = sample_frames(run)

    notes: list[str] = []
    outputs: dict[str, str] = {}
    if stack.bits is not None:
        clipped = stack.clipped_fraction()
        if clipped > 0.5:
            notes.append(
                f"quantization at {stack.bits} bits pins {clipped:.0%} of samples "
                "at the rail; statistics are unreliable"
            )
    if sim.frames < 2:
        notes.append("single frame: sigma column unavailable, estimates unreliable")

    if sim.save_frames:
        frames_path = out / _FRAMES_NAME
        serialize.write_frames(stack, frames_path)
        outputs["frames"] = frames_path.name

    for m in sim.orders:
        pixels, placement_error = nearest_magic_pixels(stack.delta_axis, m)
        curve = estimate_g_m(stack, pixels)
        path = out / f"{_CURVE_PREFIX}{m}.csv"
        serialize.write_curve_csv(curve, path)
        outputs[f"curve_m{m}"] = path.name
        notes.append(f"order {m}: magic placement error {placement_error:.3e} rad")
        print(f"order {m}: {len(curve)} pixels, fixed at {list(pixels)}")

    manifest = RunManifest.create(config, seed=sim.seed, outputs=outputs, notes=tuple(notes))
    serialize.write_json(out / "manifest.json", manifest.to_dict())
    for note in notes:
        print(f"note: {note}")
    print(f"simulated {sim.frames} frames of x={list(geometry.x)} into {out}")
    return 0


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------


def _find_curves(out: Path, orders: tuple[int, ...] | None) -> dict[int, Path]:
    found: dict[int, Path] = {}
    for path in sorted(out.glob(f"{_CURVE_PREFIX}*.csv")):
        stem = path.stem.removeprefix(_CURVE_PREFIX)
        if stem.isdigit():
            found[int(stem)] = path
    if orders is not None:
        found = {m: p for m, p in found.items() if m in orders}
    return found


def cmd_analyze(args: argparse.Namespace) -> int:
    config = _load_config_arg(args)
    out = _out_dir(args)
    orders = _parse_orders(args.orders) if args.orders else None

    # prefer re-estimating from the frame stack: bootstrap replicas only
    # exist on freshly estimated curves and carry the honest fit errors
    curves = {}
    if (out / _FRAMES_NAME).exists():
        stack = serialize.read_frames(out / _FRAMES_NAME)
        for m in orders or config.simulate.orders:
            pixels, _ = nearest_magic_pixels(stack.delta_axis, m)
            curves[m] = estimate_g_m(stack, pixels)
    if not curves:
        curve_files = _find_curves(out, orders)
        curves = {m: serialize.read_curve_csv(path, m) for m, path in curve_files.items()}
    if not curves:
        raise ConfigError(f"no curve files or frame stack under {out}")

    fit_cfg = config.fit
    raw, gated, failures = [], [], []
    for m in sorted(curves):
        try:
            spectrum = fit_free(
                curves[m],
                max_harmonics=fit_cfg.max_harmonics,
                oversample=fit_cfg.oversample,
                stop_snr=fit_cfg.stop_snr,
            )
        except FitError as exc:
            failures.append((m, str(exc)))
            print(f"order {m}: fit failed: {exc}", file=sys.stderr)
            continue
        raw.append(spectrum)
        gated.append(gate(spectrum, config.gate))

    evidence = aggregate(gated)
    serialize.write_json(
        out / "spectra.json",
        {
            "fits": [serialize.spectrum_to_dict(s) for s in raw],
            "gated": [serialize.spectrum_to_dict(s) for s in gated],
            "failures": [{"m": m, "error": msg} for m, msg in failures],
        },
    )
    serialize.write_json(out / "evidence.json", serialize.evidence_to_dict(evidence))

    table_rows = []
    for spectrum, gated_spectrum in zip(raw, gated):
        kept = {round(h.f) for h in gated_spectrum.harmonics}
        for h in spectrum.harmonics:
            table_rows.append(
                {
                    "m": spectrum.m,
                    "f_fit": h.f,
                    "sigma_f": h.sigma_f,
                    "A": h.amplitude,
                    "sigma_A": h.sigma_a,
                    "accepted": abs(h.f - round(h.f)) <= 0.5 and round(h.f) in kept,
                }
            )
        if not spectrum.harmonics:
            print(f"order {spectrum.m}: no modulation above threshold (A0={spectrum.a0:.3f})")
    if args.format == "json":
        serialize.write_json(out / "table.json", {"rows": table_rows})
    else:
        buf = io.StringIO()
        writer = csv.DictWriter(
            buf, fieldnames=["m", "f_fit", "sigma_f", "A", "sigma_A", "accepted"],
            lineterminator="\n",
        )
        writer.writeheader()
        writer.writerows(table_rows)
        serialize.atomic_write_text(out / "table.csv", buf.getvalue())

    for row in table_rows:
        flag = "accepted" if row["accepted"] else "rejected"
        print(
            f"order {row['m']}: f = {row['f_fit']:.2f} +- {row['sigma_f']:.2f}, "
            f"A = {row['A']:.3f} +- {row['sigma_A']:.3f}  [{flag}]"
        )
    present = evidence.present()
    print(f"evidence: present {list(present)}, absent {list(evidence.absent())}")
    if not present:
        print("warning: no frequencies accepted; evidence table is empty", file=sys.stderr)
    if failures:
        print(f"{len(failures)} fit(s) failed", file=sys.stderr)
        return 4
    return 0


# ---------------------------------------------------------------------------
# reconstruct
# ---------------------------------------------------------------------------


def cmd_reconstruct(args: argparse.Namespace) -> int:
    config = _load_config_arg(args)
    out = _out_dir(args)
    evidence_path = out / "evidence.json"
    if not evidence_path.exists():
        raise ConfigError(f"missing {evidence_path}; run analyze first")
    evidence = serialize.evidence_from_dict(serialize.read_json(evidence_path))

    candidate_set = search(evidence, config.reconstruct)

    spectra_path = out / "spectra.json"
    if spectra_path.exists():
        gated = [
            serialize.spectrum_from_dict(d)
            for d in serialize.read_json(spectra_path)["gated"]
        ]
        gated = [s for s in gated if s.harmonics]
        if gated and candidate_set.candidates:
            candidate_set = disambiguate(candidate_set, gated)

    apertures = [aperture_report(m) for m in evidence.orders_measured]
    serialize.write_json(
        out / "reconstruction.json", serialize.report_to_dict(candidate_set, apertures)
    )

    print(f"{len(candidate_set.candidates)} candidate geometr"
          f"{'y' if len(candidate_set.candidates) == 1 else 'ies'}")
    for cand in candidate_set.candidates:
        score = "" if cand.score is None else f"  chi2 = {cand.score:.2f}"
        print(f"  x = {list(cand.geometry.x)}{score}")
    if not candidate_set.exhaustive:
        print("warning: bounds truncated the search; candidate list may be incomplete",
              file=sys.stderr)
    return 0


# ---------------------------------------------------------------------------
# aperture
# ---------------------------------------------------------------------------


def cmd_aperture(args: argparse.Namespace) -> int:
    orders = _parse_orders(args.orders)
    reports = [aperture_report(m) for m in orders]
    rows = [{"m": r.m, "r_moving": r.moving, "r_total": r.total} for r in reports]
    if args.out:
        if args.format == "json":
            serialize.write_json(Path(args.out), {"apertures": rows})
        else:
            buf = io.StringIO()
            writer = csv.DictWriter(buf, fieldnames=["m", "r_moving", "r_total"],
                                    lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
            serialize.atomic_write_text(Path(args.out), buf.getvalue())
    for r in reports:
        print(f"m = {r.m}: moving {r.moving:.4f}, fixed array {r.total:.4f} of full aperture")
    return 0


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------


def cmd_report(args: argparse.Namespace) -> int:
    out = Path(args.out)
    recon_path = out / "reconstruction.json"
    if not recon_path.exists():
        raise ConfigError(f"missing {recon_path}; run reconstruct first")
    report = serialize.read_json(recon_path)
    evidence = serialize.evidence_from_dict(report["evidence"])

    print(f"orders measured: {list(evidence.orders_measured)}")
    print(f"present: {list(evidence.present())}")
    print(f"absent:  {list(evidence.absent())}")
    conflicts = evidence.conflicts()
    if conflicts:
        print(f"conflicts: {list(conflicts)}")
    print(f"exhaustive search: {report['exhaustive']}")
    scored = [c for c in report["candidates"] if c["score"] is not None]
    for cand in report["candidates"]:
        line = f"  x = {cand['x']}"
        if cand["score"] is not None:
            line += f"  chi2 = {cand['score']:.2f}"
        print(line)
    if scored:
        best = min(c["score"] for c in scored)
        winners = [c["x"] for c in scored if c["score"] - best < 1.0]
        print(f"winner(s) within one chi-square unit: {winners}")
    for ap in report["apertures"]:
        print(
            f"order {ap['m']}: moving aperture {ap['r_moving']:.4f}, "
            f"fixed array {ap['r_total']:.4f}"
        )
    manifest_path = out / "manifest.json"
    if manifest_path.exists():
        manifest = RunManifest.from_dict(serialize.read_json(manifest_path))
        print(f"run: seed {manifest.seed}, tool version {manifest.version}")
        for note in manifest.notes:
            print(f"note: {note}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="specklescope",
        description="Thermal-speckle correlation simulation and source reconstruction",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="sample speckle frames and estimate curves")
    sim.add_argument("--config", help="config file (defaults used when omitted)")
    sim.add_argument("--seed", type=int, help="override simulate.seed")
    sim.add_argument("--frames", type=int, help="override simulate.frames")
    sim.add_argument("--orders", help="override simulate.orders, e.g. 3..6 or 3,5")
    sim.add_argument("--out", default="runs/latest", help="output directory")
    sim.set_defaults(func=cmd_simulate)

    ana = sub.add_parser("analyze", help="fit spectra, gate lines, build evidence")
    ana.add_argument("--config", help="config file (defaults used when omitted)")
    ana.add_argument("--orders", help="restrict to these orders")
    ana.add_argument("--out", default="runs/latest", help="directory with curve files")
    ana.add_argument("--format", choices=("csv", "json"), default="csv",
                     help="format of the per-line fit table")
    ana.set_defaults(func=cmd_analyze)

    rec = sub.add_parser("reconstruct", help="enumerate and rank source geometries")
    rec.add_argument("--config", help="config file (defaults used when omitted)")
    rec.add_argument("--out", default="runs/latest", help="directory with evidence.json")
    rec.set_defaults(func=cmd_reconstruct)

    ape = sub.add_parser("aperture", help="aperture fractions per correlation order")
    ape.add_argument("--orders", required=True, help="orders, e.g. 2..8")
    ape.add_argument("--out", help="optional output file")
    ape.add_argument("--format", choices=("csv", "json"), default="csv")
    ape.set_defaults(func=cmd_aperture)

    rep = sub.add_parser("report", help="summarize a finished run")
    rep.add_argument("--out", default="runs/latest", help="run directory")
    rep.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except EmptyEvidenceError as exc:
        print(f"empty evidence: {exc}", file=sys.stderr)
        return 3
    except FitError as exc:
        print(f"fit failure: {exc}", file=sys.stderr)
        return 4
    except SpeckleScopeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
