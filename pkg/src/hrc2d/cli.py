"""``hrc2d`` command line: genscene, render, compare, bench, verify.

Exit codes: 0 success, 1 usage error, 2 IO or file-format error,
3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from pathlib import Path

from . import __version__
from .generators import GENERATORS, gen_scene
from .hrc import HrcConfig, gather_fluence, hrc_spp, solve_multibounce
from .metrics import BenchRow, PfmError, bench_record, read_pfm, rmse, tonemap_png, write_pfm
from .presets import PRESETS, get_preset
from .reference import NeeInapplicable, PtConfig, render_reference
from .scene import SceneFormatError, load_scene_png, save_scene_png
from .verify import run_suite

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _region(text: str) -> tuple[int, int, int, int]:
    try:
        parts = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad region {text!r}") from None
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("region is x0,y0,width,height")
    return parts  # type: ignore[return-value]


def _sizes(text: str) -> list[int]:
    try:
        sizes = [int(v) for v in text.split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size list {text!r}") from None
    if not sizes or any(s < 16 for s in sizes):
        raise argparse.ArgumentTypeError("sizes must be integers >= 16")
    return sizes


def _param(text: str) -> tuple[str, object]:
    key, sep, val = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, json.loads(val)
    except json.JSONDecodeError:
        return key, val


def _write_json(path: Path, obj) -> None:
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(json.dumps(obj, indent=2) + "\n")
    os.replace(tmp, path)


# --------------------------------------------------------------------------
# commands


def cmd_genscene(args) -> int:
    scene = gen_scene(args.name, args.size, dict(args.param or []))
    out = Path(args.out or f"{args.name}-{args.size}.png")
    save_scene_png(scene, out)
    print(f"wrote {out} ({scene.width}x{scene.height}, {len(scene.lights)} light boxes)")
    return EXIT_OK


def _render_setup(args):
    if args.preset:
        p = get_preset(args.preset)
        scene = gen_scene(p.scene, p.size, p.params)
        algo = args.algo or p.algo
        bounces = args.bounces or p.bounces
        blur = p.blur and not args.no_blur
        spp = args.spp or p.equal_spp()
    else:
        if not args.scene:
            raise UsageError("render needs --scene or --preset")
        scene = load_scene_png(args.scene)
        algo = args.algo or "hrc"
        bounces = args.bounces or 1
        blur = not args.no_blur
        spp = args.spp or max(1, round(hrc_spp(scene.width)))
    return scene, algo, bounces, blur, spp


def cmd_render(args) -> int:
    scene, algo, bounces, blur, spp = _render_setup(args)
    if algo == "hrc":
        cfg = HrcConfig(blur_enabled=blur, oracle_trace=args.oracle_trace, bounces=bounces)
        field = solve_multibounce(scene, cfg) if bounces > 1 else gather_fluence(scene, cfg)
    else:
        mode = "naive" if algo == "pt" else "nee"
        field = render_reference(scene, PtConfig(spp=spp, mode=mode, seed=args.seed, max_bounces=bounces))
    out = Path(args.out)
    write_pfm(field, out)
    msg = f"wrote {out}"
    if args.preview:
        tonemap_png(field, args.preview, args.exposure)
        msg += f", preview {args.preview}"
    if args.stats:
        _write_json(Path(args.stats), field.stats.to_dict())
        msg += f", stats {args.stats}"
    print(msg)
    return EXIT_OK


def cmd_compare(args) -> int:
    a, b = read_pfm(args.a), read_pfm(args.b)
    if a.shape != b.shape:
        print(f"size mismatch: {a.width}x{a.height} vs {b.width}x{b.height}", file=sys.stderr)
        return EXIT_IO
    region = args.region
    if args.crop_preset:
        region = get_preset(args.crop_preset).crop
    rep = rmse(a, b, region)
    print(json.dumps(rep.as_dict()))
    if args.csv:
        path = Path(args.csv)
        tmp = path.with_name(f".{path.name}.tmp")
        d = rep.as_dict()
        with open(tmp, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["a", "b", "rmse", "max_abs_error", "rmse_normalized", "region"])
            wr.writerow([args.a, args.b, d["rmse"], d["max_abs_error"], d["rmse_normalized"],
                         " ".join(map(str, region)) if region else ""])
        os.replace(tmp, path)
    return EXIT_OK


def cmd_bench(args) -> int:
    scenes = [s for s in args.scene_set.split(",") if s]
    unknown = [s for s in scenes if s not in GENERATORS]
    if unknown or not scenes:
        raise UsageError(f"unknown scenes {unknown}")
    rows = []
    gather_fluence(gen_scene("empty", 16))  # keep kernel loading out of the timings
    for size in args.sizes:
        for name in scenes:
            scene = gen_scene(name, size)
            best = None
            for _ in range(args.repeats):
                t0 = time.perf_counter()
                f = gather_fluence(scene, HrcConfig())
                wall = (time.perf_counter() - t0) * 1000.0
                if best is None or wall < best[0]:
                    best = (wall, f.stats)
            wall, st = best
            rows.append(BenchRow(size, st.stage_times_ms["merge_up"], st.stage_times_ms["merge_down"],
                                 st.total_ms, st.dda_traces, name, st.interval_merges))
            print(f"{name:>12} {size:5d}  total {st.total_ms:9.1f} ms  traces {st.dda_traces}")
    if args.csv:
        bench_record(rows, args.csv)
    return EXIT_OK


def cmd_verify(args) -> int:
    checks = run_suite(args.suite, args.scenes)
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return EXIT_OK if failed == 0 else EXIT_VERIFY


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hrc2d", description="2D global illumination with holographic radiance cascades.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("genscene", help="write a generated scene as PNG + JSON sidecar")
    g.add_argument("name", choices=sorted(GENERATORS))
    g.add_argument("--size", type=int, default=512)
    g.add_argument("--out")
    g.add_argument("--param", type=_param, action="append", metavar="KEY=VALUE")
    g.set_defaults(func=cmd_genscene)

    r = sub.add_parser("render", help="solve a scene and write a PFM")
    src = r.add_mutually_exclusive_group()
    src.add_argument("--scene", help="scene PNG")
    src.add_argument("--preset", choices=sorted(PRESETS))
    r.add_argument("--algo", choices=("hrc", "pt", "pt-nee"))
    r.add_argument("--spp", type=int, help="path tracer samples (default: HRC-equivalent)")
    r.add_argument("--bounces", type=int)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True)
    r.add_argument("--preview", help="tonemapped PNG")
    r.add_argument("--exposure", type=float, default=1.0)
    r.add_argument("--stats", help="stats JSON")
    r.add_argument("--oracle-trace", action="store_true")
    r.add_argument("--no-blur", action="store_true")
    r.set_defaults(func=cmd_render)

    c = sub.add_parser("compare", help="RMSE between two PFMs (second is the reference)")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--region", type=_region, help="x0,y0,width,height")
    c.add_argument("--crop-preset", choices=sorted(k for k, v in PRESETS.items() if v.crop))
    c.add_argument("--csv")
    c.set_defaults(func=cmd_compare)

    b = sub.add_parser("bench", help="time HRC across sizes and scenes")
    b.add_argument("--sizes", type=_sizes, default=[256, 512])
    b.add_argument("--scene-set", default="empty,julia")
    b.add_argument("--repeats", type=int, default=1)
    b.add_argument("--csv")
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("verify", help="run invariant suites")
    v.add_argument("--suite", choices=("algebra", "cascade", "oracle", "all"), default="all")
    v.add_argument("--scenes", type=int, default=20, help="random scenes for the oracle suite")
    v.set_defaults(func=cmd_verify)
    return p


def _validate(args) -> None:
    for name in ("size", "spp", "bounces", "repeats", "scenes"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            raise UsageError(f"--{name} must be positive")
    if getattr(args, "exposure", 1.0) <= 0:
        raise UsageError("--exposure must be positive")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        _validate(args)
        return args.func(args)
    except UsageError as e:
        print(f"hrc2d: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, SceneFormatError, PfmError) as e:
        print(f"hrc2d: {e}", file=sys.stderr)
        return EXIT_IO
    except NeeInapplicable as e:
        print(f"hrc2d: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        print(f"hrc2d: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
