"""Command-line entry point: ``illumkit <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import completion, hdr, ibr, io, metrics, shading, warp
from . import panorama as pano
from .geometry import geometry_from_depth
from .panorama import PanoramaImage

log = logging.getLogger("illumkit")

GRADCHECK_TOL = 1e-4


class CliError(Exception):
    pass


def _pair(text, typ=int, sep=","):
    try:
        a, b = (typ(x) for x in text.replace("x", sep).split(sep))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected two values separated by '{sep}', got {text!r}") from None
    return a, b


def _dims(text):
    h, w = _pair(text, int, "x")
    return h, w


def _add_dims(p, default=(pano.DEFAULT_HEIGHT, pano.DEFAULT_WIDTH)):
    p.add_argument("--dims", type=_dims, default=default, metavar="HxW",
                   help=f"panorama size (default {default[0]}x{default[1]})")


def _locale_for(args, manifest):
    if args.locale_from:
        meta = io.read_sidecar(args.locale_from)
        if not meta.get("locale"):
            raise CliError(f"{args.locale_from} has no locale in its sidecar")
        return pano.Locale.from_dict(meta["locale"])
    if args.locale is None:
        raise CliError("give --locale INDEX or --locale-from FILE")
    if args.locales:
        locales = io.read_locales(args.locales)
    else:
        locales = [s.locale for s in ibr.sample_locales(manifest.load_points())]
    if not 0 <= args.locale < len(locales):
        raise CliError(f"locale index {args.locale} out of range (have {len(locales)})")
    return locales[args.locale]


# -- subcommands -------------------------------------------------------------------

def cmd_gen_locales(args):
    m = io.read_manifest(args.manifest)
    sampled = ibr.sample_locales(m.load_points())
    io.write_locales(args.output, m.scene_id, sampled)
    return {"scene_id": m.scene_id, "locales": len(sampled), "output": str(args.output)}


def cmd_gen_illum(args):
    m = io.read_manifest(args.manifest)
    loc = _locale_for(args, m)
    views = m.load_views()
    h, w = args.dims
    H, D = ibr.generate_illumination(views, loc, h, w)
    io.write_panorama(args.output, H)
    if args.distance_out:
        io.write_panorama(args.distance_out, D)
    covered = H.observed()
    return {"output": str(args.output), "covered_fraction": float(covered.mean()),
            "views_used": len(ibr.visible_views(views, loc)), "locale": loc.to_dict()}


def cmd_warp(args):
    m = io.read_manifest(args.manifest)
    if not 0 <= args.image < len(m.images):
        raise CliError(f"image index {args.image} out of range (have {len(m.images)})")
    view = m.load_view(args.image)
    geom = geometry_from_depth(view.depth, view.camera)
    loc = warp.locale_from_pixel(geom, view.camera, args.pixel)
    if args.source == "ldr":
        img = view.ldr if view.ldr is not None else hdr.h_to_j(view.hdr)
    else:
        img = view.hdr
    h, w = args.dims
    out = warp.forward_warp(warp.WarpRequest(img, geom, view.camera, loc, args.source), h, w)
    io.write_panorama(args.output, out.color)
    if args.distance_out:
        io.write_panorama(args.distance_out, out.distance)
    return {"output": str(args.output), "observed_fraction": float(out.observed.mean()), "locale": loc.to_dict()}


def _load_library(directory) -> completion.PanoLibrary:
    d = Path(directory)
    index = d / "index.json"
    if index.exists():
        entries = [(e["id"], d / e["path"]) for e in io.read_json(index)["entries"]]
    else:
        files = sorted(p for p in d.iterdir() if p.suffix.lower() in (".pfm", ".png"))
        entries = [(p.stem, p) for p in files]
    lib = completion.PanoLibrary()
    for entry_id, p in entries:
        img = io.read_image(p)
        lib.add(entry_id, img)
    return lib


def cmd_complete(args):
    partial = io.read_panorama(args.partial)
    info = {}
    if args.method == "nn":
        if not args.library:
            raise CliError("--method nn needs --library DIR")
        match = completion.complete_nn(partial.data, _load_library(args.library), partial.observed())
        out = match.completed
        info = {"matched_id": match.entry_id, "shift": match.shift, "score": match.score}
    else:
        out = completion.complete_mirror(partial.data, partial.observed())
    kind = partial.kind if partial.kind in ("ldr", "hdr") else "ldr"
    io.write_panorama(args.output, PanoramaImage(out, kind, partial.locale), info or None)
    return {"output": str(args.output), "method": args.method, **info}


def cmd_ldr2hdr(args):
    src = io.read_panorama(args.input)
    H, clamped = hdr.j_to_h(src.data, return_clamped=True)
    io.write_panorama(args.output, PanoramaImage(H, "hdr", src.locale))
    return {"output": str(args.output), "clamped": int(np.count_nonzero(clamped))}


def cmd_hdr2ldr(args):
    src = io.read_panorama(args.input)
    J, sat = hdr.h_to_j(np.maximum(src.data, 0.0), return_saturated=True)
    io.write_panorama(args.output, PanoramaImage(J, "ldr", src.locale))
    return {"output": str(args.output), "saturated": int(np.count_nonzero(sat))}


def cmd_diffuse(args):
    src = io.read_panorama(args.input)
    D = shading.diffuse_convolve(src.data, args.work_dims)
    io.write_panorama(args.output, PanoramaImage(D, "hdr", src.locale))
    return {"output": str(args.output), "work_dims": list(args.work_dims)}


def cmd_relight(args):
    src = io.read_panorama(args.input)
    exposure = "auto" if args.exposure == "auto" else float(args.exposure)
    rgba = shading.relight_sphere(np.maximum(src.data, 0.0), args.material, args.size,
                                  gamma=args.gamma, exposure=exposure)
    io.write_rgba_png(args.output, rgba)
    return {"output": str(args.output), "material": args.material}


def cmd_eval(args):
    pred = io.read_panorama(args.pred)
    gt = io.read_panorama(args.gt)
    if pred.data.shape != gt.data.shape:
        raise CliError(f"dimension mismatch: {args.pred} is {pred.data.shape}, {args.gt} is {gt.data.shape}")
    report = metrics.eval_illum(pred.data, gt.data, align=args.align)
    out = report.to_dict()
    if args.output:
        io.write_json(args.output, out)
        fig = args.figure or (None if args.no_figure else Path(args.output).with_suffix(".png"))
    else:
        fig = args.figure
    if fig:
        from .figures import eval_figure

        eval_figure(pred.data, gt.data, report, fig)
        out["figure"] = str(fig)
    return out


def cmd_gradcheck(args):
    res = metrics.gradcheck_suite(seed=args.seed, h=args.step)
    failed = [k for k, v in res.items() if not v < GRADCHECK_TOL]
    out = {"max_relative_error": res, "tolerance": GRADCHECK_TOL, "passed": not failed}
    if failed:
        out["failed"] = failed
    return out


def cmd_make_room(args):
    from .synthetic import BoxRoom, write_room_fixture

    lights = [(1.5, 2.5, 1.5, 2.5, np.array([5.0, 5.0, 4.0]))] if args.light else []
    shelf = (2.6, 3.4, 0.6, 1.4, 0.6) if args.shelf else None
    path = write_room_fixture(args.output, BoxRoom(lights=lights), args.cameras, shelf=shelf)
    return {"manifest": str(path)}


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="illumkit", description="Locale illumination maps from RGB-D observations.")
    ap.add_argument("--json", action="store_true", help="print a machine-readable JSON summary on stdout")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-locales", help="sample locales from the scene's labeled points")
    p.add_argument("manifest")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gen_locales)

    p = sub.add_parser("gen-illum", help="ground-truth illumination map by two-step IBR")
    p.add_argument("manifest")
    p.add_argument("--locale", type=int, help="index into --locales (or into freshly sampled locales)")
    p.add_argument("--locales", help="locales JSON written by gen-locales")
    p.add_argument("--locale-from", help="take the locale from a panorama's sidecar (e.g. a warp output)")
    p.add_argument("--distance-out", help="also write the distance map")
    p.add_argument("-o", "--output", required=True)
    _add_dims(p)
    p.set_defaults(func=cmd_gen_illum)

    p = sub.add_parser("warp", help="warp one observation to the locale above a selected pixel")
    p.add_argument("manifest")
    p.add_argument("--image", type=int, default=0)
    p.add_argument("--pixel", type=_pair, required=True, metavar="X,Y")
    p.add_argument("--source", choices=("ldr", "hdr"), default="ldr")
    p.add_argument("--distance-out")
    p.add_argument("-o", "--output", required=True)
    _add_dims(p)
    p.set_defaults(func=cmd_warp)

    p = sub.add_parser("complete", help="fill unobserved panorama pixels")
    p.add_argument("partial")
    p.add_argument("--method", choices=("nn", "mirror"), default="mirror")
    p.add_argument("--library", help="directory of complete LDR panoramas (+ optional index.json)")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_complete)

    for name, func, helptext in (("ldr2hdr", cmd_ldr2hdr, "normalized LDR -> radiance"),
                                 ("hdr2ldr", cmd_hdr2ldr, "radiance -> normalized LDR")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("input")
        p.add_argument("-o", "--output", required=True)
        p.set_defaults(func=func)

    p = sub.add_parser("diffuse", help="diffuse convolution of a radiance map")
    p.add_argument("input")
    p.add_argument("--work-dims", type=_dims, default=shading.DEFAULT_WORK_DIMS, metavar="HxW")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_diffuse)

    p = sub.add_parser("relight", help="render a mirror or diffuse sphere to PNG")
    p.add_argument("input")
    p.add_argument("--material", choices=("mirror", "diffuse"), default="mirror")
    p.add_argument("--size", type=int, default=256)
    p.add_argument("--gamma", type=float, default=3.3)
    p.add_argument("--exposure", default="1.0", help="number or 'auto'")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_relight)

    p = sub.add_parser("eval", help="compare a predicted map with ground truth")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--align", action="store_true", help="search the best azimuthal rotation first")
    p.add_argument("-o", "--output", help="report JSON")
    p.add_argument("--figure", help="figure path (default: report path with .png)")
    p.add_argument("--no-figure", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference checks of all differentiable operators")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("make-room", help="write the synthetic box-room fixture")
    p.add_argument("output")
    p.add_argument("--cameras", type=int, default=4)
    p.add_argument("--light", action="store_true", help="add a bright ceiling panel")
    p.add_argument("--shelf", action="store_true", help="add a furniture slab to the labeled points")
    p.set_defaults(func=cmd_make_room)
    return ap


def _limit_threads():
    n = os.environ.get("ILLUMKIT_THREADS")
    if not n:
        return None
    from threadpoolctl import threadpool_limits

    return threadpool_limits(int(n))


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    _limit_threads()
    try:
        result = args.func(args)
    except (CliError, ValueError, OSError, IndexError, KeyError) as e:
        if args.json:
            print(json.dumps({"ok": False, "error": str(e)}))
        print(f"illumkit {args.command}: error: {e}", file=sys.stderr)
        return 1
    failed = isinstance(result, dict) and result.get("passed") is False
    if args.json:
        print(json.dumps({"ok": not failed, **result}))
    else:
        for k, v in result.items():
            print(f"{k}: {v}")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
