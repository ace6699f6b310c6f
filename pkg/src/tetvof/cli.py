"""Command line entry point: ``tetvof {bake,sim,surface,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import report as rep
from . import sim as simmod
from . import spray, surfacing
from .bake import read_bake, verify_bake, write_bake
from .grid import read_grid
from .scene import SceneError, load_scene
from .vof import read_state

log = logging.getLogger("tetvof")


class CliError(RuntimeError):
    pass


def _frames(text: str) -> tuple[int, int]:
    m = re.fullmatch(r"\s*(\d+)\s*\.\.\s*(\d+)\s*", text)
    if not m or int(m.group(1)) > int(m.group(2)):
        raise argparse.ArgumentTypeError(f"expected A..B with A <= B, got {text!r}")
    return int(m.group(1)), int(m.group(2))


# --------------------------------------------------------------------------
# verbs
# --------------------------------------------------------------------------

def cmd_bake(args) -> int:
    if args.target and args.target[0] == "verify":
        if len(args.target) != 2:
            raise CliError("usage: bake verify <file>")
        bake = read_bake(args.target[1])
        errs = verify_bake(bake)
        for e in errs:
            print(e)
        print(f"{args.target[1]}: {bake.n_frames} frames, {bake.mesh.n_tets} tets, "
              f"{'OK' if not errs else f'{len(errs)} problems'}")
        return 1 if errs else 0
    if args.target:
        raise CliError(f"unexpected arguments {args.target}")
    if not args.scene or not args.out:
        raise CliError("bake needs --scene and --out")
    cfg = load_scene(args.scene)
    first, last = args.frames if args.frames else (0, cfg.time.steps)
    t = time.perf_counter()
    bake = simmod.bake_scene(cfg, first, last)
    write_bake(args.out, bake)
    print(f"baked frames {first}..{last} ({bake.mesh.n_tets} tets) to {args.out} "
          f"in {time.perf_counter() - t:.1f} s")
    return 0


def cmd_sim(args) -> int:
    cfg = load_scene(args.scene)
    steps = cfg.time.steps if args.steps is None else args.steps
    if steps != cfg.time.steps:
        cfg = cfg.model_copy(update={"time": cfg.time.model_copy(update={"steps": steps})})
    bake = None
    grid_only = args.compare_levelset_only
    if not grid_only and cfg.mesh is not None:
        if args.bake:
            bake = read_bake(args.bake)
            if bake.first_frame != 0 or bake.n_frames < steps + 1:
                raise CliError(f"{args.bake} must cover frames 0..{steps}")
        else:
            log.info("baking %d frames", steps + 1)
            bake = simmod.bake_scene(cfg, 0, steps)
    sim = simmod.build_simulation(cfg, bake, grid_only=grid_only, seed=args.seed)
    out = Path(args.out)
    t = time.perf_counter()

    def progress(s, row):
        if s.step_index % 20 == 0 or s.step_index == steps:
            log.info("step %d/%d  err %.2e  spray %d", s.step_index, steps, row["cons_err_rel"],
                     len(s.particles))

    rows = simmod.run(sim, steps, out, progress)
    errs = np.array([r["cons_err_rel"] for r in rows]) if rows else np.zeros(1)
    summary = {
        "scene": cfg.name,
        "mode": "levelset_only" if grid_only else "coupled",
        "steps": steps,
        "seed": cfg.seed if args.seed is None else args.seed,
        "mean_cons_err_rel": float(errs.mean()),
        "max_cons_err_rel": float(errs.max()),
        "grid_volume_initial": sim.initial_grid_volume,
        "grid_volume_injected": sim.injected,
        "grid_volume_final": sim.grid.water_volume(),
        "grid_volume_loss": simmod.grid_volume_loss(sim),
        "seconds": time.perf_counter() - t,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    for k, v in summary.items():
        print(f"{k:22s} {v}")
    return 0


def cmd_surface(args) -> int:
    cfg = load_scene(args.scene)
    run = Path(args.run)
    frames_dir = run / "frames"
    found = sorted(int(p.stem.split("_")[1]) for p in frames_dir.glob("grid_*.bin"))
    if args.frames:
        lo, hi = args.frames
        found = [f for f in found if lo <= f <= hi]
    if not found:
        raise CliError(f"no frame dumps in {frames_dir}")
    bake = None
    has_vof = surfacing.frame_paths(run, found[0])["vof"].exists()
    if has_vof:
        bake = read_bake(args.bake) if args.bake else simmod.bake_scene(cfg, 0, max(found))
    out = Path(args.out) if args.out else run / "surfaces"
    out.mkdir(parents=True, exist_ok=True)
    for f in found:
        paths = surfacing.frame_paths(run, f)
        grid, _ = read_grid(paths["grid"])
        particles, _ = spray.read_particles(paths["spray"])
        kw = {}
        if has_vof:
            if not paths["vof"].exists():
                raise CliError(f"missing {paths['vof']}")
            state, _ = read_state(paths["vof"])
            fb = bake.frame(f)
            kw = dict(state=state, mesh=bake.mesh, node_pos=fb.node_positions,
                      capacity=fb.capacity, n_samples=cfg.vof.n_samples)
        verts, faces = surfacing.surface_frame(grid, particles, upsample=args.upsample, **kw)
        path = out / f"surface_{f:05d}.obj"
        surfacing.write_obj(path, verts, faces)
        log.info("frame %d: %d triangles -> %s", f, len(faces), path)
    print(f"wrote {len(found)} OBJ files to {out}")
    return 0


def cmd_report(args) -> int:
    bound = args.max_error
    if bound is None:
        bound = load_scene(args.scene).output.max_error if args.scene else 2e-4
    summary = rep.summarize(rep.read_diagnostics(args.csv))
    for line in summary.lines():
        print(line)
    out = Path(args.out) if args.out else Path(args.csv).with_name("report.csv")
    rep.write_summary(out, summary)
    ok = summary.max_error <= bound
    print(f"bound {bound * 100:.4f} %: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tetvof", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)

    b = sub.add_parser("bake", help="precompute per-frame mesh data, or `bake verify FILE`")
    b.add_argument("target", nargs="*", help="`verify FILE` to check an existing bake")
    b.add_argument("--scene", help="scene YAML or built-in preset name")
    b.add_argument("--frames", type=_frames, help="frame range A..B (default 0..steps)")
    b.add_argument("--out", help="bake file to write")
    b.set_defaults(func=cmd_bake)

    s = sub.add_parser("sim", help="run the coupled simulation")
    s.add_argument("--scene", required=True)
    s.add_argument("--bake", help="bake file (baked on the fly when omitted)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--steps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--compare-levelset-only", action="store_true",
                   help="run the grid-only baseline instead of the coupled solver")
    s.set_defaults(func=cmd_sim)

    f = sub.add_parser("surface", help="export OBJ surfaces from frame dumps")
    f.add_argument("--scene", required=True)
    f.add_argument("--run", required=True, help="directory written by `sim`")
    f.add_argument("--bake")
    f.add_argument("--frames", type=_frames)
    f.add_argument("--out")
    f.add_argument("--upsample", type=int, default=2)
    f.set_defaults(func=cmd_surface)

    r = sub.add_parser("report", help="summarize a diagnostics CSV")
    r.add_argument("csv")
    r.add_argument("--scene", help="take the error bound from this scene")
    r.add_argument("--max-error", type=float, help="relative bound (default 2e-4)")
    r.add_argument("--out")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CliError, SceneError, rep.ReportError, simmod.PhaseError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
