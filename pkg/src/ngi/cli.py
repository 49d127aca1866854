"""ngi: neutron Fourier-transform ghost imaging pipeline.

    ngi simulate    --config scene.json --out run/ [--method closed_form|quadrature|both] [--emit-truth]
    ngi mc          --config scene.json --out run/ --n 1000 --seed 1 [--threads 4]
    ngi reconstruct --maps run/ --config scene.json --out rec/ [--truth run/truth] [--oracle-phase]
    ngi solve       --images rec/images --out comp/
    ngi tomo        DIR [DIR ...] --out vol/ [--axis z] [--angles 0,1,...]
    ngi validate    --config scene.json
    ngi selftest

Exit codes: 0 ok, 1 config, 2 statistics, 3 missing input, 4 flag misuse, 5 geometry.
Errors are reported on stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__, io, store
from .correlator import correlation_closed_form, correlation_quadrature, speckle_mc_pair
from .errors import ConfigError, FlagError, GeometryError, MissingInputError, NGIError
from .reconstruct.magnitude import magnitude_from_correlation
from .reconstruct.phase import RetrievalParams
from .reconstruct.pipeline import nrmse, oracle_image, retrieved_image
from .reconstruct.tomo import FILTERS, check_coverage, tomo_components
from .reconstruct.unmix import solve_components
from .scene import load_config, build_scene, scene_to_config, validate_sampling
from .spinor import CHANNEL_NAMES, COMPONENT_NAMES, coefficient_matrix, parse_channel, project_y, spinor_images

METHODS = ("closed_form", "quadrature", "both")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad usage, which would collide with the statistics code
    def error(self, message):
        raise FlagError(message)


class Run:
    """Bookkeeping for one invocation: output directory, inputs and the manifest."""

    def __init__(self, args, command: str, argv):
        self.args = args
        self.command = command
        self.argv = list(argv)
        self.out = Path(args.out)
        self.inputs: dict = {}
        self.info: dict = {}
        self.started = _now()

    def add_input(self, path):
        path = Path(path)
        if path.is_file():
            self.inputs[str(path)] = io.sha256_file(path)

    def manifest(self, status="ok", error=None) -> dict:
        cfg_path = getattr(self.args, "config", None)
        man = {
            "tool": "ngi", "version": __version__, "command": self.command, "argv": self.argv,
            "status": status, "seed": getattr(self.args, "seed", None),
            "threads": getattr(self.args, "threads", None),
            "started": self.started, "finished": _now(),
            "config_path": cfg_path,
            "config_sha256": io.sha256_file(cfg_path) if cfg_path and Path(cfg_path).is_file() else None,
            "inputs": self.inputs,
            "outputs": io.digest_tree(self.out) if self.out.exists() else {},
            "info": self.info,
        }
        if error is not None:
            man["error"] = error
        return man

    def write_manifest(self, status="ok", error=None):
        io.write_json(self.out / "manifest.json", self.manifest(status, error))


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get("NGI_THREADS")
        try:
            n = int(env) if env else 1
        except ValueError:
            raise FlagError(f"NGI_THREADS must be an integer, got {env!r}") from None
    if n < 1:
        raise FlagError("--threads must be >= 1")
    return n


def _scene(run: Run):
    if not run.args.config:
        raise FlagError(f"{run.command} needs --config")
    config, base = load_config(run.args.config)
    run.add_input(run.args.config)
    scene = build_scene(config, base)
    for key in ("A", "M"):
        if key in config.get("sample", {}):
            run.add_input(base / config["sample"][key])
    run.info["resolved_config"] = scene_to_config(scene)
    return scene


def _sampling_gate(run: Run, scene, needs_source: bool):
    report = validate_sampling(scene)
    io.write_json(run.out / "sampling.json", report.as_dict())
    if needs_source and not report.passed:
        msg = "; ".join(c.message for c in report.failures())
        if not run.args.force:
            raise GeometryError(f"sampling validation failed: {msg} (use --force to proceed)")
        warnings.warn(f"sampling validation failed, continuing under --force: {msg}", stacklevel=2)
        run.info["forced"] = True
    return report


def _map_image(scene, img):
    """Projected (Nx, Nz) image reduced to the map dimensionality."""
    return img[:, 0] if scene.ndim == 1 else img


def _preview(out: Path, name: str, arr):
    a = np.asarray(arr)
    if np.iscomplexobj(a):
        a = np.abs(a)
    if a.ndim == 3:
        a = a[:, :, a.shape[2] // 2]
    io.write_pgm(out / "previews" / f"{name}.pgm", a)


# ---------------------------------------------------------------------------
# stages


def cmd_simulate(run: Run):
    args = run.args
    scene = _scene(run)
    methods = ("closed_form", "quadrature") if args.method == "both" else (args.method,)
    _sampling_gate(run, scene, needs_source="quadrature" in methods)
    g = scene.geometry
    beta = scene.constants.beta
    images = spinor_images(scene.sample, g.theta, beta)
    written = []
    for ch in CHANNEL_NAMES:
        label, spin = parse_channel(ch)
        for method in methods:
            if method == "closed_form":
                img = images[label]
                cmap = correlation_closed_form(scene, _map_image(scene, img.component(spin)), spin,
                                               position_label=label, pitch=img.pitch)
            else:
                cmap = correlation_quadrature(scene, scene.sample, spin, label)
            written += store.save_map(run.out, ch, cmap)
            _preview(run.out, store.map_stem(ch, method), cmap.values)
    C = coefficient_matrix(g.theta)
    io.write_array(run.out / "coefficient_matrix.ngi", C.entries)
    with io.atomic_open(run.out / "coefficient_matrix.txt", "w") as fh:
        fh.write(C.as_text())
    if args.emit_truth:
        _emit_truth(run.out / "truth", scene, images)
    run.info["maps"] = len(CHANNEL_NAMES) * len(methods)
    run.info["methods"] = list(methods)


def _emit_truth(out: Path, scene, images):
    smp = scene.sample
    g = scene.geometry
    S = {ch: _map_image(scene, images[parse_channel(ch)[0]].component(parse_channel(ch)[1]))
         for ch in CHANNEL_NAMES}
    meta = {"theta": g.theta, "beta": scene.constants.beta, "pitch": smp.pitch,
            "sample_dims": list(smp.dims), "rotation": scene.sample_ref.get("rotation")}
    store.save_images(out, S, meta)
    PM = project_y(smp.M, smp.pitch)
    comps = {"Mx": PM[..., 0], "My": PM[..., 1], "Mz": PM[..., 2], "A": project_y(smp.A, smp.pitch)}
    for name in COMPONENT_NAMES:
        io.write_array(out / f"true_{name}.ngi", _map_image(scene, comps[name]))


def cmd_mc(run: Run):
    args = run.args
    scene = _scene(run)
    _sampling_gate(run, scene, needs_source=True)
    threads = _threads(args)
    for ch in CHANNEL_NAMES:
        label, spin = parse_channel(ch)
        boson, fermion = speckle_mc_pair(scene, None, spin, label, args.n, seed=args.seed, threads=threads,
                                         open_beam=args.open_beam)
        store.save_map(run.out, ch, boson, tag="mc_boson")
        store.save_map(run.out, ch, fermion, tag="mc_fermion")
        _preview(run.out, store.map_stem(ch, "mc_fermion"), fermion.values)
    run.info.update({"n_realizations": args.n, "open_beam": bool(args.open_beam)})


def _load_truth(path):
    path = Path(path)
    d = path if path.is_dir() else path.parent
    images, meta = store.load_images(d)
    comps = {}
    for name in COMPONENT_NAMES:
        p = d / f"true_{name}.ngi"
        if p.exists():
            comps[name] = io.read_array(p)
    return images, comps, meta, d


def cmd_reconstruct(run: Run):
    args = run.args
    if args.oracle_phase:
        if not args.truth:
            raise FlagError("--oracle-phase requires --truth (ground-truth S-images)")
        if not Path(args.truth).exists():
            raise FlagError(f"--oracle-phase requires a ground-truth file; {args.truth} does not exist")
    if not args.maps:
        raise FlagError("reconstruct needs --maps")
    found, missing = store.find_maps(args.maps, args.source)
    if missing:
        err = MissingInputError(f"missing correlation map(s) in {args.maps}: {', '.join(missing)}")
        err.details = {"missing": missing}
        raise err
    truth_imgs, truth_comps = None, {}
    if args.truth:
        truth_imgs, truth_comps, _, tdir = _load_truth(args.truth)
        for name in CHANNEL_NAMES:
            run.add_input(tdir / f"{name}.ngi")
    scene = _scene(run) if args.config else None

    maps = {}
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        for ch, p in found.items():
            run.add_input(p)
            maps[ch] = store.load_map(p)
        mags = {ch: magnitude_from_correlation(m) for ch, m in maps.items()}
    run.info["warnings"] = [str(w.message) for w in caught]

    meta0 = maps[CHANNEL_NAMES[0]].meta
    theta, beta = float(meta0["theta"]), float(meta0["beta"])
    if scene is not None:
        pitch = scene.sample.pitch
        dims = scene.sample.dims
        shape = (dims[0],) if scene.ndim == 1 else (dims[0], dims[2])
    elif truth_imgs is not None:
        pitch = float(io.read_json(Path(tdir) / "images.json")["pitch"])
        shape = truth_imgs[CHANNEL_NAMES[0]].shape
    else:
        raise FlagError("reconstruct needs --config or --truth to know the sample lattice")

    params = RetrievalParams(n_iter=args.n_iter, restarts=args.restarts, beta_feedback=args.beta_feedback,
                             seed=args.seed)
    images, channel_info = {}, {}
    for ch in CHANNEL_NAMES:
        if args.oracle_phase:
            images[ch] = oracle_image(mags[ch], truth_imgs[ch], pitch)
            channel_info[ch] = {"phasing": "oracle"}
        else:
            t = None if truth_imgs is None else truth_imgs[ch]
            img, res, info = retrieved_image(mags[ch], shape, pitch, params, truth_image=t)
            images[ch] = img
            channel_info[ch] = info
            rows = [(i, float(v)) for i, v in enumerate(res.best_trace)]
            io.write_csv(run.out / "traces" / f"{ch}.csv", ["iteration", "residual"], rows)
    run.info["channels"] = channel_info

    rotation = scene.sample_ref.get("rotation") if scene is not None else None
    img_meta = {"theta": theta, "beta": beta, "pitch": pitch, "rotation": rotation,
                "phasing": "oracle" if args.oracle_phase else "retrieved"}
    store.save_images(run.out / "images", images, img_meta)
    comps = solve_components(images, theta, beta)
    store.save_components(run.out / "components", comps, {"pitch": pitch, "rotation": rotation})
    for name in COMPONENT_NAMES + ("residual",):
        _preview(run.out, name, getattr(comps, name))
    run.info["condition_number"] = comps.condition_number
    run.info["max_residual"] = float(np.max(comps.residual))
    if len(truth_comps) == len(COMPONENT_NAMES):
        est = np.stack([comps.component(n) for n in COMPONENT_NAMES])
        tru = np.stack([truth_comps[n] for n in COMPONENT_NAMES])
        run.info["component_nrmse"] = nrmse(est, tru)
        run.info["component_nrmse_each"] = {n: nrmse(comps.component(n), truth_comps[n]) for n in COMPONENT_NAMES
                                            if np.any(truth_comps[n])}
        io.write_json(run.out / "metrics.json", {"component_nrmse": run.info["component_nrmse"],
                                                 "component_nrmse_each": run.info["component_nrmse_each"]})


def cmd_solve(run: Run):
    args = run.args
    if not args.images:
        raise FlagError("solve needs --images DIR")
    images, meta = store.load_images(args.images)
    for ch in CHANNEL_NAMES:
        run.add_input(Path(args.images) / f"{ch}.ngi")
    scene = _scene(run) if args.config else None
    theta = meta.get("theta", scene.geometry.theta if scene else None)
    beta = meta.get("beta", scene.constants.beta if scene else None)
    if theta is None or beta is None:
        raise FlagError("theta/beta unknown: pass --config or provide images.json")
    rotation = meta.get("rotation")
    if args.angle is not None:
        rotation = {"axis": args.axis or "z", "angle": args.angle}
    comps = solve_components(images, float(theta), float(beta))
    store.save_components(run.out, comps, {"pitch": meta.get("pitch"), "rotation": rotation})
    for name in COMPONENT_NAMES + ("residual",):
        _preview(run.out, name, getattr(comps, name))
    run.info.update({"condition_number": comps.condition_number, "max_residual": float(np.max(comps.residual))})


def cmd_tomo(run: Run):
    args = run.args
    if not args.dirs:
        raise FlagError("tomo needs at least one projection directory")
    angles_override = None
    if args.angles:
        try:
            angles_override = [float(a) for a in args.angles.split(",")]
        except ValueError:
            raise FlagError(f"--angles must be a comma-separated list of degrees, got {args.angles!r}") from None
        if len(angles_override) != len(args.dirs):
            raise FlagError(f"--angles has {len(angles_override)} values for {len(args.dirs)} directories")
    per_angle, axes, pitch = [], set(), None
    for i, d in enumerate(args.dirs):
        d = Path(d)
        if not d.is_dir():
            raise MissingInputError(f"projection directory not found: {d}")
        if (d / "components.json").exists():
            maps, side = store.load_components(d)
            for name in COMPONENT_NAMES:
                run.add_input(d / f"{name}.ngi")
        else:
            images, side = store.load_images(d)
            theta, beta = side.get("theta"), side.get("beta")
            if theta is None or beta is None:
                raise MissingInputError(f"{d}: neither components.json nor images.json with theta/beta")
            maps = solve_components(images, float(theta), float(beta))
        rot = side.get("rotation") or {}
        if angles_override is not None:
            angle = angles_override[i]
        elif "angle" in rot:
            angle = float(rot["angle"])
        else:
            raise FlagError(f"{d}: no rotation angle recorded; pass --angles")
        axes.add(args.axis or rot.get("axis", "z"))
        pitch = side.get("pitch") or pitch
        per_angle.append((math.radians(angle), maps))
    if len(axes) != 1:
        raise GeometryError(f"projections mix rotation axes {sorted(axes)}")
    axis = axes.pop()
    check_coverage([a for a, _ in per_angle])
    vols = tomo_components(per_angle, axis=axis, filter=args.filter, pitch=float(pitch or 1.0))
    for name, vol in vols.items():
        io.write_array(run.out / f"{name}.ngi", vol.values)
        _preview(run.out, name, vol.values)
    io.write_json(run.out / "volume.json", {"axis": axis, "pitch": float(pitch or 1.0), "filter": args.filter,
                                            "angles_deg": sorted(math.degrees(a) for a, _ in per_angle)})
    run.info.update({"n_angles": len(per_angle), "axis": axis})


def cmd_validate(run: Run):
    scene = _scene(run)
    report = validate_sampling(scene)
    io.write_json(run.out / "sampling.json", report.as_dict())
    print(io.dumps(report.as_dict()), end="")
    run.info["passed"] = report.passed
    if not report.passed:
        raise GeometryError("sampling validation failed: " + "; ".join(c.message for c in report.failures()))


def cmd_selftest(run: Run):
    from .selftest import run_all

    results = run_all()
    width = max(len(r["name"]) for r in results)
    for r in results:
        print(f"{r['name']:<{width}}  {'PASS' if r['passed'] else 'FAIL'}  {r['detail']}")
    io.write_json(run.out / "selftest.json", {"results": results})
    failed = [r["name"] for r in results if not r["passed"]]
    run.info["failed"] = failed
    if failed:
        raise SelftestFailure(f"selftest failed: {', '.join(failed)}")
    print(f"all {len(results)} checks passed")


class SelftestFailure(NGIError):
    exit_code = 1
    kind = "selftest"


COMMANDS = {
    "simulate": cmd_simulate, "mc": cmd_mc, "reconstruct": cmd_reconstruct, "solve": cmd_solve,
    "tomo": cmd_tomo, "validate": cmd_validate, "selftest": cmd_selftest,
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="scene configuration (JSON)")
    common.add_argument("--out", default="ngi_out", help="output directory (default: ngi_out)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=None, help="worker threads (fallback: $NGI_THREADS, else 1)")
    common.add_argument("--force", action="store_true", help="proceed despite sampling-validation failures")

    p = _Parser(prog="ngi", description="Neutron Fourier-transform ghost imaging pipeline.")
    p.add_argument("--version", action="version", version=f"ngi {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", parents=[common], help="correlation maps for the five channels")
    s.add_argument("--method", choices=METHODS, default="closed_form")
    s.add_argument("--emit-truth", action="store_true", help="also write true S-images and projected components")

    s = sub.add_parser("mc", parents=[common], help="Monte-Carlo speckle correlation maps")
    s.add_argument("--n", type=int, default=1000, help="number of source realizations")
    s.add_argument("--open-beam", action="store_true", help="free-space target arm (HBT calibration)")

    s = sub.add_parser("reconstruct", parents=[common], help="maps -> magnitudes -> phases -> components")
    s.add_argument("--maps", help="directory holding the five channel maps")
    s.add_argument("--source", choices=("auto",) + store.MAP_SOURCES, default="auto")
    s.add_argument("--truth", help="ground-truth directory written by simulate --emit-truth")
    s.add_argument("--oracle-phase", action="store_true", help="use the phase of the ground truth")
    s.add_argument("--n-iter", type=int, default=2000)
    s.add_argument("--restarts", type=int, default=8)
    s.add_argument("--beta-feedback", type=float, default=0.9)

    s = sub.add_parser("solve", parents=[common], help="five S-images -> (Mx, My, Mz, A)")
    s.add_argument("--images", help="directory with S1_up.ngi ... S3_down.ngi")
    s.add_argument("--angle", type=float, default=None, help="sample rotation of this projection (degrees)")
    s.add_argument("--axis", choices=("x", "z"), default=None)

    s = sub.add_parser("tomo", parents=[common], help="FBP of component maps over sample rotations")
    s.add_argument("dirs", nargs="*", help="component (or S-image) directories, one per angle")
    s.add_argument("--axis", choices=("x", "z"), default=None)
    s.add_argument("--angles", help="comma-separated rotation angles in degrees, one per directory")
    s.add_argument("--filter", choices=FILTERS, default="ram-lak")

    sub.add_parser("validate", parents=[common], help="sampling report for a scene")
    sub.add_parser("selftest", parents=[common], help="embedded invariant suite")
    return p


def _error_payload(exc: Exception) -> dict:
    if isinstance(exc, NGIError):
        code, kind = exc.exit_code, exc.kind
    else:
        code, kind = 1, "config"
    payload = {"error": kind, "exit_code": code, "message": str(exc)}
    payload.update(getattr(exc, "details", {}) or {})
    return payload


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
    except FlagError as exc:
        print(json.dumps(_error_payload(exc)), file=sys.stderr)
        return exc.exit_code
    run = Run(args, args.command, argv)
    try:
        if args.threads is not None and args.threads < 1:
            raise FlagError("--threads must be >= 1")
        COMMANDS[args.command](run)
    except (NGIError, ValueError, KeyError, OSError) as exc:
        if isinstance(exc, OSError) and not isinstance(exc, NGIError):
            exc = MissingInputError(str(exc))
        elif isinstance(exc, (ValueError, KeyError)) and not isinstance(exc, NGIError):
            exc = ConfigError(str(exc))
        payload = _error_payload(exc)
        print(json.dumps(payload), file=sys.stderr)
        try:
            run.write_manifest(status="error", error=payload)
        except OSError:
            pass
        return payload["exit_code"]
    run.write_manifest()
    return 0


if __name__ == "__main__":
    sys.exit(main())
