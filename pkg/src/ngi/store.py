"""Persistence of correlation maps, S-images and component maps as NGI1 + JSON sidecars."""
from __future__ import annotations

from pathlib import Path

from . import io
from .correlator import CorrelationMap, DeltaGrid
from .errors import MissingInputError
from .reconstruct.unmix import ComponentMaps
from .spinor import CHANNEL_NAMES, COMPONENT_NAMES

MAP_SOURCES = ("closed_form", "quadrature", "mc_fermion")


def map_stem(channel: str, provenance: str) -> str:
    return f"{channel}.{provenance}"


def save_map(out_dir, channel: str, cmap: CorrelationMap, tag: str | None = None) -> list[Path]:
    """Write ``<channel>.<tag>.ngi`` (+ stderr / normalized arrays) and its sidecar."""
    out_dir = Path(out_dir)
    stem = map_stem(channel, tag or cmap.provenance)
    written = [io.write_array(out_dir / f"{stem}.ngi", cmap.values)]
    extras = {}
    for key in ("stderr", "normalized", "normalized_stderr"):
        arr = getattr(cmap, key)
        if arr is not None:
            fname = f"{stem}.{key}.ngi"
            written.append(io.write_array(out_dir / fname, arr))
            extras[key] = fname
    dg = cmap.delta_grid
    side = {
        "channel": channel, "spin": cmap.spin, "position_label": cmap.position_label,
        "statistics": cmap.statistics, "provenance": cmap.provenance,
        "delta_grid": {"origin": list(dg.origin), "pitch": list(dg.pitch), "n": list(dg.n)},
        "meta": cmap.meta, "arrays": extras,
    }
    written.append(io.write_json(out_dir / f"{stem}.json", side))
    return written


def load_map(path) -> CorrelationMap:
    path = Path(path)
    side_path = path.with_suffix(".json")
    side = io.read_json(side_path)
    values = io.read_array(path)
    extra = {k: io.read_array(path.parent / f) for k, f in side.get("arrays", {}).items()}
    dg = side["delta_grid"]
    return CorrelationMap(values=values, delta_grid=DeltaGrid(tuple(dg["origin"]), tuple(dg["pitch"]), tuple(dg["n"])),
                          spin=side["spin"], position_label=side["position_label"],
                          statistics=side["statistics"], provenance=side["provenance"],
                          meta=side["meta"], **extra)


def find_maps(maps_dir, source: str = "auto") -> tuple[dict, list]:
    """Locate the five channel maps. Returns ({channel: path}, missing channels)."""
    maps_dir = Path(maps_dir)
    order = MAP_SOURCES if source == "auto" else (source,)
    found, missing = {}, []
    for ch in CHANNEL_NAMES:
        for tag in order:
            p = maps_dir / f"{map_stem(ch, tag)}.ngi"
            if p.exists():
                found[ch] = p
                break
        else:
            missing.append(ch)
    return found, missing


def save_images(out_dir, images: dict, meta: dict) -> list[Path]:
    """Five complex S-images as ``<channel>.ngi`` plus ``images.json``."""
    out_dir = Path(out_dir)
    written = [io.write_array(out_dir / f"{ch}.ngi", images[ch]) for ch in CHANNEL_NAMES]
    written.append(io.write_json(out_dir / "images.json", meta))
    return written


def load_images(in_dir) -> tuple[dict, dict]:
    in_dir = Path(in_dir)
    missing = [ch for ch in CHANNEL_NAMES if not (in_dir / f"{ch}.ngi").exists()]
    if missing:
        raise MissingInputError(f"missing S-image channel(s): {missing}")
    meta_path = in_dir / "images.json"
    meta = io.read_json(meta_path) if meta_path.exists() else {}
    return {ch: io.read_array(in_dir / f"{ch}.ngi") for ch in CHANNEL_NAMES}, meta


def save_components(out_dir, maps: ComponentMaps, meta: dict) -> list[Path]:
    out_dir = Path(out_dir)
    written = [io.write_array(out_dir / f"{c}.ngi", maps.component(c)) for c in COMPONENT_NAMES]
    written.append(io.write_array(out_dir / "residual.ngi", maps.residual))
    side = dict(meta)
    side.update({"theta": maps.theta, "condition_number": maps.condition_number})
    written.append(io.write_json(out_dir / "components.json", side))
    return written


def load_components(in_dir) -> tuple[ComponentMaps, dict]:
    in_dir = Path(in_dir)
    side = io.read_json(in_dir / "components.json")
    arrs = {c: io.read_array(in_dir / f"{c}.ngi") for c in COMPONENT_NAMES + ("residual",)}
    maps = ComponentMaps(Mx=arrs["Mx"], My=arrs["My"], Mz=arrs["Mz"], A=arrs["A"], residual=arrs["residual"],
                         condition_number=float(side["condition_number"]), theta=float(side["theta"]))
    return maps, side
