"""Deterministic CSV/JSON artifact writers and the run manifest."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .grids import LatticeSurface
from .xva import REGIME_LABELS, XvaResult


def fmt(x: float) -> str:
    return f"{x:.12e}"


def write_clean_csv(path, surface: LatticeSurface) -> None:
    lines = ["time,state,value"]
    for t, key, v in surface.rows():
        lines.append(f"{fmt(t)},{key},{fmt(v)}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_margin_csv(path, vm: LatticeSurface, im: LatticeSurface, m: LatticeSurface) -> None:
    lines = ["time,state,vm,im,m"]
    for key in m.space.keys:
        for idx, t in enumerate(m.grid):
            lines.append(
                f"{fmt(t)},{key},{fmt(vm.values[key][idx])},"
                f"{fmt(im.values[key][idx])},{fmt(m.values[key][idx])}"
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_xva_csv(path, results: dict[str, XvaResult]) -> None:
    order = [w for w in ("actual", "upper", "lower") if w in results]
    first = results[order[0]].surface
    lines = ["time,state," + ",".join(f"u_{w}" for w in order)]
    for key in first.space.keys:
        for idx, t in enumerate(first.grid):
            cells = ",".join(fmt(results[w].surface.values[key][idx]) for w in order)
            lines.append(f"{fmt(t)},{key},{cells}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_regime_csv(path, results: dict[str, XvaResult]) -> None:
    order = [w for w in ("upper", "lower") if w in results and results[w].regime is not None]
    if not order:
        return
    first = results[order[0]].surface
    lines = ["time,state," + ",".join(f"regime_{w}" for w in order)]
    for key in first.space.keys:
        for idx, t in enumerate(first.grid):
            cells = ",".join(
                REGIME_LABELS[int(results[w].regime[key][idx])] for w in order
            )
            lines.append(f"{fmt(t)},{key},{cells}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_sweep_csv(path, sweep_result) -> None:
    cols = (
        "xva_lower", "xva_actual", "xva_upper",
        "xi_ref_val", "xi_I_val", "xi_C_val", "xi_f_val", "v_hat_0",
    )
    lines = ["param," + ",".join(cols) + ",status"]
    for row in sweep_result.rows:
        cells = ",".join(fmt(getattr(row, c)) for c in cols)
        status = "ok" if row.ok else f"failed({row.error})"
        lines.append(f"{fmt(row.value)},{cells},{status}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_json(path, payload: dict) -> None:
    Path(path).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def config_sha256(config_path) -> str:
    return hashlib.sha256(Path(config_path).read_bytes()).hexdigest()


def manifest(
    subcommand: str,
    config_path,
    version: str,
    seed: int | None,
    grid_points: int,
    outputs: list[str],
    wall_clock_s: float,
) -> dict:
    """Run manifest; identical manifests (wall clock aside) imply
    byte-identical data artifacts."""
    return {
        "subcommand": subcommand,
        "config_sha256": config_sha256(config_path),
        "engine_version": version,
        "seed": seed,
        "grid_points": grid_points,
        "outputs": sorted(outputs),
        "wall_clock_s": wall_clock_s,
    }
