"""
CSV and JSON artifacts written by Newtonian Worlds runs.

Column layouts are documented in FORMATS.md. Floats carry 17 significant digits
so that re-runs with the same seed reproduce every file byte for byte.
"""
import json
from pathlib import Path
from typing import Sequence

import numpy as np

from newtonian_worlds.core import GridSpec
from newtonian_worlds.worlds import Pathline

FLOAT_FORMAT = "%.17g"
SCHEMA_PATH = Path(__file__).parent / "schemas" / "summary.schema.json"


def _coordinate_names(count: int) -> list[str]:
    return [f"x{i}" for i in range(count)]


def _write(path: Path, header: list[str], rows: np.ndarray) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, rows, fmt=FLOAT_FORMAT, delimiter=",", header=",".join(header), comments="")
    return path


def snapshot_name(prefix: str, t: float) -> str:
    return f"{prefix}_{t:.6f}.csv"


def write_density(directory: Path, grid: GridSpec, rho: np.ndarray, t: float) -> Path:
    """One row per grid point: coordinates then ρ, in C order."""
    columns = [m.ravel() for m in grid.mesh()] + [np.asarray(rho).ravel()]
    header = _coordinate_names(grid.ndim) + ["rho"]
    return _write(Path(directory) / snapshot_name("density", t), header, np.stack(columns, axis=1))


def write_worlds(
    directory: Path, positions: np.ndarray, velocities: np.ndarray, t: float, directions: np.ndarray | None = None
) -> Path:
    """One row per world: index, position, velocity and, for spinning worlds, the unit moment."""
    dims = positions.shape[1]
    header = ["world"] + _coordinate_names(dims) + [f"v{i}" for i in range(dims)]
    columns = [np.arange(positions.shape[0])[:, None], positions, velocities]
    if directions is not None:
        header += ["nx", "ny", "nz"]
        columns.append(directions)
    return _write(Path(directory) / snapshot_name("worlds", t), header, np.hstack(columns))


def write_trajectories(directory: Path, pathlines: Sequence[Pathline]) -> Path:
    """Pathline samples, one row per (tracer, time); ``truncated`` is 1 for pathlines stopped at a node."""
    dims = pathlines[0].positions.shape[1] if pathlines else 1
    rows = [
        np.column_stack([np.full(len(p.times), i), p.times, p.positions, np.full(len(p.times), int(p.truncated))])
        for i, p in enumerate(pathlines)
    ]
    table = np.vstack(rows) if rows else np.empty((0, dims + 3))
    header = ["tracer", "t"] + _coordinate_names(dims) + ["truncated"]
    return _write(Path(directory) / "trajectories.csv", header, table)


def _plain(value):
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    return value


def write_summary(directory: Path, summary: dict) -> Path:
    path = Path(directory) / "summary.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(summary), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_schema() -> dict:
    return json.loads(SCHEMA_PATH.read_text(encoding="utf-8"))
