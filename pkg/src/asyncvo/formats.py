"""Plain-text file formats used by the command line.

Track stream, one record per line::

    U <t_seconds> <id> <u_px> <v_px>
    D <t_seconds> <id>[,<id>...]

Trajectory, one sample per line::

    <t> <px> <py> <pz> <qx> <qy> <qz> <qw>

Lines starting with ``#`` and blank lines are ignored on read.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import TrackFormatError
from .eskf import TrackDeletion, TrackUpdate
from .evaluation import Trajectory


def format_message(msg) -> str:
    if isinstance(msg, TrackUpdate):
        return f"U {msg.t:.6f} {msg.feature_id} {msg.u:.6f} {msg.v:.6f}"
    if isinstance(msg, TrackDeletion):
        return f"D {msg.t:.6f} {','.join(str(i) for i in msg.feature_ids)}"
    raise TypeError(f"not a track message: {msg!r}")


def parse_message(line: str, lineno: int = 0):
    parts = line.split()
    try:
        if parts[0] == "U" and len(parts) == 5:
            return TrackUpdate(int(parts[2]), float(parts[1]), float(parts[3]), float(parts[4]))
        if parts[0] == "D" and len(parts) == 3:
            ids = tuple(int(x) for x in parts[2].split(",") if x)
            if not ids:
                raise ValueError("empty id list")
            return TrackDeletion(float(parts[1]), ids)
    except (ValueError, IndexError) as err:
        raise TrackFormatError(f"line {lineno}: {err}: {line.strip()!r}") from None
    raise TrackFormatError(f"line {lineno}: unrecognized record {line.strip()!r}")


def write_tracks(messages: Iterable, path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        for msg in messages:
            fh.write(format_message(msg) + "\n")
    return path


def iter_tracks(path) -> Iterator:
    with Path(path).open() as fh:
        for n, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            msg = parse_message(s, n)
            if not (np.isfinite(msg.t) and (not isinstance(msg, TrackUpdate) or np.isfinite([msg.u, msg.v]).all())):
                raise TrackFormatError(f"line {n}: non-finite value")
            yield msg


def read_tracks(path) -> list:
    return list(iter_tracks(path))


def write_trajectory(traj: Trajectory, path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        for t, p, q in zip(traj.t, traj.p, traj.q):
            w, x, y, z = q
            fh.write(f"{t:.6f} {p[0]:.9f} {p[1]:.9f} {p[2]:.9f} {x:.9f} {y:.9f} {z:.9f} {w:.9f}\n")
    return path


def read_trajectory(path) -> Trajectory:
    rows = []
    with Path(path).open() as fh:
        for n, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            parts = s.split()
            if len(parts) != 8:
                raise TrackFormatError(f"{path}:{n}: expected 8 columns, got {len(parts)}")
            try:
                rows.append([float(x) for x in parts])
            except ValueError as err:
                raise TrackFormatError(f"{path}:{n}: {err}") from None
    if not rows:
        return Trajectory.empty()
    a = np.array(rows)
    try:
        return Trajectory(a[:, 0], a[:, 1:4], a[:, [7, 4, 5, 6]])
    except ValueError as err:
        raise TrackFormatError(f"{path}: {err}") from None


def write_landmarks(tracks: dict, path) -> Path:
    """Ground-truth table: ``<track_id> <x> <y> <z> <birth> <death>``."""
    path = Path(path)
    with path.open("w") as fh:
        for tid in sorted(tracks):
            tr = tracks[tid]
            x, y, z = tr.position
            fh.write(f"{tid} {x:.9f} {y:.9f} {z:.9f} {tr.birth:.6f} {tr.death:.6f}\n")
    return path


def read_landmarks(path) -> dict[int, tuple[np.ndarray, float, float]]:
    out = {}
    with Path(path).open() as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            out[int(parts[0])] = (np.array([float(x) for x in parts[1:4]]), float(parts[4]), float(parts[5]))
    return out


def write_jsonl(records: Iterable[dict], path) -> Path:
    path = Path(path)
    with path.open("w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    return path


def read_jsonl(path) -> list[dict]:
    with Path(path).open() as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_json(data: dict, path) -> Path:
    path = Path(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    return path


def write_table(header: list[str], rows, path, fmt: str = "%.9f") -> Path:
    """Whitespace-delimited table with a ``#``-prefixed header line."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write("# " + " ".join(header) + "\n")
        for row in rows:
            fh.write(" ".join(fmt % x if isinstance(x, float) else str(x) for x in row) + "\n")
    return path
