"""Versioned file formats: run config (JSON), detections (TSV), key pools (binary).

Detections TSV::

    # qkdpost-detections v1 n_pulses=<N>
    pulse  alice_bit  alice_basis  bob_click  bob_basis  bob_bit
    17     1          X            single     Z          0

Pool file: magic ``QKDPOOL1``, drawn count (u64 LE), matrix reserve
(u32 LE), then the serialized BitString (u64 LE bit length, packed bytes,
LSB-first).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .budget import DEFAULT_MATRIX_RESERVE, KeyPool, ProtocolParams
from .channel import ChannelModel
from .gf2core import BitString
from .session import SessionConfig
from .sift import Basis, Click, DetectionTable

CONFIG_VERSION = 1
DETECTIONS_MAGIC = "# qkdpost-detections v1"
POOL_MAGIC = b"QKDPOOL1"
_POOL_HEAD = struct.Struct("<QI")
_COLUMNS = ("pulse", "alice_bit", "alice_basis", "bob_click", "bob_basis", "bob_bit")
_CLICK = {c: c.name.lower() for c in Click}
_CLICK_BACK = {v: k for k, v in _CLICK.items()}


def load_config(path: str | Path) -> tuple[ProtocolParams, ChannelModel | None, SessionConfig]:
    """Read ``{"version": 1, "params": {...}, "channel": {...}, "session": {...}}``."""
    raw = json.loads(Path(path).read_text())
    if raw.get("version") != CONFIG_VERSION:
        raise ValueError(f"{path}: expected config version {CONFIG_VERSION}")
    params = ProtocolParams(**raw["params"])
    channel = ChannelModel(**raw["channel"]) if "channel" in raw else None
    session = SessionConfig(**raw.get("session", {}))
    return params, channel, session


def dump_config(path: str | Path, params: ProtocolParams, channel: ChannelModel | None = None,
                session: SessionConfig | None = None) -> None:
    if callable(params.f_model):
        raise ValueError("only a constant f_model can be written to a config file")
    out = {"version": CONFIG_VERSION, "params": params.__dict__.copy()}
    if channel is not None:
        out["channel"] = channel.__dict__.copy()
    if session is not None:
        out["session"] = session.__dict__.copy()
    Path(path).write_text(json.dumps(out, indent=2) + "\n")


def write_detections(path: str | Path, table: DetectionTable) -> None:
    basis = np.array(["X", "Z"])
    click = np.array([_CLICK[Click(i)] for i in range(3)])
    with open(path, "w") as fh:
        fh.write(f"{DETECTIONS_MAGIC} n_pulses={table.n_pulses}\n")
        fh.write("\t".join(_COLUMNS) + "\n")
        rows = zip(table.pulse, table.alice_bit, basis[table.alice_basis], click[table.bob_click],
                   basis[table.bob_basis], table.bob_bit)
        fh.writelines(f"{p}\t{a}\t{ab}\t{c}\t{bb}\t{b}\n" for p, a, ab, c, bb, b in rows)


def read_detections(path: str | Path) -> DetectionTable:
    with open(path) as fh:
        head = fh.readline().strip()
        if not head.startswith(DETECTIONS_MAGIC):
            raise ValueError(f"{path}: not a v1 detections file")
        n_pulses = int(head.split("n_pulses=")[1])
        cols = fh.readline().strip().split("\t")
        if tuple(cols) != _COLUMNS:
            raise ValueError(f"{path}: unexpected columns {cols}")
        rows = [line.rstrip("\n").split("\t") for line in fh if line.strip()]
    arr = lambda i, f, dt: np.array([f(r[i]) for r in rows], dtype=dt)  # noqa: E731
    return DetectionTable(
        arr(1, int, np.uint8),
        arr(2, lambda s: Basis[s], np.uint8),
        arr(3, lambda s: _CLICK_BACK[s], np.uint8),
        arr(4, lambda s: Basis[s], np.uint8),
        arr(5, int, np.uint8),
        arr(0, int, np.int64),
        n_pulses,
    )


def write_pool(path: str | Path, pool: KeyPool) -> None:
    Path(path).write_bytes(POOL_MAGIC + _POOL_HEAD.pack(pool.drawn, pool.matrix_reserve) + pool.bits.to_bytes())


def read_pool(path: str | Path) -> KeyPool:
    data = Path(path).read_bytes()
    if not data.startswith(POOL_MAGIC):
        raise ValueError(f"{path}: not a key pool file")
    off = len(POOL_MAGIC)
    drawn, reserve = _POOL_HEAD.unpack_from(data, off)
    bits, end = BitString.read_from(data, off + _POOL_HEAD.size)
    if end != len(data):
        raise ValueError(f"{path}: trailing bytes after pool bits")
    return KeyPool(bits, reserve, drawn)


def fresh_pool(n_bits: int, rng: np.random.Generator, matrix_reserve: int = DEFAULT_MATRIX_RESERVE) -> KeyPool:
    return KeyPool(BitString.random(n_bits, rng), matrix_reserve)


def write_tsv(path: str | Path, rows: list[dict]) -> None:
    """Tab-separated table, header from the first row's keys."""
    if not rows:
        Path(path).write_text("")
        return
    keys = list(rows[0])
    lines = ["\t".join(keys)]
    lines += ["\t".join(_fmt(r.get(k)) for k in keys) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)
