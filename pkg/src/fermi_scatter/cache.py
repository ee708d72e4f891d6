"""Binary on-disk cache for kernel matrices.

File layout (all little endian)::

    magic     4 bytes  b"FPK1"
    version   u32
    tag       u32      1 = K, 2 = Gamma_ref, 3 = Gamma_boundary
    mu        f64      real energy
    side      f64      0 plus, 1 minus, 2 off-axis, 3 negative-real
    lambda    f64
    omega     f64
    cutoff    u32
    quad      u32
    dim       u32
    crc32     u32      of all preceding header bytes
    payload   dim*dim complex entries, row major, (re, im) as f64 pairs

Tolerance metadata that does not fit the header lives in a small JSON file
next to the matrix.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .charge_kernel import KernelMatrix
from .greens import BoundarySide

log = logging.getLogger(__name__)

MAGIC = b"FPK1"
VERSION = 1
HEADER = struct.Struct("<4sII4dIII")
CRC = struct.Struct("<I")
TAG_CODES = {"K": 1, "Gamma_ref": 2, "Gamma_boundary": 3}
SIDE_CODES = {BoundarySide.PLUS: 0.0, BoundarySide.MINUS: 1.0, BoundarySide.OFF_AXIS: 2.0,
              BoundarySide.NEGATIVE_REAL: 3.0}
ENV_VAR = "FERMI_SCATTER_CACHE"


class CacheCorruptError(ValueError):
    pass


def encode(matrix: KernelMatrix) -> bytes:
    z = complex(matrix.energy)
    if z.imag != 0:
        raise ValueError("only real-energy matrices are cached (the header stores a real mu)")
    head = HEADER.pack(MAGIC, VERSION, TAG_CODES[matrix.tag], z.real, SIDE_CODES[matrix.side],
                       matrix.lam, matrix.omega, matrix.cutoff, matrix.quad_order, matrix.dim)
    payload = np.ascontiguousarray(matrix.entries, dtype="<c16").tobytes()
    return head + CRC.pack(zlib.crc32(head)) + payload


def decode(data: bytes, meta: dict | None = None) -> KernelMatrix:
    if len(data) < HEADER.size + CRC.size:
        raise CacheCorruptError("file shorter than the header")
    head = data[:HEADER.size]
    magic, version, tag, mu, side, lam, omega, cutoff, quad, dim = HEADER.unpack(head)
    if magic != MAGIC:
        raise CacheCorruptError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CacheCorruptError(f"format version {version} is not {VERSION}")
    (crc,) = CRC.unpack_from(data, HEADER.size)
    if crc != zlib.crc32(head):
        raise CacheCorruptError("header checksum mismatch")
    body = data[HEADER.size + CRC.size:]
    if len(body) != 16 * dim * dim:
        raise CacheCorruptError(f"payload has {len(body)} bytes, expected {16 * dim * dim}")
    entries = np.frombuffer(body, dtype="<c16").reshape(dim, dim).astype(complex)
    tags = {v: k for k, v in TAG_CODES.items()}
    sides = {v: k for k, v in SIDE_CODES.items()}
    if tag not in tags or side not in sides:
        raise CacheCorruptError("unknown tag or side code")
    meta = meta or {}
    return KernelMatrix(entries, tags[tag], complex(mu), sides[side], cutoff, quad, lam, omega,
                        tail_bound=meta.get("tail_bound", 0.0),
                        tolerance=meta.get("tolerance", 0.0), info=meta.get("info", {}))


def atomic_write(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def write_matrix(path, matrix: KernelMatrix) -> None:
    path = Path(path)
    atomic_write(path, encode(matrix))
    meta = {"tail_bound": matrix.tail_bound, "tolerance": matrix.tolerance}
    atomic_write(path.with_suffix(".json"), json.dumps(meta, sort_keys=True).encode())


def read_matrix(path) -> KernelMatrix:
    path = Path(path)
    side = path.with_suffix(".json")
    meta = json.loads(side.read_text()) if side.exists() else None
    return decode(path.read_bytes(), meta)


def default_cache_dir() -> Path:
    env = os.environ.get(ENV_VAR)
    if env:
        return Path(env)
    return Path(os.environ.get("XDG_CACHE_HOME", Path.home() / ".cache")) / "fermi_scatter"


@dataclass
class CacheStats:
    hits: int = 0
    misses: int = 0
    rebuilds: int = 0


class KernelCache:
    """Directory of cached matrices keyed by a hash of everything that determines them."""

    def __init__(self, directory=None):
        self.directory = Path(directory) if directory is not None else default_cache_dir()
        self.stats = CacheStats()

    @staticmethod
    def key(tag: str, mu: float, side, lam: float, omega: float, cutoff: int, quad_order: int,
            **tolerances) -> str:
        side = BoundarySide.parse(side).value
        fields = [f"v{VERSION}", tag, repr(float(mu)), side, repr(float(lam)), repr(float(omega)),
                  str(cutoff), str(quad_order)]
        fields += [f"{k}={float(v)!r}" for k, v in sorted(tolerances.items())]
        return hashlib.sha256("|".join(fields).encode()).hexdigest()[:24]

    def path(self, tag: str, key: str) -> Path:
        return self.directory / f"{tag}-{key}.fpk"

    def get_or_build(self, tag: str, key: str, build: Callable[[], KernelMatrix]) -> KernelMatrix:
        p = self.path(tag, key)
        if p.exists():
            try:
                m = read_matrix(p)
                self.stats.hits += 1
                log.info("cache hit %s: assembly skipped", p.name)
                return m
            except (CacheCorruptError, ValueError, OSError) as exc:
                self.stats.rebuilds += 1
                log.warning("cache entry %s unusable (%s); rebuilding", p.name, exc)
        else:
            self.stats.misses += 1
        m = build()
        write_matrix(p, m)
        return m

    def entries(self) -> list[Path]:
        if not self.directory.exists():
            return []
        return sorted(self.directory.glob("*.fpk"))

    def inspect(self) -> list[dict]:
        out = []
        for p in self.entries():
            rec = {"file": p.name, "bytes": p.stat().st_size}
            try:
                data = p.read_bytes()
                magic, version, tag, mu, side, lam, omega, cutoff, quad, dim = \
                    HEADER.unpack(data[:HEADER.size])
                decode(data)
                rec.update(version=version, tag=tag, mu=mu, side=side, lam=lam, omega=omega,
                           cutoff=cutoff, quad_order=quad, dim=dim, valid=True)
            except (CacheCorruptError, struct.error) as exc:
                rec.update(valid=False, error=str(exc))
            out.append(rec)
        return out

    def clear(self) -> int:
        n = 0
        for p in self.entries():
            p.unlink(missing_ok=True)
            p.with_suffix(".json").unlink(missing_ok=True)
            n += 1
        return n
