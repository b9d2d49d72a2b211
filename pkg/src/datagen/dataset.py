"""
Datasets of (x, y, k, l) records and their binary file format.

Layout (little-endian): magic "RDFC", version u16, role u8, n u8, nR0 u16,
nRL u16, count u64, seed u64, then count records of u32 x, u32 y, u64 k,
u64 l.
"""

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, NamedTuple, Union

import numpy as np

from src.errors import FormatError, ValidationError
from src.probability import JointPmf, empirical_joint_from_arrays
from src.storage import atomic_write_bytes

logger = logging.getLogger(__name__)

MAGIC = b"RDFC"
VERSION = 1
ROLES = ("train", "test")
_HEADER = struct.Struct("<4sHBBHHQQ")
RECORD_DTYPE = np.dtype([("x", "<u4"), ("y", "<u4"), ("k", "<u8"), ("l", "<u8")])


class SampleRecord(NamedTuple):
    x: int
    y: int
    k: int
    l: int


@dataclass(frozen=True)
class DatasetHeader:
    """
    Attributes:
        n: Blocklength
        nr0: Common-randomness bits (|K| = 2^nr0)
        nrl: Local-randomness bits (|L| = 2^nrl)
        count: Number of records
        role: "train" or "test"
        seed: Master seed the records were drawn with
    """

    n: int
    nr0: int
    nrl: int
    count: int
    role: str
    seed: int

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValidationError(f"dataset role must be one of {ROLES}, got {self.role!r}")
        if not 1 <= self.n <= 16:
            raise ValidationError(f"blocklength must lie in [1, 16], got {self.n}")
        if not (0 <= self.nr0 <= 63 and 0 <= self.nrl <= 63):
            raise ValidationError("randomness bit counts must lie in [0, 63]")
        if self.count < 0:
            raise ValidationError("record count must be >= 0")


@dataclass(frozen=True, eq=False)
class Dataset:
    """Columnar record storage; arrays are read-only."""

    header: DatasetHeader
    x: np.ndarray
    y: np.ndarray
    k: np.ndarray
    l: np.ndarray

    def __post_init__(self):
        columns = {}
        for name in ("x", "y", "k", "l"):
            arr = np.array(getattr(self, name), dtype=np.int64, copy=True)
            if arr.shape != (self.header.count,):
                raise ValidationError(
                    f"column {name} has {arr.shape[0] if arr.ndim else 0} entries, header says {self.header.count}"
                )
            arr.setflags(write=False)
            columns[name] = arr
        limits = {"x": 1 << self.header.n, "y": 1 << self.header.n, "k": 1 << self.header.nr0, "l": 1 << self.header.nrl}
        for name, arr in columns.items():
            if arr.size and (arr.min() < 0 or arr.max() >= limits[name]):
                raise ValidationError(f"column {name} has values outside [0, {limits[name]})")
            object.__setattr__(self, name, arr)

    @property
    def role(self) -> str:
        return self.header.role

    def __len__(self) -> int:
        return self.header.count

    def __getitem__(self, i: int) -> SampleRecord:
        return SampleRecord(int(self.x[i]), int(self.y[i]), int(self.k[i]), int(self.l[i]))

    def records(self) -> Iterator[SampleRecord]:
        for i in range(len(self)):
            yield self[i]

    def joint(self) -> JointPmf:
        """Relative frequency distribution of the (x, y) columns."""
        return empirical_joint_from_arrays(self.x, self.y, self.header.n)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.header == other.header and all(
            np.array_equal(getattr(self, c), getattr(other, c)) for c in ("x", "y", "k", "l")
        )

    def to_bytes(self) -> bytes:
        h = self.header
        header = _HEADER.pack(MAGIC, VERSION, ROLES.index(h.role), h.n, h.nr0, h.nrl, h.count, h.seed)
        records = np.empty(h.count, dtype=RECORD_DTYPE)
        for name in ("x", "y", "k", "l"):
            records[name] = getattr(self, name)
        return header + records.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "Dataset":
        if len(data) < _HEADER.size:
            raise FormatError("dataset file truncated before header end")
        magic, version, role, n, nr0, nrl, count, seed = _HEADER.unpack_from(data)
        if magic != MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise FormatError(f"unsupported dataset file version {version}")
        if role >= len(ROLES):
            raise FormatError(f"unknown dataset role code {role}")
        expected = _HEADER.size + count * RECORD_DTYPE.itemsize
        if len(data) != expected:
            raise FormatError(f"dataset file has {len(data)} bytes, header implies {expected}")
        records = np.frombuffer(data, dtype=RECORD_DTYPE, offset=_HEADER.size, count=count)
        header = DatasetHeader(n=n, nr0=nr0, nrl=nrl, count=count, role=ROLES[role], seed=seed)
        return cls(header, records["x"], records["y"], records["k"], records["l"])


def save_dataset(dataset: Dataset, path: Union[str, Path]) -> Path:
    path = atomic_write_bytes(path, dataset.to_bytes())
    logger.info(f"Saved {dataset.role} dataset ({len(dataset)} records) to {path}")
    return path


def load_dataset(path: Union[str, Path]) -> Dataset:
    return Dataset.from_bytes(Path(path).read_bytes())
