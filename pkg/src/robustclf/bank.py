"""Feature banks: labeled embedding corpora consumed by training and evaluation.

A bank is an ordered collection of (feature vector, binary label) pairs with a
single shared dimensionality. Two on-disk formats are supported:

* binary (``.fb``): little-endian, 8-byte magic ``FBANK\\x00\\x01\\x00``,
  then ``n`` and ``d`` as unsigned 64-bit integers, then ``n`` records of
  ``d`` float64 values followed by one label byte (0 or 1). Round-trips are
  bit-exact.
* csv: header ``label,f0,...,f{d-1}``, one example per line. Floats are
  rendered with shortest-round-trip precision, so reloads are value-exact.

Synthetic banks are drawn from a PCG64 generator (``numpy.random.PCG64``),
which is the fixed, documented PRNG for every randomized operation in this
package; identical seeds give identical banks on every platform.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

BANK_MAGIC = b"FBANK\x00\x01\x00"
DEFAULT_DIM = 1536

_HEADER = struct.Struct("<8sQQ")


class BankFormatError(ValueError):
    """A bank file violates the declared on-disk format."""


@dataclass(frozen=True)
class FeatureBank:
    """Immutable ordered corpus of feature vectors with binary labels.

    ``features`` is an (n, dim) float64 matrix, ``labels`` an (n,) uint8
    vector with values in {0, 1} (0 = real, 1 = generated). Both arrays are
    frozen after construction, so a bank can be shared freely across threads.
    """

    features: np.ndarray
    labels: np.ndarray
    source_tag: str = ""

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        if feats is self.features and feats.flags.writeable:
            feats = feats.copy()   # never freeze a caller-owned array in place
        if feats.ndim != 2:
            raise ValueError(f"features must be 2-D, got shape {feats.shape}")
        labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
        if labels is self.labels and labels.flags.writeable:
            labels = labels.copy()
        if labels.shape != (feats.shape[0],):
            raise ValueError(
                f"labels shape {labels.shape} does not match {feats.shape[0]} examples"
            )
        bad = np.flatnonzero(~np.isfinite(feats).all(axis=1))
        if bad.size:
            raise ValueError(f"non-finite value at row {bad[0] + 1}")
        bad = np.flatnonzero(labels > 1)
        if bad.size:
            raise ValueError(f"invalid label at row {bad[0] + 1}: must be 0 or 1")
        feats.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def __len__(self) -> int:
        return self.features.shape[0]

    def subset(self, indices) -> "FeatureBank":
        """New bank holding the given rows, in the given order."""
        idx = np.asarray(indices)
        return FeatureBank(self.features[idx].copy(), self.labels[idx].copy(), self.source_tag)


def class_counts(bank: FeatureBank) -> tuple[int, int]:
    """Return (n_pos, n_neg); always sums to len(bank)."""
    n_pos = int(np.count_nonzero(bank.labels))
    return n_pos, len(bank) - n_pos


def banks_equal(a: FeatureBank, b: FeatureBank) -> bool:
    """Bit-exact equality of payload (features and labels; provenance tag ignored)."""
    return (
        a.features.shape == b.features.shape
        and np.array_equal(a.features, b.features)
        and np.array_equal(a.labels, b.labels)
    )


def generate_synthetic(
    n_pos: int, n_neg: int, dim: int, separation: float, seed: int
) -> FeatureBank:
    """Two-Gaussian synthetic bank for desk-scale experiments.

    Negatives (label 0) come first, drawn from an isotropic unit-variance
    Gaussian at the origin; positives (label 1) follow, drawn from the same
    Gaussian shifted by ``separation`` along coordinate 0. Fully determined
    by the arguments (PCG64 stream seeded with ``seed``).
    """
    if n_pos < 0 or n_neg < 0 or n_pos + n_neg < 1:
        raise ValueError("need n_pos + n_neg >= 1")
    if dim < 1:
        raise ValueError("dim must be positive")
    if separation < 0:
        raise ValueError("separation must be >= 0")
    rng = np.random.Generator(np.random.PCG64(seed))
    neg = rng.standard_normal((n_neg, dim))
    pos = rng.standard_normal((n_pos, dim))
    pos[:, 0] += separation
    features = np.vstack([neg, pos])
    labels = np.concatenate([np.zeros(n_neg, np.uint8), np.ones(n_pos, np.uint8)])
    tag = f"synthetic n_pos={n_pos} n_neg={n_neg} dim={dim} sep={separation} seed={seed}"
    return FeatureBank(features, labels, tag)


def split_bank(bank: FeatureBank, holdout_fraction: float, seed: int) -> tuple[FeatureBank, FeatureBank]:
    """Deterministic shuffle split into (train, holdout) banks."""
    if not 0.0 < holdout_fraction < 1.0:
        raise ValueError("holdout_fraction must be in (0, 1)")
    n = len(bank)
    n_hold = max(1, int(round(n * holdout_fraction)))
    if n_hold >= n:
        raise ValueError("holdout would consume the whole bank")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(n)
    return bank.subset(perm[n_hold:]), bank.subset(perm[:n_hold])


def _infer_format(path, fmt: str | None) -> str:
    if fmt is not None:
        if fmt not in ("binary", "csv"):
            raise ValueError(f"unknown bank format {fmt!r}")
        return fmt
    return "csv" if Path(path).suffix.lower() == ".csv" else "binary"


def save_bank(bank: FeatureBank, path, fmt: str | None = None) -> None:
    """Write a bank to disk in binary (default) or csv format."""
    path = Path(str(path))
    if str(path) == "":
        raise ValueError("empty output path")
    fmt = _infer_format(path, fmt)
    if fmt == "binary":
        _save_binary(bank, path)
    else:
        _save_csv(bank, path)


def load_bank(path, fmt: str | None = None) -> FeatureBank:
    """Read a bank from disk; format inferred from the extension unless given."""
    path = Path(str(path))
    if not path.is_file():
        raise FileNotFoundError(f"bank file not found: {path}")
    fmt = _infer_format(path, fmt)
    if fmt == "binary":
        return _load_binary(path)
    return _load_csv(path)


def _save_binary(bank: FeatureBank, path: Path) -> None:
    n, d = bank.features.shape
    rec = np.dtype([("f", "<f8", (d,)), ("y", "u1")])
    body = np.empty(n, dtype=rec)
    body["f"] = bank.features
    body["y"] = bank.labels
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(BANK_MAGIC, n, d))
        fh.write(body.tobytes())


def _load_binary(path: Path) -> FeatureBank:
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise BankFormatError(f"{path}: malformed header (file too short)")
    magic, n, d = _HEADER.unpack_from(raw)
    if magic != BANK_MAGIC:
        raise BankFormatError(f"{path}: malformed header (bad magic {magic!r})")
    if d < 1:
        raise BankFormatError(f"{path}: malformed header (dimension {d})")
    rec = np.dtype([("f", "<f8", (d,)), ("y", "u1")])
    expected = _HEADER.size + n * rec.itemsize
    if len(raw) != expected:
        raise BankFormatError(
            f"{path}: body is {len(raw) - _HEADER.size} bytes, expected {n} records "
            f"of {rec.itemsize} bytes"
        )
    body = np.frombuffer(raw, dtype=rec, count=n, offset=_HEADER.size)
    features = body["f"].astype(np.float64).reshape(n, d)
    labels = body["y"].copy()
    bad = np.flatnonzero(labels > 1)
    if bad.size:
        raise BankFormatError(f"{path}: invalid label at row {bad[0] + 1}")
    bad = np.flatnonzero(~np.isfinite(features).all(axis=1))
    if bad.size:
        raise BankFormatError(f"{path}: non-finite value at row {bad[0] + 1}")
    return FeatureBank(features, labels, source_tag=str(path))


def _save_csv(bank: FeatureBank, path: Path) -> None:
    n, d = bank.features.shape
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("label," + ",".join(f"f{i}" for i in range(d)) + "\n")
        for i in range(n):
            row = ",".join(repr(float(v)) for v in bank.features[i])
            fh.write(f"{int(bank.labels[i])},{row}\n")


def _load_csv(path: Path) -> FeatureBank:
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        cols = header.split(",")
        if len(cols) < 2 or cols[0] != "label" or any(
            c != f"f{i}" for i, c in enumerate(cols[1:])
        ):
            raise BankFormatError(f"{path}: malformed header {header!r}")
        d = len(cols) - 1
        feats: list[np.ndarray] = []
        labels: list[int] = []
        for rownum, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) - 1 != d:
                raise BankFormatError(
                    f"{path}: dimension mismatch at row {rownum}: "
                    f"{len(parts) - 1} values, expected {d}"
                )
            if parts[0] not in ("0", "1"):
                raise BankFormatError(f"{path}: invalid label at row {rownum}: {parts[0]!r}")
            try:
                vec = np.array([float(v) for v in parts[1:]], dtype=np.float64)
            except ValueError as exc:
                raise BankFormatError(f"{path}: bad value at row {rownum}: {exc}") from None
            if not np.isfinite(vec).all():
                raise BankFormatError(f"{path}: non-finite value at row {rownum}")
            labels.append(int(parts[0]))
            feats.append(vec)
    features = np.vstack(feats) if feats else np.zeros((0, d))
    return FeatureBank(features, np.array(labels, np.uint8), source_tag=str(path))
