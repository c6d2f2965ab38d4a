"""Observation container and on-disk formats (CSV and raw binary)."""

import struct

import numpy as np


class SpatialDataset:
    """n observation locations in [0,1]^d with optional observed values."""

    def __init__(self, locations, values=None, validate=True):
        self.locations = np.ascontiguousarray(locations, dtype=np.float64)
        if self.locations.ndim != 2:
            raise ValueError("locations must be an (n, d) array")
        self.values = None if values is None else np.ascontiguousarray(values, dtype=np.float64)
        if validate:
            self._validate()

    def _validate(self):
        n, d = self.locations.shape
        if n < 1:
            raise ValueError("dataset needs at least one location")
        if d not in (1, 2, 3):
            raise ValueError(f"spatial dimension must be 1, 2 or 3, got {d}")
        if not np.all(np.isfinite(self.locations)):
            raise ValueError("locations contain non-finite coordinates")
        if self.locations.min() < 0.0 or self.locations.max() > 1.0:
            bad = int(np.argmax(np.any((self.locations < 0) | (self.locations > 1), axis=1)))
            raise ValueError(f"location {bad} lies outside the unit cube [0,1]^d")
        uniq = np.unique(self.locations, axis=0)
        if uniq.shape[0] != n:
            raise ValueError("locations must be pairwise distinct")
        if self.values is not None and self.values.shape != (n,):
            raise ValueError(f"values must have shape ({n},), got {self.values.shape}")

    @property
    def n(self):
        return self.locations.shape[0]

    @property
    def dim(self):
        return self.locations.shape[1]

    def with_values(self, values):
        return SpatialDataset(self.locations, values, validate=False)

    def __repr__(self):
        has_z = "with" if self.values is not None else "without"
        return f"SpatialDataset(n={self.n}, d={self.dim}, {has_z} values)"


_AXES = ("x", "y", "z")


def read_csv(path):
    """Read locations (and optional values) from 'x,y[,z][,value]' CSV."""
    with open(path) as fh:
        header = [c.strip().lower() for c in fh.readline().split(",")]
    d = sum(1 for c in header if c in _AXES)
    if d == 0 or header[:d] != list(_AXES[:d]):
        raise ValueError(f"{path}: header must start with x,y[,z], got {header}")
    has_values = len(header) > d and header[d] == "value"
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if raw.shape[1] < d + has_values:
        raise ValueError(f"{path}: rows have fewer columns than the header")
    values = raw[:, d] if has_values else None
    return SpatialDataset(raw[:, :d], values)


def write_csv(path, dataset, fmt="%.17g"):
    cols = list(_AXES[: dataset.dim])
    data = dataset.locations
    if dataset.values is not None:
        cols.append("value")
        data = np.column_stack([data, dataset.values])
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for row in data:
            fh.write(",".join(fmt % v for v in row) + "\n")


_MAGIC = struct.Struct("<QI")


def read_binary(path):
    """Raw little-endian format: u64 n, u32 d, n*d f64 coords, optional n f64 values."""
    with open(path, "rb") as fh:
        head = fh.read(_MAGIC.size)
        if len(head) != _MAGIC.size:
            raise ValueError(f"{path}: truncated header")
        n, d = _MAGIC.unpack(head)
        body = np.fromfile(fh, dtype="<f8")
    if body.size not in (n * d, n * d + n):
        raise ValueError(f"{path}: expected {n * d} or {n * d + n} doubles, found {body.size}")
    locations = body[: n * d].reshape(n, d)
    values = body[n * d :] if body.size == n * d + n else None
    return SpatialDataset(locations, values)


def write_binary(path, dataset):
    with open(path, "wb") as fh:
        fh.write(_MAGIC.pack(dataset.n, dataset.dim))
        dataset.locations.astype("<f8").tofile(fh)
        if dataset.values is not None:
            dataset.values.astype("<f8").tofile(fh)


def read_dataset(path):
    """Dispatch on extension: .csv or binary (.bin/.dat)."""
    path = str(path)
    if path.endswith(".csv"):
        return read_csv(path)
    return read_binary(path)
