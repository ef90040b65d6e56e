"""Seeded synthetic data streams and delimited-file ingestion.

All randomness flows through an in-repo splitmix64 generator so a stream
spec (including its seed) pins the record sequence bit-for-bit on every
platform. The algorithm, stated fully: a 64-bit state advances by the
golden-ratio increment 0x9E3779B97F4A7C15 per draw, and the advanced
state runs through the finalizer

    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27;  z *= 0x94D049BB133111EB
    z ^= z >> 31

(all arithmetic mod 2^64). Uniform doubles take the top 53 bits; normals
come from Box-Muller on those uniforms; bounded integers use rejection
sampling; Poisson counts use Knuth's product method.

Generator families: random-RBF (arbitrary feature/class counts, optional
incremental centroid drift), SEA (three uniform features in [0, 10),
label by f1 + f2 against a threshold cycling over 8, 9, 7, 9.5 at
scheduled abrupt drift points), and a rotating hyperplane (incremental
weight drift). Real datasets come in as CSV, the only ingestion format.
"""

from __future__ import annotations

import bisect
import csv
import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, ParseError, SchemaError

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_INV_2_53 = 1.0 / (1 << 53)

SEA_THETAS = (8.0, 9.0, 7.0, 9.5)


def _mix64(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *keys) -> int:
    """Fold keys (ints or strings) into a seed, giving a decorrelated child.

    Used to hand every ensemble component its own substream from one
    master seed without the substreams overlapping.
    """
    h = _mix64(seed ^ _GOLDEN)
    for key in keys:
        if isinstance(key, str):
            key = int.from_bytes(
                hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest(), "big"
            )
        h = _mix64(h ^ ((key * _GOLDEN) & _MASK64))
    return h


class Rng:
    """splitmix64 stream with the derived variates the generators need."""

    __slots__ = ("_state", "_cached_normal")

    def __init__(self, seed: int):
        self._state = seed & _MASK64
        self._cached_normal = None

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return _mix64(self._state)

    def uniform(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * _INV_2_53

    def normal(self) -> float:
        # Box-Muller; generates pairs, caches the second variate.
        if self._cached_normal is not None:
            value = self._cached_normal
            self._cached_normal = None
            return value
        u1 = self.uniform()
        while u1 <= 0.0:
            u1 = self.uniform()
        u2 = self.uniform()
        radius = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._cached_normal = radius * math.sin(theta)
        return radius * math.cos(theta)

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n) by rejection (no modulo bias)."""
        if n <= 0:
            raise ConfigurationError("randint requires a positive bound")
        bound = _MASK64 + 1 - ((_MASK64 + 1) % n)
        while True:
            value = self.next_u64()
            if value < bound:
                return value % n

    def poisson(self, lam: float) -> int:
        """Knuth's product method; fine for the small lambdas used here."""
        if lam < 0.0:
            raise ConfigurationError("poisson requires a non-negative rate")
        if lam == 0.0:
            return 0
        threshold = math.exp(-lam)
        k = 0
        p = 1.0
        while True:
            p *= self.uniform()
            if p <= threshold:
                return k
            k += 1

    def shuffle(self, items: list) -> None:
        # Fisher-Yates, in place.
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]

    def spawn(self, *keys) -> "Rng":
        return Rng(derive_seed(self._state, *keys))


@dataclass(frozen=True)
class StreamRecord:
    """One labeled instance: feature vector, dense label index, position."""

    features: np.ndarray
    label_index: int
    seq: int


@dataclass(frozen=True)
class CsvSchema:
    """How to read a delimited file as a labeled stream.

    label_map maps raw label strings to dense indices 0..p-1 and fixes
    n_classes; without it, labels must already be integers and n_classes
    must be given. feature_columns defaults to every column except the
    label.
    """

    header: bool = False
    label_column: int = -1
    feature_columns: tuple[int, ...] | None = None
    label_map: dict | None = None
    n_classes: int | None = None

    def __post_init__(self):
        if self.label_map is not None:
            indices = sorted(self.label_map.values())
            if indices != list(range(len(indices))) or len(indices) < 2:
                raise ConfigurationError(
                    "label_map values must be exactly 0..p-1 with p >= 2"
                )
            if self.n_classes is not None and self.n_classes != len(indices):
                raise ConfigurationError("n_classes contradicts label_map size")
            object.__setattr__(self, "n_classes", len(indices))
        elif self.n_classes is None or self.n_classes < 2:
            raise ConfigurationError(
                "schema needs a label_map or an explicit n_classes >= 2"
            )
        if self.feature_columns is not None:
            object.__setattr__(self, "feature_columns", tuple(self.feature_columns))


_KINDS = ("rbf", "sea", "hyperplane", "csv")


@dataclass(frozen=True)
class StreamSpec:
    """Everything needed to regenerate a stream bit-for-bit.

    n_features/n_classes may be left None and are resolved per kind (rbf
    and hyperplane default to 10 features; sea is pinned at 3 features;
    sea and hyperplane are binary).
    """

    kind: str
    seed: int = 0
    n_features: int | None = None
    n_classes: int | None = None
    n_centroids: int = 50
    drift_speed: float = 0.0
    drift_points: tuple[int, ...] = ()
    noise_percent: float = 0.0
    path: str | None = None
    schema: CsvSchema | None = None
    name: str | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ConfigurationError(f"unknown stream kind {self.kind!r}")
        object.__setattr__(self, "drift_points", tuple(self.drift_points))
        if not (0.0 <= self.noise_percent <= 100.0):
            raise ConfigurationError("noise_percent must be in [0, 100]")
        if self.drift_speed < 0.0:
            raise ConfigurationError("drift_speed must be non-negative")

        n_features = self.n_features
        n_classes = self.n_classes
        if self.kind == "rbf":
            n_features = 10 if n_features is None else n_features
            n_classes = 2 if n_classes is None else n_classes
            if self.n_centroids < 1:
                raise ConfigurationError("rbf needs at least one centroid")
            if self.noise_percent != 0.0:
                raise ConfigurationError("rbf streams do not support label noise")
        elif self.kind == "sea":
            if n_features not in (None, 3):
                raise ConfigurationError("sea streams have exactly 3 features")
            if n_classes not in (None, 2):
                raise ConfigurationError("sea streams are binary")
            n_features, n_classes = 3, 2
        elif self.kind == "hyperplane":
            n_features = 10 if n_features is None else n_features
            if n_classes not in (None, 2):
                raise ConfigurationError("hyperplane streams are binary")
            n_classes = 2
        else:  # csv
            if self.path is None or self.schema is None:
                raise ConfigurationError("csv streams need a path and a schema")
            n_classes = self.schema.n_classes
        if n_features is not None and n_features < 1:
            raise ConfigurationError("n_features must be positive")
        if n_classes is None or n_classes < 2:
            raise ConfigurationError("n_classes must be at least 2")
        object.__setattr__(self, "n_features", n_features)
        object.__setattr__(self, "n_classes", n_classes)

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.kind == "csv":
            return "csv"
        return f"{self.kind}_p{self.n_classes}"

    def fingerprint(self) -> str:
        """Stable digest over every field that affects the record sequence."""
        material = repr((
            self.kind, self.seed, self.n_features, self.n_classes,
            self.n_centroids, self.drift_speed, self.drift_points,
            self.noise_percent, self.path,
            None if self.schema is None else (
                self.schema.header, self.schema.label_column,
                self.schema.feature_columns,
                None if self.schema.label_map is None
                else tuple(sorted(self.schema.label_map.items())),
                self.schema.n_classes,
            ),
        ))
        return hashlib.sha256(material.encode("utf-8")).hexdigest()[:16]


def evenly_spaced_drift_points(n_drifts: int, horizon: int) -> tuple[int, ...]:
    """n_drifts abrupt change points evenly spread over [0, horizon)."""
    if n_drifts < 0 or horizon < 1:
        raise ConfigurationError("need n_drifts >= 0 and horizon >= 1")
    return tuple((i + 1) * horizon // (n_drifts + 1) for i in range(n_drifts))


class RbfStream:
    """Gaussian mixture over randomly placed centroids.

    Initialization order (fixed for reproducibility): centroid class
    labels assigned round-robin over the classes and then shuffled, so
    every class owns at least one centroid; then per-centroid centers
    (uniform per dimension in [0, 1)), selection weights, standard
    deviations, and unit drift directions. Each emitted record picks a
    centroid by weight and offsets its center by a random unit direction
    scaled by a Gaussian radius. With drift_speed > 0 every centroid
    moves that far along its drift direction after each record.
    """

    def __init__(self, spec: StreamSpec):
        self.spec = spec
        rng = Rng(spec.seed)
        n_cent, n_feat = spec.n_centroids, spec.n_features
        classes = [i % spec.n_classes for i in range(n_cent)]
        rng.shuffle(classes)
        self._classes = classes
        self._centers = np.array(
            [[rng.uniform() for _ in range(n_feat)] for _ in range(n_cent)]
        )
        weights = [rng.uniform() for _ in range(n_cent)]
        self._cum_weights = list(np.cumsum(weights))
        self._total_weight = self._cum_weights[-1]
        self._stddevs = [rng.uniform() for _ in range(n_cent)]
        self._rng = rng
        self._drift_dirs = np.empty((n_cent, n_feat))
        for c in range(n_cent):
            self._drift_dirs[c] = self._direction()
        self._seq = 0

    def _direction(self) -> np.ndarray:
        rng = self._rng
        n = self.spec.n_features
        while True:
            vec = np.array([rng.normal() for _ in range(n)])
            norm = float(np.linalg.norm(vec))
            if norm > 0.0:
                return vec / norm

    def __iter__(self):
        return self

    def __next__(self) -> StreamRecord:
        rng = self._rng
        draw = rng.uniform() * self._total_weight
        c = min(bisect.bisect_left(self._cum_weights, draw), len(self._classes) - 1)
        direction = self._direction()
        radius = rng.normal() * self._stddevs[c]
        features = self._centers[c] + direction * radius
        record = StreamRecord(features, self._classes[c], self._seq)
        self._seq += 1
        if self.spec.drift_speed > 0.0:
            self._centers += self.spec.drift_speed * self._drift_dirs
        return record

    @property
    def centers(self) -> np.ndarray:
        return self._centers.copy()


class SeaStream:
    """Three uniform features in [0, 10); label 0 iff f1 + f2 <= theta.

    theta starts at 8 and cycles through 9, 7, 9.5 as each configured
    drift point is passed (a record's seq >= point means the concept has
    changed). Label noise flips the rule output with probability
    noise_percent / 100.
    """

    def __init__(self, spec: StreamSpec):
        self.spec = spec
        self._rng = Rng(spec.seed)
        self._points = list(spec.drift_points)
        self._flip_prob = spec.noise_percent / 100.0
        self._seq = 0

    def theta_at(self, seq: int) -> float:
        concept = bisect.bisect_right(self._points, seq)
        return SEA_THETAS[concept % len(SEA_THETAS)]

    def __iter__(self):
        return self

    def __next__(self) -> StreamRecord:
        rng = self._rng
        features = np.array(
            [rng.uniform() * 10.0, rng.uniform() * 10.0, rng.uniform() * 10.0]
        )
        label = 0 if features[0] + features[1] <= self.theta_at(self._seq) else 1
        if self._flip_prob > 0.0 and rng.uniform() < self._flip_prob:
            label = 1 - label
        record = StreamRecord(features, label, self._seq)
        self._seq += 1
        return record


class HyperplaneStream:
    """Uniform features in [0, 1)^d split by a slowly rotating hyperplane.

    Label is 1 iff sum(w_i x_i) >= 0.5 * sum(w_i) (boundary inclusive).
    With drift_speed > 0 each weight moves by drift_speed * 0.001 along
    its direction after every record, and each direction flips sign with
    probability 0.1 per step. Initial directions are all +1.
    """

    def __init__(self, spec: StreamSpec):
        self.spec = spec
        rng = Rng(spec.seed)
        self._weights = np.array([rng.uniform() for _ in range(spec.n_features)])
        self._directions = np.ones(spec.n_features)
        self._flip_prob = spec.noise_percent / 100.0
        self._rng = rng
        self._seq = 0

    @property
    def weights(self) -> np.ndarray:
        return self._weights.copy()

    def label_for(self, features: np.ndarray) -> int:
        return 1 if float(self._weights @ features) >= 0.5 * float(self._weights.sum()) else 0

    def __iter__(self):
        return self

    def __next__(self) -> StreamRecord:
        rng = self._rng
        features = np.array([rng.uniform() for _ in range(self.spec.n_features)])
        label = self.label_for(features)
        if self._flip_prob > 0.0 and rng.uniform() < self._flip_prob:
            label = 1 - label
        record = StreamRecord(features, label, self._seq)
        self._seq += 1
        if self.spec.drift_speed > 0.0:
            self._weights += self.spec.drift_speed * 0.001 * self._directions
            for i in range(self.spec.n_features):
                if rng.uniform() < 0.1:
                    self._directions[i] = -self._directions[i]
        return record


class CsvStream:
    """Records from a delimited UTF-8 file, in file order.

    Arity is fixed by the first data row (or the schema's explicit
    feature columns); later rows that disagree are malformed.
    """

    def __init__(self, path: str, schema: CsvSchema):
        self.schema = schema
        self._path = path
        self._file = open(path, newline="", encoding="utf-8")
        self._reader = csv.reader(self._file)
        self._line = 0
        self._arity = None
        self._seq = 0
        if schema.header:
            try:
                next(self._reader)
                self._line += 1
            except StopIteration:
                pass

    def close(self):
        self._file.close()

    def __iter__(self):
        return self

    def __next__(self) -> StreamRecord:
        try:
            row = next(self._reader)
        except StopIteration:
            self._file.close()
            raise
        self._line += 1
        schema = self.schema
        if not row:
            raise ParseError(self._line, "blank row")
        label_col = schema.label_column if schema.label_column >= 0 else len(row) - 1
        if label_col >= len(row):
            raise ParseError(self._line, f"no label column {label_col} in {len(row)} fields")
        if schema.feature_columns is not None:
            feature_cols = schema.feature_columns
            if any(c >= len(row) for c in feature_cols):
                raise ParseError(self._line, "feature column out of range")
        else:
            feature_cols = tuple(i for i in range(len(row)) if i != label_col)
        try:
            features = np.array([float(row[c]) for c in feature_cols])
        except ValueError as exc:
            raise ParseError(self._line, f"bad feature value ({exc})") from exc
        if self._arity is None:
            self._arity = features.size
        elif features.size != self._arity:
            raise ParseError(
                self._line, f"expected {self._arity} features, found {features.size}"
            )
        raw_label = row[label_col].strip()
        if schema.label_map is not None:
            if raw_label not in schema.label_map:
                raise SchemaError(f"line {self._line}: unknown label {raw_label!r}")
            label = schema.label_map[raw_label]
        else:
            try:
                label = int(raw_label)
            except ValueError as exc:
                raise SchemaError(
                    f"line {self._line}: non-integer label {raw_label!r} without label_map"
                ) from exc
            if not (0 <= label < schema.n_classes):
                raise SchemaError(
                    f"line {self._line}: label {label} outside [0, {schema.n_classes})"
                )
        record = StreamRecord(features, label, self._seq)
        self._seq += 1
        return record


def make_stream(spec: StreamSpec):
    """Fresh generator state for a spec; same spec, same record sequence."""
    if spec.kind == "rbf":
        return RbfStream(spec)
    if spec.kind == "sea":
        return SeaStream(spec)
    if spec.kind == "hyperplane":
        return HyperplaneStream(spec)
    return CsvStream(spec.path, spec.schema)


def take(stream, n: int) -> list[StreamRecord]:
    """First n records (fewer if the stream runs out)."""
    out = []
    if n <= 0:
        return out
    for record in stream:
        out.append(record)
        if len(out) >= n:
            break
    return out


def write_stream_csv(spec: StreamSpec, count: int, path) -> None:
    """Materialize count records as CSV: features then label, with header.

    Floats are written with repr (shortest round-trip form), so the same
    spec always produces byte-identical files.
    """
    if count < 0:
        raise ConfigurationError("count must be non-negative")
    stream = make_stream(spec)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        n_features = spec.n_features
        if n_features is None:  # csv passthrough: peek at the first record
            records = take(stream, count)
            n_features = records[0].features.size if records else 0
            writer.writerow([f"f{i}" for i in range(n_features)] + ["label"])
            for record in records:
                writer.writerow([repr(v) for v in record.features] + [record.label_index])
            return
        writer.writerow([f"f{i}" for i in range(n_features)] + ["label"])
        for record in take(stream, count):
            writer.writerow([repr(float(v)) for v in record.features] + [record.label_index])
