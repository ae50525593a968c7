"""Synthetic 500 hPa fields, NWP grids and multi-kind observations.

Each base variable (U, V, T, Q) is a constant plus a sum of Gaussian bumps.
Bump ``b`` of variable ``v`` has amplitude ``A``, width ``w`` (degrees) and a
centre that drifts with a constant velocity::

    c_lat(t) = lat0 + advection_speed * m * sin(theta) * t
    c_lon(t) = lon0 + advection_speed * m * cos(theta) * t
    f_v(lat, lon, t) = base_v + sum_b A * exp(-(dlat**2 + dlon**2) / (2 * w**2))

``dlat``/``dlon`` are the offsets from the centre wrapped onto a periodic
domain that extends the region box by ``3 * max_width`` on every side, so
bumps leaving the box re-enter on the other side. Wrapped offsets reach at
least 4 widths before the seam for any region wider than 2 widths, which
keeps the seam invisible while most bumps stay near the region. The two instrument
variables are affine proxies of the base ones::

    TB = 20 + 0.9 * T + 1000 * Q           (K)
    BA = 0.02 + 2 * Q - 5e-5 * (T - 255)    (rad)

All bump parameters come from ``numpy.random.default_rng((seed, variable))``
and observation locations/noise from ``default_rng((seed, t, 1))``, so every
output is a pure function of ``(spec, t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geograph import KIND_VARIABLES, OBSERVATION_KINDS, GeoPoint, MetNode, NodeKind, VARIABLES

FILE_MAGIC = "# obs-impact dataset v1"
FILE_HEADER = "id,kind,lat,lon,time,role,values"

BASE_VARIABLES = ("U", "V", "T", "Q")
_BASE = {"U": 10.0, "V": 0.0, "T": 255.0, "Q": 0.004}
_AMP = {"U": (-15.0, 15.0), "V": (-15.0, 15.0), "T": (-10.0, 10.0), "Q": (0.0, 0.003)}
WIDTH_RANGE = (2.5, 5.0)
# periodic domain = region + this many max widths on every side
WRAP_MARGIN = 3.0

DEFAULT_NOISE_SD = {"U": 1.0, "V": 1.0, "T": 0.5, "Q": 2e-4, "TB": 0.5, "BA": 5e-4}
DEFAULT_OBS_COUNT = 20


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class FieldSpec:
    seed: int = 0
    region: tuple = (20.0, 50.0, 100.0, 145.0)  # lat_min, lat_max, lon_min, lon_max
    n_bumps: int = 8
    advection_speed: float = 0.3
    noise_sd: dict = field(default_factory=lambda: dict(DEFAULT_NOISE_SD))
    grid_spacing: float = 0.45
    width_range: tuple = WIDTH_RANGE  # bump widths, degrees

    def __post_init__(self):
        lat0, lat1, lon0, lon1 = self.region
        if not (lat1 > lat0 and lon1 > lon0):
            raise ValueError(f"degenerate region {self.region}")
        if self.n_bumps < 1:
            raise ValueError("n_bumps must be >= 1")
        if any(sd < 0 for sd in self.noise_sd.values()):
            raise ValueError("noise_sd must be >= 0")
        if self.grid_spacing <= 0:
            raise ValueError("grid_spacing must be positive")
        if not 0 < self.width_range[0] <= self.width_range[1]:
            raise ValueError(f"bad width_range {self.width_range}")

    def noise(self, var: str) -> float:
        return float(self.noise_sd.get(var, 0.0))


@dataclass(frozen=True)
class BumpSet:
    amp: np.ndarray
    lat0: np.ndarray
    lon0: np.ndarray
    width: np.ndarray
    v_lat: np.ndarray  # degrees per step
    v_lon: np.ndarray


def bump_parameters(spec: FieldSpec, var: str) -> BumpSet:
    rng = np.random.default_rng((spec.seed, BASE_VARIABLES.index(var)))
    lat_min, lat_max, lon_min, lon_max = spec.region
    n = spec.n_bumps
    amp = rng.uniform(*_AMP[var], size=n)
    lat0 = rng.uniform(lat_min, lat_max, size=n)
    lon0 = rng.uniform(lon_min, lon_max, size=n)
    width = rng.uniform(*spec.width_range, size=n)
    heading = rng.uniform(0.0, 2 * math.pi, size=n)
    speed = spec.advection_speed * rng.uniform(0.5, 1.5, size=n)
    return BumpSet(amp, lat0, lon0, width, speed * np.sin(heading), speed * np.cos(heading))


def _wrap(delta, period):
    return (delta + period / 2.0) % period - period / 2.0


class Fields:
    """Continuous fields of one time step; call with lat/lon arrays."""

    def __init__(self, spec: FieldSpec, t: int):
        self.spec = spec
        self.t = t
        margin = WRAP_MARGIN * spec.width_range[1]
        lat_min, lat_max, lon_min, lon_max = spec.region
        self._period = (lat_max - lat_min + 2 * margin, lon_max - lon_min + 2 * margin)
        self._bumps = {v: bump_parameters(spec, v) for v in BASE_VARIABLES}

    def base(self, var, lat, lon):
        lat = np.asarray(lat, dtype=float)[..., None]
        lon = np.asarray(lon, dtype=float)[..., None]
        b = self._bumps[var]
        dlat = _wrap(lat - (b.lat0 + b.v_lat * self.t), self._period[0])
        dlon = _wrap(lon - (b.lon0 + b.v_lon * self.t), self._period[1])
        g = np.exp(-(dlat**2 + dlon**2) / (2 * b.width**2))
        return _BASE[var] + (b.amp * g).sum(axis=-1)

    def __call__(self, var, lat, lon):
        if var in BASE_VARIABLES:
            return self.base(var, lat, lon)
        t = self.base("T", lat, lon)
        q = self.base("Q", lat, lon)
        if var == "TB":
            return 20.0 + 0.9 * t + 1000.0 * q
        if var == "BA":
            return 0.02 + 2.0 * q - 5e-5 * (t - 255.0)
        raise KeyError(var)

    def values(self, variables, lat, lon) -> np.ndarray:
        return np.stack([self(v, lat, lon) for v in variables], axis=-1)


def gen_fields(spec: FieldSpec, t: int) -> Fields:
    return Fields(spec, t)


def grid_shape(spec: FieldSpec) -> tuple:
    lat_min, lat_max, lon_min, lon_max = spec.region
    n_lat = int(math.floor((lat_max - lat_min) / spec.grid_spacing + 1e-9)) + 1
    n_lon = int(math.floor((lon_max - lon_min) / spec.grid_spacing + 1e-9)) + 1
    return n_lat, n_lon


def grid_points(spec: FieldSpec):
    n_lat, n_lon = grid_shape(spec)
    lat = spec.region[0] + spec.grid_spacing * np.arange(n_lat)
    lon = spec.region[2] + spec.grid_spacing * np.arange(n_lon)
    lat2, lon2 = np.meshgrid(lat, lon, indexing="ij")
    return lat2.ravel(), lon2.ravel()


def sample_nwp_grid(spec: FieldSpec, t: int, start_id: int = 0):
    """NWP nodes carrying the field at ``t - 1`` plus their labels at ``t``.

    Returns ``(nodes, labels)`` with ``labels`` an ``(n, 4)`` array aligned
    with ``nodes``.
    """
    lat, lon = grid_points(spec)
    attrs = gen_fields(spec, t - 1).values(BASE_VARIABLES, lat, lon)
    labels = gen_fields(spec, t).values(BASE_VARIABLES, lat, lon)
    nodes = [
        MetNode(start_id + i, NodeKind.NWP, GeoPoint(float(lat[i]), float(lon[i])), t, attrs[i])
        for i in range(len(lat))
    ]
    return nodes, labels


def sample_observations(spec: FieldSpec, t: int, counts=None, start_id: int = 0):
    """Noisy observations at time ``t``; ``counts`` maps kind -> number."""
    if counts is None:
        counts = {k: DEFAULT_OBS_COUNT for k in OBSERVATION_KINDS}
    counts = {NodeKind.parse(k) if isinstance(k, str) else k: int(n) for k, n in counts.items()}
    if any(n < 0 for n in counts.values()):
        raise ValueError("observation counts must be >= 0")
    rng = np.random.default_rng((spec.seed, t, 1))
    fields = gen_fields(spec, t)
    lat_min, lat_max, lon_min, lon_max = spec.region
    nodes = []
    next_id = start_id
    for kind in OBSERVATION_KINDS:
        n = counts.get(kind, 0)
        if n == 0:
            continue
        lat = rng.uniform(lat_min, lat_max, size=n)
        lon = rng.uniform(lon_min, lon_max, size=n)
        variables = kind.variables
        vals = fields.values(variables, lat, lon)
        sd = np.array([spec.noise(v) for v in variables])
        vals = vals + rng.standard_normal(vals.shape) * sd
        for i in range(n):
            nodes.append(MetNode(next_id, kind, GeoPoint(float(lat[i]), float(lon[i])), t, vals[i]))
            next_id += 1
    return nodes


@dataclass(eq=False)
class TimeStep:
    time: int
    nodes: list
    labels: dict  # NWP node id -> (4,) array of U, V, T, Q at ``time``

    def __eq__(self, other):
        if not isinstance(other, TimeStep):
            return NotImplemented
        return (
            self.time == other.time
            and self.nodes == other.nodes
            and self.labels.keys() == other.labels.keys()
            and all(np.array_equal(self.labels[k], other.labels[k]) for k in self.labels)
        )


@dataclass(eq=False)
class Dataset:
    split: str
    steps: list

    def __post_init__(self):
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be train or test, got {self.split!r}")

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return self.split == other.split and self.steps == other.steps

    @property
    def n_nodes(self):
        return sum(len(s.nodes) for s in self.steps)

    def nodes(self):
        for step in self.steps:
            yield from step.nodes


def make_dataset(spec: FieldSpec, times, split: str, counts=None) -> Dataset:
    steps = []
    next_id = 0
    for t in times:
        nwp, labels = sample_nwp_grid(spec, t, start_id=next_id)
        next_id += len(nwp)
        obs = sample_observations(spec, t, counts, start_id=next_id)
        next_id += len(obs)
        steps.append(TimeStep(t, nwp + obs, {n.id: labels[i] for i, n in enumerate(nwp)}))
    return Dataset(split, steps)


def _fmt(values) -> str:
    return ";".join(repr(float(v)) for v in values)


def save_dataset(dataset: Dataset, path) -> None:
    lines = [FILE_MAGIC, f"# split={dataset.split}", FILE_HEADER]
    for step in dataset.steps:
        for n in step.nodes:
            head = f"{n.id},{n.kind.value},{n.location.lat!r},{n.location.lon!r},{step.time}"
            lines.append(f"{head},attr,{_fmt(n.attributes)}")
            if n.id in step.labels:
                lines.append(f"{head},label,{_fmt(step.labels[n.id])}")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_dataset(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        text = fh.read().splitlines()
    if not text or text[0].strip() != FILE_MAGIC:
        raise DatasetFormatError(f"line 1, column 1: expected {FILE_MAGIC!r}")
    meta = {}
    lineno = 1
    header_seen = False
    steps: dict[int, TimeStep] = {}
    pending_labels = []
    for lineno, line in enumerate(text[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            meta[key.strip()] = value.strip()
            continue
        if not header_seen:
            if line.strip() != FILE_HEADER:
                raise DatasetFormatError(f"line {lineno}, column 1: expected header {FILE_HEADER!r}")
            header_seen = True
            continue
        cols = line.split(",")
        if len(cols) != 7:
            raise DatasetFormatError(f"line {lineno}, column {min(len(cols), 7) + 1}: expected 7 columns, got {len(cols)}")

        def parse(col, conv):
            try:
                return conv(cols[col])
            except ValueError as exc:
                raise DatasetFormatError(f"line {lineno}, column {col + 1}: {exc}") from None

        node_id = parse(0, int)
        try:
            kind = NodeKind.parse(cols[1])
        except ValueError as exc:
            raise DatasetFormatError(f"line {lineno}, column 2: {exc}") from None
        lat, lon = parse(2, float), parse(3, float)
        time = parse(4, int)
        role = cols[5].strip()
        values = parse(6, lambda s: [float(x) for x in s.split(";")] if s else [])
        step = steps.setdefault(time, TimeStep(time, [], {}))
        if role == "attr":
            try:
                step.nodes.append(MetNode(node_id, kind, GeoPoint(lat, lon), time, np.array(values)))
            except ValueError as exc:
                raise DatasetFormatError(f"line {lineno}, column 7: {exc}") from None
        elif role == "label":
            if kind is not NodeKind.NWP or len(values) != len(BASE_VARIABLES):
                raise DatasetFormatError(f"line {lineno}, column 7: labels must be 4 values on an NWP node")
            if not all(math.isfinite(v) for v in values):
                raise DatasetFormatError(f"line {lineno}, column 7: non-finite label")
            pending_labels.append((lineno, time, node_id, np.array(values)))
        else:
            raise DatasetFormatError(f"line {lineno}, column 6: unknown role {role!r}")
    if not header_seen:
        raise DatasetFormatError(f"line {lineno}, column 1: missing header")
    known = {t: {n.id for n in s.nodes} for t, s in steps.items()}
    for lineno, time, node_id, values in pending_labels:
        if node_id not in known[time]:
            raise DatasetFormatError(f"line {lineno}, column 1: label for unknown node {node_id}")
        steps[time].labels[node_id] = values
    return Dataset(meta.get("split", "train"), [steps[t] for t in sorted(steps)])


__all__ = [
    "BASE_VARIABLES",
    "Dataset",
    "DatasetFormatError",
    "FieldSpec",
    "Fields",
    "TimeStep",
    "VARIABLES",
    "KIND_VARIABLES",
    "gen_fields",
    "grid_points",
    "grid_shape",
    "load_dataset",
    "make_dataset",
    "sample_nwp_grid",
    "sample_observations",
    "save_dataset",
]
