"""Meteorological proximity graph and k-hop context subgraphs.

Nodes are NWP grid points or observations of one of eleven instrument
kinds. Two nodes are adjacent when their great-circle distance is at most
``radius_km``. Samples for the estimator are ego-centric subgraphs around
NWP nodes.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

EARTH_RADIUS_KM = 6371.0
DEFAULT_RADIUS_KM = 50.0
DEFAULT_K = 2
PRESSURE_LEVEL_HPA = 500.0

VARIABLES = ("U", "V", "T", "Q", "TB", "BA")


class NodeKind(enum.Enum):
    NWP = "NWP"
    AIRCRAFT = "AIRCRAFT"
    GPSRO = "GPSRO"
    SONDE = "SONDE"
    AMV = "AMV"
    AMSUA = "AMSUA"
    AMSR2 = "AMSR2"
    ATMS = "ATMS"
    CRIS = "CRIS"
    GK2A = "GK2A"
    IASI = "IASI"
    MHS = "MHS"

    @property
    def variables(self) -> tuple[str, ...]:
        return KIND_VARIABLES[self]

    @property
    def is_observation(self) -> bool:
        return self is not NodeKind.NWP

    @classmethod
    def parse(cls, name: str) -> "NodeKind":
        try:
            return cls[name.strip().upper().replace("-", "")]
        except KeyError:
            raise ValueError(f"unknown node kind {name!r}") from None


_SATELLITE = ("AMV", "AMSUA", "AMSR2", "ATMS", "CRIS", "GK2A", "IASI", "MHS")

KIND_VARIABLES: dict[NodeKind, tuple[str, ...]] = {
    NodeKind.NWP: ("U", "V", "T", "Q"),
    NodeKind.AIRCRAFT: ("U", "V", "T"),
    NodeKind.GPSRO: ("BA",),
    NodeKind.SONDE: ("U", "V", "T", "Q"),
    **{NodeKind[name]: ("TB",) for name in _SATELLITE},
}

OBSERVATION_KINDS = tuple(k for k in NodeKind if k.is_observation)


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float
    pressure_level: float = PRESSURE_LEVEL_HPA

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon < 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180)")
        if not self.pressure_level > 0:
            raise ValueError("pressure level must be positive")


@dataclass(frozen=True, eq=False)
class MetNode:
    id: int
    kind: NodeKind
    location: GeoPoint
    time_index: int
    attributes: np.ndarray

    def __post_init__(self):
        attrs = np.asarray(self.attributes, dtype=float).reshape(-1)
        if attrs.shape[0] != len(self.kind.variables):
            raise ValueError(
                f"node {self.id}: {self.kind.value} carries {len(self.kind.variables)} "
                f"variables, got {attrs.shape[0]}"
            )
        if not np.all(np.isfinite(attrs)):
            raise ValueError(f"node {self.id}: non-finite attribute")
        attrs.setflags(write=False)
        object.__setattr__(self, "attributes", attrs)

    def __eq__(self, other):
        if not isinstance(other, MetNode):
            return NotImplemented
        return (
            self.id == other.id
            and self.kind is other.kind
            and self.location == other.location
            and self.time_index == other.time_index
            and np.array_equal(self.attributes, other.attributes)
        )

    __hash__ = None


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in kilometres on a sphere of radius 6371 km."""
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dphi = p2 - p1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlmb / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def haversine_matrix(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Vectorised haversine; broadcasting over the inputs (degrees)."""
    p1, p2 = np.radians(lat1), np.radians(lat2)
    dlmb = np.radians(np.asarray(lon2) - np.asarray(lon1))
    h = np.sin((p2 - p1) / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def _unit_vectors(lat, lon):
    phi, lmb = np.radians(lat), np.radians(lon)
    return np.column_stack([np.cos(phi) * np.cos(lmb), np.cos(phi) * np.sin(lmb), np.sin(phi)])


@dataclass(frozen=True, eq=False)
class MetGraph:
    nodes: tuple
    edges: tuple  # sorted (id, id) pairs with first < second
    radius_km: float = DEFAULT_RADIUS_KM
    _index: dict = field(default=None, repr=False)
    _neighbors: dict = field(default=None, repr=False)

    def __post_init__(self):
        index = {n.id: n for n in self.nodes}
        nbrs = {n.id: [] for n in self.nodes}
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_neighbors", {k: tuple(sorted(v)) for k, v in nbrs.items()})

    def node(self, node_id: int) -> MetNode:
        return self._index[node_id]

    def neighbors(self, node_id: int) -> tuple:
        return self._neighbors[node_id]

    def __len__(self):
        return len(self.nodes)


def build_graph(nodes, radius_km: float = DEFAULT_RADIUS_KM) -> MetGraph:
    """Connect every pair of distinct nodes within ``radius_km``.

    Candidate pairs come from a KD-tree over unit vectors (chord distance is
    monotone in arc length); each candidate is then confirmed with the
    haversine formula so the edge set matches the distance rule exactly.
    """
    nodes = tuple(nodes)
    ids = [n.id for n in nodes]
    if len(set(ids)) != len(ids):
        seen, dup = set(), None
        for i in ids:
            if i in seen:
                dup = i
                break
            seen.add(i)
        raise ValueError(f"duplicate node id {dup}")
    if len(nodes) < 2:
        return MetGraph(nodes, (), radius_km)

    lat = np.array([n.location.lat for n in nodes])
    lon = np.array([n.location.lon for n in nodes])
    chord = 2.0 * math.sin(min(math.pi, radius_km / EARTH_RADIUS_KM) / 2.0)
    tree = cKDTree(_unit_vectors(lat, lon))
    pairs = tree.query_pairs(chord * (1 + 1e-9) + 1e-12, output_type="ndarray")
    if len(pairs):
        dist = haversine_matrix(lat[pairs[:, 0]], lon[pairs[:, 0]], lat[pairs[:, 1]], lon[pairs[:, 1]])
        pairs = pairs[dist <= radius_km]
    id_arr = np.asarray(ids)
    a, b = id_arr[pairs[:, 0]], id_arr[pairs[:, 1]]
    lo, hi = np.minimum(a, b), np.maximum(a, b)
    order = np.lexsort((hi, lo))
    edges = tuple(zip(lo[order].tolist(), hi[order].tolist()))
    return MetGraph(nodes, edges, radius_km)


@dataclass(frozen=True, eq=False)
class ContextSubgraph:
    """Induced k-hop ego subgraph; ``node_ids[0]`` is the NWP centre."""

    center_id: int
    node_ids: np.ndarray
    adjacency: np.ndarray
    k: int
    hops: np.ndarray = None

    def __len__(self):
        return len(self.node_ids)

    def permuted(self, perm) -> "ContextSubgraph":
        """Same subgraph with nodes reordered by ``perm`` (centre need not stay first)."""
        perm = np.asarray(perm)
        hops = None if self.hops is None else self.hops[perm]
        return ContextSubgraph(
            self.center_id, self.node_ids[perm], self.adjacency[np.ix_(perm, perm)], self.k, hops
        )


def bfs_hops(g: MetGraph, center: int, k: int) -> dict:
    """Hop distance of every node within ``k`` hops of ``center``."""
    dist = {center: 0}
    queue = deque([center])
    while queue:
        u = queue.popleft()
        if dist[u] == k:
            continue
        for v in g.neighbors(u):
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def khop_subgraph(g: MetGraph, center: int, k: int = DEFAULT_K) -> ContextSubgraph:
    if k < 1:
        raise ValueError("k must be >= 1")
    if g.node(center).kind is not NodeKind.NWP:
        raise ValueError(f"centre {center} is not an NWP node")
    dist = bfs_hops(g, center, k)
    order = sorted(dist, key=lambda n: (dist[n], n))
    pos = {n: i for i, n in enumerate(order)}
    adj = np.zeros((len(order), len(order)), dtype=np.int8)
    for n in order:
        i = pos[n]
        for m in g.neighbors(n):
            j = pos.get(m)
            if j is not None:
                adj[i, j] = 1
    node_ids = np.array(order, dtype=np.int64)
    hops = np.array([dist[n] for n in order], dtype=np.int64)
    for arr in (node_ids, adj, hops):
        arr.setflags(write=False)
    return ContextSubgraph(center, node_ids, adj, k, hops)


def normalized_adjacency(s) -> np.ndarray:
    """Symmetric GCN normalisation D^-1/2 (A + I) D^-1/2.

    Accepts a :class:`ContextSubgraph` or a raw adjacency matrix.
    """
    a = s.adjacency if isinstance(s, ContextSubgraph) else np.asarray(s)
    a_tilde = a.astype(float) + np.eye(a.shape[0])
    inv_sqrt = 1.0 / np.sqrt(a_tilde.sum(axis=1))
    return inv_sqrt[:, None] * a_tilde * inv_sqrt[None, :]
