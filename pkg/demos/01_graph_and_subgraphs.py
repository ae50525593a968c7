"""
Building the observation graph and context subgraphs
====================================================

One time step of synthetic data becomes a spatial graph: every pair of
nodes closer than 50 km is connected. Each NWP grid point then gets a
2-hop ego subgraph, the unit sample for training and explanation.
"""

import numpy as np

from obsimpact.geograph import NodeKind, build_graph, khop_subgraph, normalized_adjacency
from obsimpact.synthdata import FieldSpec, sample_nwp_grid, sample_observations

spec = FieldSpec(seed=7, region=(30.0, 40.0, 120.0, 132.0))
nwp, labels = sample_nwp_grid(spec, t=1)
obs = sample_observations(spec, t=1, start_id=len(nwp))
nodes = nwp + obs
print(f"{len(nwp)} NWP nodes, {len(obs)} observations")

g = build_graph(nodes, radius_km=50.0)
print(f"{len(g.edges)} edges, mean degree {2 * len(g.edges) / len(nodes):.2f}")

# pick the NWP node with the most observation neighbours
obs_ids = {n.id for n in obs}
center = max((n.id for n in nwp), key=lambda i: sum(j in obs_ids for j in g.neighbors(i)))
sub = khop_subgraph(g, center, k=2)
kinds = [g.node(int(i)).kind.value for i in sub.node_ids]
print(f"subgraph of node {center}: {len(sub)} nodes, hops {np.bincount(sub.hops).tolist()}")
print("kinds:", sorted(set(kinds)))

# symmetric GCN normalisation with self loops
a = normalized_adjacency(sub)
print("normalised adjacency row sums:", np.round(a.sum(axis=1), 3))
