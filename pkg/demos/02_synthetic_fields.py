"""
Synthetic fields and observations
=================================

U, V, T and Q are sums of drifting Gaussian bumps. Satellite kinds see
TB and BA, affine proxies of T and Q. Labels are the noise-free fields.
"""

import numpy as np

from obsimpact.geograph import OBSERVATION_KINDS
from obsimpact.synthdata import FieldSpec, gen_fields, grid_points, sample_observations

spec = FieldSpec(seed=0, region=(30.0, 50.0, 115.0, 140.0), advection_speed=1.0, width_range=(1.5, 3.0))
lat, lon = grid_points(spec)
for t in (1, 10, 20):
    f = gen_fields(spec, t)
    T = f("T", lat, lon)
    print(f"t={t:2d}  T range {T.min():6.1f}..{T.max():6.1f} K   Q mean {f('Q', lat, lon).mean():.5f}")

# the proxies are exact affine maps of the base fields
f = gen_fields(spec, 1)
tb = f("TB", lat, lon)
print("TB - (20 + 0.9 T + 1000 Q) max:", np.abs(tb - (20 + 0.9 * f("T", lat, lon) + 1000 * f("Q", lat, lon))).max())

obs = sample_observations(spec, t=1)
for kind in OBSERVATION_KINDS:
    rows = [n for n in obs if n.kind is kind]
    print(f"{kind.value:9s} n={len(rows):2d} variables={','.join(kind.variables)}")
