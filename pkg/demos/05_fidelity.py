"""
Fidelity of the explanations
============================

Occlude each subgraph's top (Fidelity+) or bottom (Fidelity-) ranked
nodes and measure the drop in mean R2. A faithful ranking should hurt
more than a random one when its top nodes are removed.
"""

from obsimpact.config import RunConfig
from obsimpact.explain import ExplanationMethod
from obsimpact.fidelity import RANDOM, FidelityEvaluator
from obsimpact.neuralcore import SampleSet, Standardizer, finetune, pretrain
from obsimpact.synthdata import make_dataset

# small region, so train a few more epochs than the full-size default
cfg = RunConfig(lat_max=38.0, lon_max=125.0, train_steps=20, test_steps=5, epochs_finetune=6)
spec = cfg.field_spec()
train = make_dataset(spec, cfg.train_times, "train", cfg.counts())
test = make_dataset(spec, cfg.test_times, "test", cfg.counts())
st = Standardizer.fit(train)
s_train, s_test = SampleSet(train, st), SampleSet(test, st)
mc = cfg.model_config()
weights = finetune(s_train, mc, pretrain(s_train, mc))

ev = FidelityEvaluator(weights, s_test, seed=cfg.seed)
print(f"base mean R2 {ev.base_accuracy:.4f}")
print("method    fraction  fidelity+  fidelity-")
for m in [*ExplanationMethod, RANDOM]:
    for f in cfg.fractions:
        r = ev.result(m, f)
        print(f"{r.method:8s}  {f:8.1f}  {r.fidelity_plus:9.4f}  {r.fidelity_minus:9.4f}")
