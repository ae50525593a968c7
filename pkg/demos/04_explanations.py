"""
Observation impact with SA, Grad-CAM and LRP
============================================

Each method scores every node of every context subgraph. Scores are
averaged per node over the subgraphs that contain it, then per
observation type.
"""

from obsimpact.config import RunConfig
from obsimpact.explain import ExplanationMethod, ImpactReport, impact_report
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

reports = {m: impact_report(m, weights, s_test) for m in ExplanationMethod}
kinds = list(reports[ExplanationMethod.SA].by_kind)
print("kind       " + "  ".join(f"{m.value:>8s}" for m in reports))
for k in kinds:
    cols = [ImpactReport.normalized(r.by_kind)[k] for r in reports.values()]
    print(f"{k.value:9s}  " + "  ".join(f"{c:8.3f}" for c in cols))
