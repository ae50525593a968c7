"""
Pretraining, fine-tuning and the vanilla ablation
=================================================

A reconstruction-pretrained encoder is fine-tuned on the NWP-to-analysis
regression and compared with the same network trained from scratch.
Metrics are in standardised units, per variable.
"""

from obsimpact.config import RunConfig
from obsimpact.neuralcore import SampleSet, Standardizer, compute_metrics, finetune, predict_samples, pretrain
from obsimpact.synthdata import make_dataset

cfg = RunConfig(lat_max=40.0, lon_max=127.0, train_steps=20, test_steps=10)
spec = cfg.field_spec()
train = make_dataset(spec, cfg.train_times, "train", cfg.counts())
test = make_dataset(spec, cfg.test_times, "test", cfg.counts())
st = Standardizer.fit(train)
s_train, s_test = SampleSet(train, st), SampleSet(test, st)
print(f"{len(s_train)} training subgraphs, mean size {s_train.sizes.mean():.1f}")

mc = cfg.model_config()
history = []
encoder = pretrain(s_train, mc, history)
print("pretrain loss per epoch:", [round(l, 4) for _, l in history])

for name, enc in (("pretrained", encoder), ("vanilla", None)):
    w = finetune(s_train, mc, enc)
    m = compute_metrics(predict_samples(w, s_test), s_test.targets)
    print(f"\n{name}: mean R2 {m.mean_r2:.4f}")
    for var, rmse, mae, r2, ev in m.rows():
        print(f"  {var}  rmse {rmse:.4f}  mae {mae:.4f}  r2 {r2:.4f}  ev {ev:.4f}")
