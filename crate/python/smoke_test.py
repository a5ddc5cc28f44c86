"""Exercise the bindings end to end: synth, sample, train, evaluate, score."""
import json
import math
import tempfile

import pycrowdrank as cr

p = cr.global_probs(1.0, [1.0, 2.0, 3.0])
assert abs(sum(p) - 1.0) < 1e-12 and p[0] > p[1] > p[2]
assert cr.relative_anchors() == [-2.0, -1.0, 0.0, 1.0, 2.0]
assert cr.pairwise_votes_to_distribution([0, 0, 1, 3, 1]) == [0.0, 0.0, 0.2, 0.6, 0.2]

b = cr.hybrid_loss(2.0, 0.0, [0, 1, 0], [1, 0, 0], [0, 0, 1, 0, 0])
assert b["lambda"] == 1.0
assert abs(b["global1"] + math.log(1 / (1 + 2 * math.exp(-1)))) < 1e-12
assert set(b["grads"]) == {"d_s1", "d_s2", "d_global_anchors", "d_relative_log_gaps"}

pairs = cr.sample_pairs(["a", "b", "c"], [[1, 0], [0, 1], [1, 1]], pairs_per_item=4, seed=3)
assert len(pairs) == 12 and all(x != y for x, y in pairs)
assert pairs == cr.sample_pairs(["a", "b", "c"], [[1, 0], [0, 1], [1, 1]], pairs_per_item=4, seed=3, threads=2)

s = cr.SynthData.generate(json.dumps({"n_items": 200, "n_clips": 2}))
ds = s.dataset
assert ds.n_items() == 200 and ds.n_pairs() == 1000
cfg = json.dumps({"base_lr": 3e-2, "seed": 1})
model, history = cr.train_model(ds, cfg)
assert len(history) == 8 and history[-1]["mean_total"] < history[0]["mean_total"]
rho = s.rank_recovery(model)
assert rho > 0.9, rho

report = cr.evaluate(model, ds.subset("test"), ds.subset("train"))
assert len(report["pairwise"]) == 4 and report["auc"] > 0.9
assert "mean_Lg" in report and report["roc"][0]["fpr"] == 0.0

with tempfile.TemporaryDirectory() as d:
    model.save(f"{d}/m.ckpt")
    assert cr.Model.load(f"{d}/m.ckpt") == model
    s.write(f"{d}/data")
    again = cr.Dataset.load(f"{d}/data/items.jsonl", f"{d}/data/pairs.jsonl")
    assert again.ids() == ds.ids()

raw, norm, peak = cr.Model.init(feature_dim=1, plan=json.dumps(
    {"input": {"feature_vector": {"dim": 1}}, "layers": [{"affine": {"out_dim": 1}}], "backbone_layers": 0}
)).score_sequence([[2.0], [4.0], [6.0]])
assert min(norm) == 0.0 and max(norm) == 1.0

auc, _ = cr.roc([0.1, 0.4, 0.35, 0.8], [False, False, True, True])
assert auc == 0.75
print(f"ok: spearman {rho:.4f}, auc {report['auc']:.4f}")
