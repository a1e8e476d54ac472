"""Full SA-shaped run on generated data; prints the performance table and top SHAP features."""
import argparse
import time
from pathlib import Path

from edu_outcomes.pipeline import PipelineConfig, run_pipeline

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "configs" / "sa_synthetic.yaml"))
    ap.add_argument("--out", default=None)
    ap.add_argument("--seed", type=int, default=None)
    a = ap.parse_args()
    cfg = PipelineConfig.load(a.config).with_overrides(seed=a.seed, output_dir=a.out)
    t0 = time.perf_counter()
    res = run_pipeline(cfg)
    print(f"{'model':8s} {'acc':>6s} {'sens':>6s} {'spec':>6s} {'auc':>6s}")
    for fam, rep in [*res.reports.items(), ("majority", res.baseline)]:
        s = rep.summary()
        print(f"{fam:8s} " + " ".join(f"{100 * s[m]:6.1f}" for m in ("accuracy", "sensitivity", "specificity", "auc")))
    print("top SHAP features:")
    for name, v in res.shap_ranking[:5]:
        print(f"  {name:28s} {v:.4f}")
    print(f"outputs in {res.out_dir} ({time.perf_counter() - t0:.1f}s)")
