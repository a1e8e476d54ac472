"""How often the planted ordinal driver tops the mean |SHAP| ranking across seeds."""
import argparse
import tempfile
from collections import Counter
from pathlib import Path

from edu_outcomes.pipeline import PipelineConfig, run_pipeline

ROOT = Path(__file__).resolve().parents[1]

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(ROOT / "configs" / "sa_acceptance.yaml"))
    ap.add_argument("--seeds", type=int, default=10)
    a = ap.parse_args()
    cfg = PipelineConfig.load(a.config)
    tops = Counter()
    with tempfile.TemporaryDirectory() as tmp:
        for s in range(a.seeds):
            res = run_pipeline(cfg.with_overrides(seed=s), stages=("explain",), out_dir=f"{tmp}/seed{s}")
            top, v = res.shap_ranking[0]
            second, v2 = res.shap_ranking[1]
            tops[top] += 1
            print(f"seed {s}: {top} ({v:.3f}) ahead of {second} ({v2:.3f})")
    print(dict(tops))
