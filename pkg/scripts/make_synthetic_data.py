"""Write SA- and SL-style synthetic input CSVs (plus their schemas) under data/."""
import argparse
import sys
from pathlib import Path

from edu_outcomes.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parents[1] / "data"))
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=20240611)
    a = ap.parse_args()
    for kind in ("sa", "sl"):
        code = main(["synth", "--kind", kind, "--n", str(a.n), "--seed", str(a.seed), "--out", f"{a.out}/{kind}"])
        if code:
            sys.exit(code)
