"""Odds ratios and percent changes for a list of logistic weights (one `name=weight` per argument)."""
import sys

from edu_outcomes.interpret import odds_ratios

if __name__ == "__main__":
    pairs = [a.rsplit("=", 1) for a in sys.argv[1:]] or [("Urban_Rural: urban", "1.35"), ("RateToilet: poor", "-1.85")]
    print(f"{'variable':28s} {'weight':>8s} {'OR':>8s} {'%change':>9s}")
    for row in odds_ratios([p[0] for p in pairs], [float(p[1]) for p in pairs]):
        print(f"{row.feature:28s} {row.weight:8.4f} {row.odds_ratio:8.4f} {row.pct_change:9.2f}")
