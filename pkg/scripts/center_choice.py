#!/usr/bin/env python3
"""Which cluster-average curve should be classified: the DBA center or the pointwise mean?

Each preset is replicated with Gaussian noise, the members are averaged both
ways, and both averages are classified. A label is counted correct when it
matches the preset's archetype.

    python3 scripts/center_choice.py --noise 0 0.005 0.01 0.02 --trials 20
"""

import argparse
from dataclasses import dataclass, field

from rescurve.archetype import classify
from rescurve.cluster import dba_barycenter
from rescurve.synth import PRESETS, generate_dataset


@dataclass
class Experiment:
    presets: list = field(default_factory=lambda: sorted(PRESETS))
    members: int = 20
    noise: list = field(default_factory=lambda: [0.0, 0.005, 0.01, 0.02])
    trials: int = 10


def hit_rates(exp: Experiment, name: str, sigma: float) -> tuple[float, float]:
    want = PRESETS[name].label
    dba_hits = mean_hits = 0
    for trial in range(exp.trials):
        cs, _ = generate_dataset({name: exp.members}, noise_sigma=sigma, seed=trial)
        X = cs.matrix()
        mean = X.mean(axis=0)
        center = dba_barycenter(X, mean)
        dba_hits += classify(center).label == want
        mean_hits += classify(mean).label == want
    return dba_hits / exp.trials, mean_hits / exp.trials


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--noise", type=float, nargs="+")
    ap.add_argument("--trials", type=int)
    args = ap.parse_args()
    exp = Experiment()
    if args.noise:
        exp.noise = args.noise
    if args.trials:
        exp.trials = args.trials

    print(f"{'preset':<13} {'sigma':>6} {'DBA':>6} {'mean':>6}")
    for name in exp.presets:
        for sigma in exp.noise:
            dba, mean = hit_rates(exp, name, sigma)
            print(f"{name:<13} {sigma:>6.3f} {dba:>6.2f} {mean:>6.2f}")


if __name__ == "__main__":
    main()
