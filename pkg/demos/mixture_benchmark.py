"""
Masked-recovery benchmark on synthetic mixture data
===================================================

Each replication draws a fresh 50x20 binary table from a random
three-component mixture, hides cells under a chosen mechanism, refits,
and scores the argmax imputations against the hidden truth.
"""

from catmix import MechanismSpec, run_replications

REPS = 5  # the acceptance run uses 20; five keeps this demo quick

for mechanism in (MechanismSpec.mcar(), MechanismSpec.mar(),
                  MechanismSpec.mnar()):
    report = run_replications("mixture", mechanism, reps=REPS, seed=42)
    acc = report.values("accuracy")
    print(f"{mechanism.kind}:")
    print(f"  accuracy per replication: "
          + " ".join(f"{a:.3f}" for a in acc))
    for name in report.metric_names:
        print(f"  {name}: mean={report.means[name]:.3f} "
              f"sd={report.sds[name]:.3f}")

# MCAR loses cells uniformly; MAR ties missingness of columns 2..p to
# the first column; MNAR ties each cell's missingness to its own hidden
# value.  Accuracy degrades in that order, while the modal component
# count stays at the generating k=3 for most replications.
