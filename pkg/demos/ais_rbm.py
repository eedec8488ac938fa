"""Annealed importance sampling of log Z for a small RBM, against enumeration."""
from gwg.ais import ais_convergence
from gwg.analysis import log_partition
from gwg.core import make_rng
from gwg.models import FactorizedBase
from gwg.testkit import random_model

model = random_model("rbm", 12, 0, H=6)
exact = log_partition(model)
for row in ais_convergence(model, FactorizedBase.uniform(12), [10, 100, 1000], n_chains=64,
                           n_reps=5, rng=make_rng(0)):
    print(f"T = {row['T']:5d}  mean {row['mean']:.4f}  std {row['std']:.4f}  exact {exact:.4f}")
