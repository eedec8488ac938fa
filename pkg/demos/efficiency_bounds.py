"""Exact spectral gaps of the gradient proposal and the locally-balanced proposal.

Small models only: the transition matrices are built over all 2^D states.
"""
from gwg.analysis import verify_theorem1
from gwg.testkit import random_model

for family in ("ising-er", "rbm", "cubic"):
    for seed in range(3):
        r = verify_theorem1(random_model(family, 7, seed))
        print(f"{family:>8} seed {seed}: c = {r['c']:.3f}  gap(GWG) = {r['gap_grad']:.4f}  "
              f"c * gap(LB) = {r['c'] * r['gap_lb']:.4f}  ok = {r['passed']}")
