"""Fit a 4x4 spin lattice by PCD with a GWG inner loop and print the RMSE history."""
import numpy as np

from gwg import GWG, IsingModel
from gwg.core import make_rng
from gwg.training import TrainConfig, ising_gibbs_sweeps, pcd_train

truth = IsingModel.lattice(4, 0.25, spin=True)
data = ising_gibbs_sweeps(truth, 2000, 200, make_rng(0))
init = IsingModel(np.zeros((truth.dim, truth.dim)), spin=True)
cfg = TrainConfig(lr=3e-3, iterations=600, checkpoint_every=100)
res = pcd_train(init, data, GWG(), cfg, make_rng(1), J_true=truth.theta * truth.J)
for h in res.history:
    print(f"iter {h['iteration']:4d}  rmse {h['rmse']:.4f}")
