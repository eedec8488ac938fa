"""Compare GWG, single-site Gibbs and Hamming-ball samplers on a small spin lattice.

    python demos/sample_lattice_ising.py [steps]
"""
import sys

from gwg import GWG, Gibbs, HammingBall, IsingModel, run_chain
from gwg.core import make_rng
from gwg.diagnostics import cost_report

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 5000
model = IsingModel.lattice(8, 0.25, spin=True)
rng = make_rng(0)
x_ref = rng.integers(2, size=model.dim)
x0 = rng.integers(2, size=(16, model.dim))

for sampler in (GWG(), Gibbs(1), HammingBall(8, 1)):
    _, trace = run_chain(model, sampler, x0, steps, make_rng(1), x_ref=x_ref)
    rep = cost_report(trace)
    print(f"{sampler.name:>10}  accept {rep['acceptance_rate']:.3f}  "
          f"ESS {rep['ess']:8.1f}  ESS/s {rep['ess_per_second']:8.1f}")
