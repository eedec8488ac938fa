"""Gradient-informed MCMC for discrete distributions."""
from .core import (DiscreteState, EnergyModel, EnumerationError, SamplerFault, all_states,
                   embed, flipdim, hamming_window, make_rng, onehot, setdim)
from .models import (CubicModel, FactorizedBase, FhmmPosterior, IsingModel, PottsModel,
                     RbmModel, base_fit, base_logp)
from .samplers import (GWG, Gibbs, HammingBall, LocallyBalanced, RbmBlockGibbs, gwg_step,
                       run_chain)

__version__ = "0.1.0"
