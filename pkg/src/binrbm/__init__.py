"""Variational training of restricted Boltzmann machines with ±1 synapses."""
from ._common import CapacityError, DomainError
from .gradient import (GradientEstimate, NoiseDraws, ReceptiveFieldStats, draw_noise,
                       elbo_estimate, loglik_grad, receptive_stats, solve_equivalent)
from .model import (Dataset, RbmModel, energy, exact_log_evidence, exact_log_partition,
                    generate_teacher_student, gibbs_sample, unnormalized_log_marginal)
from .msgpass import (EquivalentRbm, Magnetizations, MessageState, QuadratureSpec,
                      bethe_log_partition, gauss_hermite_expect, magnetizations, mp_fixed_point)
from .train import (TrainerConfig, TrainTrace, bayes_step, first_order_step, huang_step,
                    overlap, train)
from .variational import (PriorSpec, VariationalState, exact_elbo, exact_elbo_grad, fisher_diag,
                          kl_grad, kl_to_prior, mean_to_nat, nat_gap, nat_to_mean)

__version__ = "0.1.0"
