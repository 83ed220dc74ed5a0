"""LQG control through static feedback on input-output histories."""

from .behavioral import (BehavioralGain, BehavioralSystem, RankDeficiencyError, RiccatiPair,
                         behavioral_state, cost_and_gradient, cost_of_gain, current_output,
                         coupled_riccati_residuals, gain_projector, gradient_of_gain,
                         lift_cost, lift_system, lifted_rollout, solve_behavioral_lqg,
                         sparsity_partition, staticization_map, staticize)
from .classical_lqg import (AltController, AssumptionError, DareSolution, DynamicController,
                            convert_alt_form, lqg_compensator, lqg_design, solve_dare)
from .imitation import (ExpertData, ExpertLog, assemble_expert_data, learn_gain,
                        load_expert_csv, sufficient_samples, validate_by_rollout)
from .linalg import ConvergenceError, UnstableError
from .lti_system import (LqgWeights, LtiSystem, Trajectory, monte_carlo_cost, simulate,
                         validate_assumptions)
from .policy_opt import (ArmijoParams, DescentTrace, LineSearchError, armijo_step,
                         grad_descent_behavioral, grad_descent_dynamic,
                         stabilizing_compensator, stabilizing_init)

__all__ = [name for name in dir() if not name.startswith("_")]
