"""Solution-operator approximation for backward SDEs over Wiener chaos coefficients."""

from .basis import BasisSpec, GridMismatchError, basis_gaussians, basis_integral
from .baselines import (
    FixedSolution,
    backward_euler_fixed,
    mc_delta,
    mc_price,
    nested_ce_oracle,
)
from .chaos import (
    ChaosCoefficients,
    chaos_monomial,
    estimate_coefficients,
    load_coefficients,
    monomial_matrix,
    project,
    save_coefficients,
)
from .hermite import hermite_eval, hermite_eval_all
from .indices import IndexSet, enumerate_index_set
from .models import (
    GeneratorSpec,
    TerminalSpec,
    asian_basket_terminal,
    barrier_call_terminal,
    borrowing_rate_generator,
    chaos_synthetic_terminal,
    eval_generator,
    eval_terminal,
    eval_terminals,
    generator_gradient,
    linear_rate_generator,
    power_max_terminal,
    trig_generator,
    zero_generator,
)
from .operator import (
    CoefficientBox,
    OperatorSolution,
    TrainConfig,
    box_from_family,
    degenerate_box,
    estimate_operator_error,
    evaluate_operator,
    load_operator,
    operator_y0_z0,
    sample_coefficients,
    save_operator,
    train_operator,
)
from .regression import LinearModel, MlpModel, linear_fit, load_model, save_model
from .simulation import (
    BrownianPath,
    TimeGrid,
    euler_maruyama_forward,
    forward_state,
    forward_states,
    rng_stream,
    sample_path,
    sample_paths,
    sde_coefficients,
    uniform_grid,
    union_grid,
)

__version__ = "0.1.0"
