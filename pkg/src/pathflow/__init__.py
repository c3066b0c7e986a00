"""pathflow: pathwise functional stochastic calculus on simulated paths."""

from .errors import (EnsembleFailedError, EstimationFailedError, InvalidArgumentError,
                     PathflowError, SimulationDivergedError, TooLargeError,
                     UnsupportedCapabilityError)
from .paths import (PathSlice, QVPath, SamplePath, StopRule, bump, flat_extend,
                    modify_terminal, quadratic_variation, simulate_brownian,
                    simulate_euler_sde, simulate_symmetric_stable, slice_at,
                    stop_at_level)
from .localtime import (LevelGrid, LocalTimeField, default_bandwidth,
                        default_time_indices, level_grid_for, local_time_downcrossings,
                        local_time_occupation, local_time_time_weighted,
                        occupation_check, shifted_local_time, singular_level_slice)
from .variation import (GridFunction2D, VariationParams, VariationReport, bivariation,
                        holder_control_constant, holder_exponent_fit,
                        interpolation_check, joint_lv, joint_rv, p_variation_grid,
                        p_variation_sup, validate_stable_orders)
from .young import (Integral2DResult, SummationByParts, ito_forward_integral,
                    summation_by_parts_2d, young_integral_1d, young_integral_2d)
from .functionals import (BatchCapabilities, FunctionalSpec, MollifiedFunctional,
                          horizontal_derivative_fd, make_cylinder, make_fps,
                          make_functional, make_fps_gaussian_bump,
                          make_fps_separable, make_identity, make_lookback_fixed,
                          make_partial_lookback, make_quadratic, make_running_max,
                          mollified_horizontal_derivative,
                          mollified_vertical_derivative, mollify, registry_names)
from .verify import (DecompositionReport, EnsembleConfig, ResidualStats,
                     decompose_singular, decompose_smooth, decompose_stable,
                     decompose_young, ensemble, run_one)

__version__ = "0.1.0"
