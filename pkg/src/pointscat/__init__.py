"""Time-domain scattering by point scatterers and MUSIC-type localisation."""
from .dataop import (DataOperator, closed_form_operator, default_lambda, green_matrix,
                     laplace_transform, perturb_operator, simulated_operator)
from .errors import *  # noqa: F401,F403
from .forward import (ArrivalEvent, ChargeTrajectories, SensorTraces, arrival_events,
                      default_step, free_field_mollified, scattered_field, sensor_traces,
                      solve_charges, sphere_ball_fraction)
from .interaction import (InteractionMatrix, SpectralReport, build_m, invert_m,
                          is_positive_definite, lambda_upper_bound, smallest_eigenvalue,
                          sup_spectrum_estimate)
from .music import (ImagingField, KernelProjector, Peak, Reconstruction, extract_peaks,
                    imaging_value, kernel_projector, reconstruct, relative_residual,
                    scan_grid, steering_vector)
from .scene import (GridSpec, PulseWeights, ScattererArray, SceneReport, SensorArray,
                    load_scene, pairwise_distances, scattering_length, scene_to_dict,
                    validate_scene)

__version__ = "0.1.0"
