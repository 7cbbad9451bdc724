"""Triple twin beams with a shared signal arm: forward Gaussian model,
multiplexed click detection, EM inversion, post-selection statistics and
nonclassicality quantification.
"""
from ._backend import HAVE_NUMBA, backend_name
from .detector import (DetectionMatrix, DetectorConfig, PAPER_TABLE_1, PRESETS,
                       detection_matrix, forward_counts, sample_counts)
from .emrec import (EmResult, EmSettings, derive_photocount_conditional,
                    em_reconstruct, em_reconstruct_conditional)
from .errors import (CutoffError, DataError, NumericalError, ParameterError,
                     TripleTwbError)
from .fit import FitReport, declination, fit, photocount_moments
from .fock import (Histogram, JointDistribution, condition, factorial_moment,
                   marginalize, normalize)
from .gaussian import (GaussianFieldModel, MandelRiceComponent, PAPER_TABLE_2,
                       TripleTwbParams, compose_with_noise, mandel_rice_pmf,
                       model_moments, paired_part, sample_photon_numbers)
from .nonclassical import (IntensityMoments, NccResult, NcdField, NcdResult,
                           NcdSettings, PlaneCut, QuasiDistribution,
                           QuasiProbabilityTable, intensity_moments,
                           intensity_ncd, ncc_cs_intensity,
                           ncc_matrix_intensity, ncc_probability, ncd,
                           ncd_field, plane_cut, probability_ncd,
                           quasi_distribution_W, quasi_probabilities,
                           s_transform_moments)
from .postselect import (PostselectSweep, SweepRow, conditioned_field,
                         corr_fluct, fano, photocount_sweep,
                         sweep_distribution, sweep_histogram)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "1.0.0"
