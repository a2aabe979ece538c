"""Joint range-Doppler adaptive processing for CBM-based dual-function radar.

Modules
-------
array_beam   steering vectors, beampatterns, CBM dictionary design
waveform     LFM pulse, Doppler grid, Phi / Upsilon builders
scene        scene description and data-cube synthesis
covariance   closed-form covariances, projections, Monte-Carlo oracles
filters      SPC & MTD, JRDMF, AMPC, JRDAP
harness      end-to-end runs, validation and benchmark
"""

from .array_beam import (ArrayGeometry, BeamDesignSpec, BeamDictionary, DesignConvergenceError,
                         DesignError, InfeasibleDesignError, beampattern, design_cbm_dictionary,
                         select_pulse_weights, steering_vector)
from .covariance import CovarianceModel, assemble_Rc, assemble_Rt, mc_covariance_oracle
from .filters import (AmpcFilter, JrdapFactors, NumericalError, RangeDopplerMap, ampc_cell, ampc_map,
                      estimate_prior, jrdap_cell, jrdap_map, jrdmf, spc_mtd)
from .scene import (ClutterField, DataCube, Scene, SceneRealization, Target,
                    clutter_modulation_coefficients, synthesize)
from .waveform import (DopplerGrid, PowerPrior, Waveform, build_phi, build_upsilon, doppler_steering,
                       lfm_waveform, shifted_waveform)

__version__ = "0.1.0"
