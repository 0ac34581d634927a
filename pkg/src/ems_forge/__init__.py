"""ems-forge: design and analysis of one-time-programmable passive
electromagnetic skins (fuse-switched 1-bit reflecting panels)."""

from .conventions import (C0, ETA0, TE, TM, Direction, EmsLayout, Frequency,
                          IncidentWave, WaveEnvironment, incident_field_at,
                          incident_wavevector, wrap_phase)
from .madopt import (MadCostConfig, MadResult, SwarmConfig, SwarmResult,
                     cost_mad, delta_gamma, design_meta_atom,
                     frequency_response, swarm_minimize)
from .pattern import (FarFieldPattern, PanelConfiguration, PhiCut,
                      StateMatrix, UvGrid, array_factor, element_factor,
                      equivalent_currents, pattern_factorized,
                      pattern_general, pattern_metrics, radiation_vectors)
from .reflection import (FuseModel, MetaAtomGeometry, ReflectionTable,
                         ReflectionTensor, Substrate, SurrogateProvider,
                         TabulatedProvider, load_reflection_table,
                         two_state_table)
from .synthesis import (SynthesisReport, SynthesisSpec, cost_otpems,
                        exhaustive_oracle, ideal_phase_profile,
                        ideal_reference_pattern, quantize_states, synthesize)

__version__ = "0.1.0"
