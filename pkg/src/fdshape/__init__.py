"""Residual filter synthesis with shaped minimum-gain and maximum-gain bounds."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .lti import (FrequencyGrid, RationalTF, StateSpace, hinf_norm, hminus_index,  # noqa: F401
                  is_hurwitz, minreal, realize_matrix, ss_to_tf, tf_arith, tf_to_ss)
from .plant import (ChannelSelector, GeneralizedPlant, build_fdi_plant,  # noqa: F401
                    check_hminus_feasibility, close_loop, select_channel)
from .sdp import LmiProblem, SolverOptions, Status, solve  # noqa: F401
from .lmi import brl_analysis_lmi, is_feasible, mingain_analysis_lmi  # noqa: F401
from .synthesis import (SynthesisConfig, SynthesisResult, complete_and_extract,  # noqa: F401
                        forward_cov, post_scale_update, reverse_cov, synthesize, verify)
