"""Soft-output M-algorithm MIMO detection with a look-ahead path metric,
iterative detection and decoding, and correct-path-loss analysis."""

from .comms import ChannelModel, Constellation, RscCode, rsc_encode
from .decoder import Trellis, maxlog_map_decode
from .detector import (CandidateList, DetectorOutput, MultiplicationCounter, SearchConfig, detect,
                       extend_and_compute_llrs, m_search, mmse_pic_detect, vblast_order)
from .errors import (ConfigError, IssmaError, ModelError, NotPositiveDefinite, ParamError,
                     RankDeficient, ShapeError, TooLarge)
from .idd import IddConfig, IddResult, run_idd
from .pathmetric import DetectionProblem, PathNode, ZSequence, compute_z_sequence
from .priors import PriorStats

__version__ = "0.1.0"
