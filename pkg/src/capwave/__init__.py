"""Steady periodic capillary-gravity water waves with constant vorticity.

Spectral discretisation of the conformal formulation, bifurcation from
laminar flows, pseudo-arclength continuation and physical reconstruction.
"""

from .errors import (
    AliasOverflow, CapwaveError, DegenerateQuadratic, DomainFault, IndexOutOfRange, InvalidDepth,
    InvalidParameters, KernelOverflow, LeftDomain, MeanDefect, NoConvergence, NonZeroMean,
    NoSignChange, StagnantConfiguration,
)
from .trig_core import GridFunction, TrigSeries
from .wave_operators import FlowParameters, q_value, residual_eqn2a, residual_F
from .linear_analysis import BifurcationPoint, bifurcation_lambdas, bifurcation_table, multiplier
from .continuation import (
    Branch, ContinuationConfig, SolutionPoint, Verdict, continue_branch, newton_correct,
    switch_branch, trace_branch,
)
from .reconstruction import admissibility, bernoulli_residual, reconstruct

__version__ = "0.1.0"
