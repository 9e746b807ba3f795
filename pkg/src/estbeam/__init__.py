"""Transmit beamforming that minimizes the direction bound of an extended target.

The package models a target contour as a truncated Fourier series, splits its
line-of-sight arc into subsections, evaluates the Cramer-Rao bound on the
target bearing, designs beamformers through a semidefinite relaxation solved
by an in-house interior-point method, and checks the designs by simulation.
"""

from .array import ArrayGeometry, ChannelSet, generate_channels
from .crb import SensingParams, crb_phi_closed_form, crb_phi_oracle, evaluate_crb
from .design import (BeamformerSet, DesignConstraints, build_sdr_problem, extract_rank_one,
                     solve_sdr)
from .errors import (DegenerateBeampattern, EstbeamError, ExtractionFailed, InfeasibleDesign,
                     NoVisibleContour, NonContiguousLoS, ScenarioError, SingularEfim,
                     SolverFailure)
from .geometry import ContourModel, LosPartition, TargetPose, compute_los_partition
from .scenario import Scenario

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry", "BeamformerSet", "ChannelSet", "ContourModel", "DegenerateBeampattern",
    "DesignConstraints", "EstbeamError", "ExtractionFailed", "InfeasibleDesign", "LosPartition",
    "NoVisibleContour", "NonContiguousLoS", "Scenario", "ScenarioError", "SensingParams",
    "SingularEfim", "SolverFailure", "TargetPose", "build_sdr_problem", "compute_los_partition",
    "crb_phi_closed_form", "crb_phi_oracle", "evaluate_crb", "extract_rank_one",
    "generate_channels", "solve_sdr",
]
