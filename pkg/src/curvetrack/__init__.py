"""Stochastic level-set tracking of deforming interfaces in image sequences.

A particle filter over pairs of level sets: ``phi`` holds the interface as a
signed distance field, ``psi`` the initial-frame coordinates of every point.
Particles are transported by Horn-Schunck optical flow blended with a
Chan-Vese region force, perturbed along the normal and tangent, and weighted
against each new frame.
"""

from .errors import (CurveTrackError, DecodeError, DegenerateInputError, FilterDegeneracyError,
                     ParameterError, StepError)
from .eval import hausdorff, narrowband_rmse, score_sequence
from .filter import FilterConfig, Particle, ParticlePool, estimate, init_ensemble, step
from .flow import FlowParams, horn_schunck
from .grid import LabelMap, ScalarField, VectorField, load_image, load_labels, read_ctf, write_ctf
from .kernels import BACKEND
from .levelset import (Contour, advect, extract_contour, identity_correspondence, narrow_band, reinitialize,
                       sdf_from_mask)
from .pipeline import deterministic_config, locate_markers, track_sequence
from .sde import NoiseStream, SdeParams, propagate
from .synth import ClassModel, DeformationSpec, generate_sequence, synthesize_ct

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ClassModel",
    "Contour",
    "CurveTrackError",
    "DecodeError",
    "DeformationSpec",
    "DegenerateInputError",
    "FilterConfig",
    "FilterDegeneracyError",
    "FlowParams",
    "LabelMap",
    "NoiseStream",
    "ParameterError",
    "Particle",
    "ParticlePool",
    "ScalarField",
    "SdeParams",
    "StepError",
    "VectorField",
    "advect",
    "deterministic_config",
    "estimate",
    "extract_contour",
    "generate_sequence",
    "hausdorff",
    "horn_schunck",
    "identity_correspondence",
    "init_ensemble",
    "load_image",
    "load_labels",
    "locate_markers",
    "narrow_band",
    "narrowband_rmse",
    "propagate",
    "read_ctf",
    "reinitialize",
    "score_sequence",
    "sdf_from_mask",
    "step",
    "synthesize_ct",
    "track_sequence",
    "write_ctf",
]
