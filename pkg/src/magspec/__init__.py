"""magspec: a spectral laboratory for periodic and random magnetic
Schrödinger operators on finite tori.

Assembles lattice and continuum-discretized magnetic operators with
periodic boundary conditions, reduces periodic ones to Floquet fibers,
constructs sign-definite disorder couplings at internal gap edges, and
probes gap-edge drift, eigenvalue concentration, Wegner-type bounds, and
Lifshitz-tail statistics over reproducible disorder ensembles.
"""

__version__ = "0.1.0"

from .geometry import LatticeGeometry
from .fields import PeriodicBackground, SingleSiteProfile
from .disorder import DisorderModel, DisorderRealization, sample_disorder, uniform_disorder
from .operators import (
    MagneticOperator,
    apply_gauge,
    assemble_continuum,
    assemble_lattice,
    assemble_split,
    plaquette_flux,
)
from .bloch import BandStructure, GapSpec, band_structure, bloch_reduce, check_edge_regularity, detect_gap
from .spectral import IDSCurve, SpectralResult, ids, run_ensemble, solve, track_gap_edges
from .feshbach import FeshbachDecomposition, feshbach_reduce, holder_ids, vectorfield_check, wegner_mc
from .analysis import LifshitzFit, fh_derivative, window_concentration, lifshitz_fit, resolvent_decay

__all__ = [
    "LatticeGeometry",
    "PeriodicBackground",
    "SingleSiteProfile",
    "DisorderModel",
    "DisorderRealization",
    "sample_disorder",
    "uniform_disorder",
    "MagneticOperator",
    "assemble_lattice",
    "assemble_continuum",
    "assemble_split",
    "apply_gauge",
    "plaquette_flux",
    "BandStructure",
    "GapSpec",
    "bloch_reduce",
    "band_structure",
    "detect_gap",
    "check_edge_regularity",
    "SpectralResult",
    "IDSCurve",
    "solve",
    "ids",
    "run_ensemble",
    "track_gap_edges",
    "FeshbachDecomposition",
    "feshbach_reduce",
    "vectorfield_check",
    "wegner_mc",
    "holder_ids",
    "LifshitzFit",
    "lifshitz_fit",
    "window_concentration",
    "resolvent_decay",
    "fh_derivative",
    "__version__",
]
