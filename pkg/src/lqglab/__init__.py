"""Lattice toolkit for Liouville quantum gravity metrics: GFF sampling, LFPP
distances, conformal coordinate changes, the LQG area measure and annulus
events, plus a seeded experiment harness."""
from .conformal import Affine, Composite, CoordinateChange, ExpStrip, MapDescriptor, Moebius, Power2
from .gff import Field, LqgParams, SamplerKind, sample_field, sample_zero_boundary, sample_whole_plane_proxy
from .lattice import Annulus, GeometryError, GridSpec, VertexSet
from .metric import MetricOracle, disconnecting_circuit

__version__ = "0.1.0"

__all__ = [
    "Affine", "Annulus", "Composite", "CoordinateChange", "ExpStrip", "Field", "GeometryError",
    "GridSpec", "LqgParams", "MapDescriptor", "MetricOracle", "Moebius", "Power2", "SamplerKind",
    "VertexSet", "disconnecting_circuit", "sample_field", "sample_whole_plane_proxy",
    "sample_zero_boundary",
]
