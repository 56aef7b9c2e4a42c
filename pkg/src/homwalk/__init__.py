"""Numerical laboratory for random walks on the space of unimodular lattices.

The package is organized bottom-up:

* group_core: closed-form geometry of unimodular 2x2 matrices.
* lattice_space: the quotient space of unimodular lattices, reduction,
  height, distances, nets, Haar sampling.
* measures: finitely supported symmetric measures, convolution, presets,
  subgroup-concentration diagnostics.
* walk_engine: reproducible trajectory sampling and orbit-ball breadth
  first search.
* experiments: the measurement battery (diameter, hitting, non-divergence,
  contraction, flattening, dimension, smoothed density, equidistribution,
  orbit averages, spectral gap).
* io_cli: configuration, deterministic CSV/JSONL emission, command line.
"""

from .group_core import (
    CartanTriple,
    GroupElement,
    LieVector,
    LogDomainError,
    cartan,
    dist,
    exp_map,
    group_norm,
    log_map,
    mul,
)
from .lattice_space import HeightParams, SpacePoint

__version__ = "0.1.0"
