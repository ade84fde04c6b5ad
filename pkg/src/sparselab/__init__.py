"""Numerical laboratory for bilinear spherical averages, maximal functions and sparse bounds."""

from .core import (ExponentTriple, ScalingFit, fit_power_law, holder_conjugate, in_region, m_bound)
from .fields import GridFunction, GridSpec, RegionSpec, lp_norm, make_indicator, pairing, shift
from .averaging import (Quadrature, bilinear_spherical_average, linear_spherical_average, slicing_normalizer,
                        slicing_rule, sphere_rule)

__version__ = "0.1.0"
