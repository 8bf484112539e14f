"""Simulation and verification toolkit for freely cooling granular gases
of hard spheres with velocity-dependent restitution.

Subpackage map:

- ``restitution``  -- e(r) models and derived scalar maps
- ``kinematics``   -- exact pre/post collision transforms
- ``densities``    -- analytic densities and KDE surrogates
- ``operator``     -- Monte Carlo estimators of the gain operator
- ``dsmc``         -- particle solver (original and rescaled flows)
- ``scaling``      -- original/rescaled bookkeeping and cooling-law fits
- ``diagnostics``  -- moments, entropy, L1 distance, lower-bound fits
- ``cli``          -- the ``gk`` command line entry point
"""

__version__ = "0.1.0"

from . import restitution  # noqa: F401
