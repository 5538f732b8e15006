"""Quantitative H^1 theory of Navier-Stokes on the torus: certified constants,
a Galerkin mild-solution integrator and an a-posteriori control-inequality verifier."""

__version__ = "0.1.0"

# prior small-data threshold quoted for comparison only, never recomputed
PRIOR_LITERATURE_THRESHOLD = 0.00724
