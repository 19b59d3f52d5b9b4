"""Lattice Gaussian fields conditioned above quenched hard walls.

Submodules: lattice (domains), green (Green functions and tail
constants), capacity (Newtonian capacity, three routes), wall (quenched
substrates), sampler (exact and heat-bath sampling), walk (hitting
distributions), observables, bounds (analytic predictors), rare_event
(log-probability estimators), cli (experiment runner).
"""

__version__ = "0.1.0"
