"""Stochastic second-order-cone AC-OPF for hybrid AC/DC grids.

Subpackages
-----------
grid        network data model, JSON case I/O, validation, incidence
conic       conic program container + Clarabel / SCS backends
acopf       SOC relaxation and DC approximation builders, AC feasibility gaps
wind        wind-speed fitting, power curves, scenario trees
stochastic  two-stage stochastic model, model sizing, value of the stochastic
            solution
mbda        Benders decomposition with parallel scenario subproblems
cli         command-line front end
"""

__version__ = "0.1.0"
