"""Random magnetic fluxes on the square lattice: operators, identities and Monte Carlo."""

__version__ = "0.1.0"
