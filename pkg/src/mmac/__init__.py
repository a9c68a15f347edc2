"""Rate-region and detection analysis for multiplicative multiple-access
(ambient backscatter) links, with a seeded Monte Carlo cross-validator."""

__version__ = "0.1.0"
