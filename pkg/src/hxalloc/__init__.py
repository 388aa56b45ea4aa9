"""Resource allocation on 2D HyperX networks: analysis and simulation."""

__version__ = "0.1.0"
