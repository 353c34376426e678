"""Telegrapher's equations on tree-shaped networks: simulation, weighted
estimates and coefficient recovery from leaf measurements."""
from .errors import TelegraphNetError
from .network import build_network, five_edge_network, load_network, single_edge, star_network
from .dynamics import CoefficientField, GridSpec, ProblemData, solve

__version__ = "0.1.0"
