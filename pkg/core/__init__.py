"""
PRISM Core Module
Geometry generation, Hamiltonians and SPA-VQE labelling
"""

__version__ = "0.1.0"
