"""tilewise: tile pruning with TileTrans reparameterization"""

__version__ = "0.1.0"
