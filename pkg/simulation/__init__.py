"""
tilewise - Simulation Package

Fixture model builders and the script that writes them to disk.
"""

__version__ = "0.1.0"
