"""Filter-bank multicarrier spread-spectrum packet detection toolkit."""

__version__ = "0.1.0"
