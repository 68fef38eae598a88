"""Safety-constrained tracking missions from temporal logic specifications."""

__version__ = "0.1.0"
