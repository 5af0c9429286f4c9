"""Singular radial solutions of -Delta u = f(u) in the plane for exponential f."""

__version__ = "0.1.0"
