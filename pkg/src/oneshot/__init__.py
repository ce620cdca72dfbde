"""Experimental designs for one-shot optimization and regression."""

__version__ = "0.1.0"
