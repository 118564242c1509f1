"""deformlab: rope/cloth manipulation simulator and evaluation harness."""

__version__ = "0.1.0"
