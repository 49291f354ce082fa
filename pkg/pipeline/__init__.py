# Pipeline package for the pragmabench evaluation harness

__version__ = "0.3.0"
