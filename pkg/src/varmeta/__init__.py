"""Meta-analysis of ratios of sample variances."""

__version__ = "0.1.0"
