"""Sturm-Liouville kernels, spectral transforms, and the hypergroup
convolution structure they generate on a half line."""

__version__ = "0.1.0"
