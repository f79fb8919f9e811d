"""Unsupervised nuclei segmentation by unpaired image-to-mask translation with aligned disentangling."""

__version__ = "0.1.0"
