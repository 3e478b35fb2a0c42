"""Power-efficient x4 video super-resolution: kernels, model zoo, fusion, training, scoring."""
__version__ = "0.1.0"
