"""
MetaSDF Shape Lab

Gradient-based meta-learning of neural signed distance functions, with the
auto-decoder and set-encoder baselines, dataset construction, level-set
extraction and evaluation, all on a small higher-order autodiff core.
"""

__version__ = "1.0.0"
