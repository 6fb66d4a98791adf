"""uqss: prediction intervals for regression built from sensitivity-weighted
similar samples, with empirical bound calibration, distilled per-quantile
bound networks, a sample-density model, interval quality metrics, and
cost-function-trained interval baselines."""

__version__ = "0.1.0"
