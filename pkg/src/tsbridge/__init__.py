"""tsbridge: bridge-diffusion generation and evaluation for time series.

Subpackages and modules:

* ``numerics``: float64 tensor core with reverse-mode autodiff, causal
  attention, Adam.
* ``stochastic``: random sources, Brownian-bridge sampling, Euler-Maruyama,
  Heston simulation.
* ``generator``: drift network, iterated bridge-regression training,
  endpoint transport, sequential generation, checkpoints.
* ``calibration``: Heston quasi-MLE and calibration reports.
* ``factors``: PCA factor model, k-means grouping, residual mixtures,
  windows, features, noise baseline.
* ``evaluation``: ACF, correlations, tail risk, classification/PnL metrics,
  bootstrap Sharpe intervals, quadratic-variation dispersion.
* ``cli``: file-based operator surface (``tsbridge`` console script).
"""

__version__ = "0.1.0"
