"""Echo state networks with PCA / kernel PCA state projection, ridge and
nu-SVR readouts, genetic hyperparameter search and attractor analysis."""

__version__ = "0.1.0"
