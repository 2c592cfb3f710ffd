"""Policy effectiveness from counterfactual state-space SIR forecasts."""

__version__ = "0.1.0"
