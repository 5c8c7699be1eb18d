"""Budget-constrained EV charger planning with a cross-city demand predictor."""
__version__ = "0.1.0"
