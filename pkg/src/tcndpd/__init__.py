"""TCN digital predistortion: autodiff core, PA surrogates, RF metrics and harness."""

__version__ = "0.1.0"
