"""Two-weight Hilbert transform experiments on finite atomic measures."""
from .measure_grid import AtomicMeasure, DyadicInterval, Grid, MeasurePair

__all__ = ["AtomicMeasure", "DyadicInterval", "Grid", "MeasurePair"]
__version__ = "0.1.0"
