"""Design and simulation toolkit for a dual-wavelength metalens single-atom tweezer."""

__version__ = "0.1.0"
