"""Zero densities of exponential sums and quasi-polynomials versus
Monge-Ampere masses of support functions of their spectra."""

__version__ = "0.1.0"
