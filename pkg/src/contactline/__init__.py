"""Moving-contact-line Navier-Stokes free-boundary simulator and verification harness."""

__version__ = "0.1.0"
