"""Numerical study of the Benjamin-Ono equation on the torus and its stochastic viscous regularization.

Modules:

* :mod:`~bomeasure.spectral` -- fields, Fourier calculus, exact quadrature
* :mod:`~bomeasure.conservation` -- conserved functionals and their gradients
* :mod:`~bomeasure.noise` -- forcing spectra, counter-based Brownian increments, OU oracle
* :mod:`~bomeasure.dynamics` -- ETDRK4 and exponential Euler-Maruyama integrators
* :mod:`~bomeasure.measure` -- stationary statistics and property checks
* :mod:`~bomeasure.experiments`, :mod:`~bomeasure.cli` -- reproducible experiment drivers
"""

__version__ = "0.1.0"
