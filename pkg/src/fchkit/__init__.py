"""fchkit: bilayer-interface machinery and solvers for the strong
functionalized Cahn-Hilliard equation."""

__version__ = "0.1.0"
