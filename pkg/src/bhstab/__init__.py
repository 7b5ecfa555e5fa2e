"""bhstab: Neumann eigenvalues of planar grid domains and numerical
certification of the two-ball stability inequality for the second
nonzero eigenvalue."""

__version__ = "0.1.0"
