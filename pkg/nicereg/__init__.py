"""
nicereg is a Python library for single-pass, coarse-to-fine deformable
registration of 3D images.  It uses PyTorch for the network and its
differentiable kernels.

A network registers a moving image to a fixed image in L steps within
one forward pass; each step refines the upsampled displacement field
of the previous one.  See nicereg.network

Synthetic phantom datasets, unsupervised training, and evaluation
helpers are provided by nicereg.phantom, nicereg.training, and
nicereg.evaluation.

Copyright 2026 nicereg developers
"""

name = "nicereg"

try:
    from importlib.metadata import version, PackageNotFoundError
    __version__ = version('nicereg')
except PackageNotFoundError:
    __version__ = '0.1.0-dev'
nicereg_version = __version__

from .errors import *
from .config import *
from .volume import *
from .field import *
from .volumeio import *
from .phantom import *
from .losses import *
from .gradient import *
from .metrics import *
from .network import *
from .checkpoint import *
from .training import *
from .evaluation import *


def show_version():
    """Show versions of nicereg, PyTorch, NumPy, SciPy, nibabel,
    Matplotlib, SymPy, and Python."""

    from sys import version as python_version
    from torch import __version__ as torch_version
    from numpy import __version__ as numpy_version
    from scipy import __version__ as scipy_version
    from nibabel import __version__ as nibabel_version
    from matplotlib import __version__ as matplotlib_version
    from sympy import __version__ as sympy_version

    print('Python: %s\nPyTorch: %s\nNumPy: %s\nSciPy: %s\nnibabel: %s\n'
          'Matplotlib: %s\nSymPy: %s\nnicereg: %s' %
          (python_version, torch_version, numpy_version, scipy_version,
           nibabel_version, matplotlib_version, sympy_version, nicereg_version))
