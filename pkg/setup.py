#!/usr/bin/env python
from setuptools import setup, find_packages

__version__ = '0.1.0-dev'

with open("README.md", "r") as fh:
    long_description = fh.read()

setup(name='nicereg',
      version=__version__,
      author='nicereg developers',
      description='Single-pass coarse-to-fine deformable 3D image registration',
      long_description = long_description,
      long_description_content_type="text/markdown",
      python_requires='>=3.8',
      install_requires=['torch',
                        'nibabel',
                        'matplotlib',
                        'scipy',
                        'numpy',
                        'sympy',
                        'setuptools',
                        'wheel'
      ],
      packages=find_packages(exclude=['demo']),
      entry_points={
          'console_scripts': [
              'nicereg=nicereg.scripts.nicereg:main',
          ],
      },
      classifiers=[
          "Programming Language :: Python :: 3",
          "Topic :: Scientific/Engineering :: Medical Science Apps.",
          "Operating System :: OS Independent",
      ],
)
