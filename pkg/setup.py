"""Build script. The Cython extension is optional: if it fails to build or
import, the package falls back to the pure-numpy implementations in
``stratdag._respond_py``."""

import numpy as np
from setuptools import setup
from Cython.Build import cythonize

setup(
    name="stratdag",
    version="0.1.0",
    ext_modules=cythonize(
        "src/stratdag/_respond_c.pyx",
        compiler_directives={"language_level": 3, "boundscheck": False, "wraparound": False},
    ),
    include_dirs=[np.get_include()],
)
