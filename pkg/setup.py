"""Build script for the compiled stepping kernels.

The extension is optional at runtime: if it fails to build or import, the
package falls back to the pure-numpy kernels in ``resavg._kernels_py``.
"""

import numpy as np
from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "resavg._kernels",
        ["src/resavg/_kernels.pyx"],
        include_dirs=[np.get_include()],
        extra_compile_args=["-O3"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={"language_level": "3"},
    )
)
