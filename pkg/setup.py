"""Build script: compiles the optional Cython kernel extension.

The package works without the extension (pure-NumPy kernels are selected at
import time); `python setup.py build_ext --inplace` enables the compiled core.
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from setuptools import Extension
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "monocurve._speedups",
                ["src/monocurve/_speedups.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3", "-ffast-math", "-funroll-loops", "-march=native"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # No Cython/numpy at build time: install pure-Python only.
    pass

setup(ext_modules=ext_modules)
