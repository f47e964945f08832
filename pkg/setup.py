"""Build script for the optional compiled conv kernels.

The package works without the extension (numpy fallback is selected at
import); building it just makes the hot conv loops faster on small shapes:

    python setup.py build_ext --inplace
"""

from setuptools import setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize
    from setuptools import Extension

    ext_modules = cythonize(
        [
            Extension(
                "ecotrain.kernels._conv",
                ["src/ecotrain/kernels/_conv.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "language_level": 3,
        },
    )
except ImportError:
    # No Cython/numpy at build time: install pure-python, fallback kernels run.
    pass

setup(ext_modules=ext_modules)
