"""Build the compiled kernel extension.

The package installs and runs without it (numpy fallback); building it just
makes the hot loops fast. ``VIT2SNN_SKIP_EXT=1`` skips compilation outright.
"""

import os

from setuptools import Extension, setup

extensions = []
if not os.environ.get("VIT2SNN_SKIP_EXT"):
    try:
        import numpy
        from Cython.Build import cythonize

        extensions = cythonize(
            [
                Extension(
                    "vit2snn._kernels",
                    ["src/vit2snn/_kernels.pyx"],
                    include_dirs=[numpy.get_include()],
                    extra_compile_args=["-O3"],
                    define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
                )
            ],
            language_level=3,
        )
    except ImportError:
        extensions = []

setup(ext_modules=extensions)
