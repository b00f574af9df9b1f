import os
import sys

import numpy as np
from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

try:
    from Cython.Build import cythonize
except ImportError:  # no Cython: ship the numpy fallback only
    cythonize = None


class OptionalBuildExt(build_ext):
    """Build the kernels if possible; a failed compile leaves the fallback."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # noqa: BLE001
            print(f"warning: compiled kernels not built ({exc})", file=sys.stderr)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:  # noqa: BLE001
            print(f"warning: {ext.name} not built ({exc})", file=sys.stderr)


openmp = [] if os.environ.get("GEOSPLAT_NO_OPENMP") else ["-fopenmp"]

extensions = []
if cythonize is not None and not os.environ.get("GEOSPLAT_PURE_PYTHON_BUILD"):
    extensions = cythonize(
        [
            Extension(
                "geosplat._raster",
                ["src/geosplat/_raster.pyx"],
                include_dirs=[np.get_include()],
                extra_compile_args=["-O3"] + openmp,
                extra_link_args=openmp,
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=extensions, cmdclass={"build_ext": OptionalBuildExt})
