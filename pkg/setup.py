"""Build script: compiles the quantile-regression simplex kernel when a
C toolchain and Cython are available, otherwise installs pure Python only."""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "crk._qrpath",
                ["src/crk/_qrpath.pyx"],
                optional=True,
            )
        ],
        language_level=3,
    )

setup(ext_modules=ext_modules)
