"""Build script for the compiled mean kernel.

The extension is optional at runtime: the package falls back to the pure
NumPy implementation when the import fails. Build in place with

    python setup.py build_ext --inplace
"""

from Cython.Build import cythonize
from setuptools import Extension, setup

extensions = [
    Extension(
        "rankmean._core",
        ["src/rankmean/_core.pyx"],
        extra_compile_args=["-O3"],
    )
]

setup(
    ext_modules=cythonize(
        extensions,
        compiler_directives={
            "language_level": "3",
            "boundscheck": False,
            "wraparound": False,
            "cdivision": True,
            "initializedcheck": False,
        },
    )
)
