"""Build script for the optional compiled simulation kernel.

The package works without the extension: netwatermark.sim falls back to a
pure-numpy step loop when the compiled module is missing, so the extension
is marked optional and a failed compile only costs speed.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "netwatermark._loop",
                ["src/netwatermark/_loop.pyx"],
                optional=True,
            )
        ],
        language_level="3",
    )

setup(ext_modules=ext_modules)
