"""Build the optional compiled stepper core.

The package is fully functional without the extension (a pure-python
stepper is selected at import time); building it just makes the hot
integration loop fast.  For an in-place development build:

    python setup.py build_ext --inplace
"""

import os

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

PYX = os.path.join("src", "solenoid", "_speed.pyx")

ext_modules = []
if cythonize is not None and os.path.exists(PYX):
    ext = Extension(
        "solenoid._speed",
        [PYX],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        extra_compile_args=["-O3", "-ffp-contract=off"],
    )
    ext.optional = True  # failure to compile must not break installation
    ext_modules = cythonize([ext], language_level=3)

setup(ext_modules=ext_modules)
