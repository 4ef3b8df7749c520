"""Build hook for the optional compiled labeling kernel.

The package is fully functional without the extension: netlist.raster falls
back to the pure-Python kernel when the import fails. Build in place with

    python setup.py build_ext --inplace
"""

from setuptools import setup

try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        ["src/circuitlit/netlist/_labeling.pyx"],
        language_level=3,
    )
    include_dirs = [numpy.get_include()]
except ImportError:
    ext_modules = []
    include_dirs = []

setup(ext_modules=ext_modules, include_dirs=include_dirs)
