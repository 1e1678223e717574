import numpy
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None

extensions = [
    Extension(
        "ctmcpath._ckernels",
        sources=["src/ctmcpath/_ckernels.pyx"],
        include_dirs=[numpy.get_include()],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        optional=True,  # fall back to the pure-Python kernels if the build fails
    )
]

setup(
    ext_modules=cythonize(extensions, language_level="3") if cythonize else [],
)
