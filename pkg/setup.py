"""Build hooks for the optional compiled attribution kernels.

The package works without the extension; ``signet.attribution.kernels``
falls back to a NumPy implementation when the compiled module is missing.
Installs therefore never hard-fail on a missing C toolchain.
"""

from setuptools import Extension, setup

ext_modules = []
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "signet.attribution._mi",
                sources=["src/signet/attribution/_mi.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    pass

setup(ext_modules=ext_modules)
