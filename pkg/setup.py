"""Build hook for the optional compiled Sinkhorn kernels.

The package is fully functional without the extension; the pure NumPy
kernels are used as a fallback when the build is unavailable.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext = Extension(
        "permqp._kernels_cy",
        sources=["src/permqp/_kernels_cy.pyx"],
        extra_compile_args=["-O3"],
    )
    ext.optional = True
    ext_modules = cythonize([ext], compiler_directives={"language_level": "3"})

setup(ext_modules=ext_modules)
