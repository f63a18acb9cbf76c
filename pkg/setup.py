"""Build the optional compiled simulation core.

If Cython or a C compiler is unavailable the package installs without it and
falls back to the pure-Python loops in ``ergochain._pycore``.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # pragma: no cover
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension(
            "ergochain._core",
            sources=["src/ergochain/_core.pyx"],
            # no fast-math / FMA contraction: results must match the Python loops bit for bit
            extra_compile_args=["-O3", "-ffp-contract=off", "-fno-fast-math"],
            optional=True,
        )],
        compiler_directives={"language_level": 3},
        quiet=True,
    )

setup(ext_modules=ext_modules)
