import os

from setuptools import setup

# The compiled kernel is optional: without Cython (or with QDISA_SKIP_EXT=1)
# the package installs anyway and selects the pure-numpy backend at import.
ext_modules = []
if not os.environ.get("QDISA_SKIP_EXT"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [
                Extension(
                    "qdisa.kernels._fast",
                    ["src/qdisa/kernels/_fast.pyx"],
                    # -ffp-contract=off: the numpy fallback must match the
                    # compiled kernel bit for bit, so FMA contraction is banned.
                    extra_compile_args=["-O3", "-ffp-contract=off"],
                )
            ],
            language_level=3,
        )
    except ImportError:
        pass

setup(ext_modules=ext_modules)
