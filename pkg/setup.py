"""Build the optional compiled interpreter kernel.

The package works without it: igen.exec falls back to the pure-Python loop
when the extension is missing.
"""

from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:  # no Cython: pure-Python install
    ext_modules = []
else:
    ext_modules = cythonize(
        [Extension(
            "igen.exec._kernel_c",
            ["src/igen/exec/_kernel_c.pyx"],
            # no FMA contraction, so float results match the Python loop bit for bit
            extra_compile_args=["-O3", "-ffp-contract=off"],
            optional=True,
        )],
        language_level=3,
    )

setup(ext_modules=ext_modules)
