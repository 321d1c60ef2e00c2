# Builds the optional compiled core. If Cython or a C compiler is missing the
# package still installs and ppsvm falls back to the numpy implementation.
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "ppsvm._core",
                ["src/ppsvm/_core.pyx"],
                extra_compile_args=["-O3"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
