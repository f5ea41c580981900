"""Build script: compiles the optional Cython kernel extension.

The package is fully functional without the extension (a NumPy fallback is
selected at import time), so any compiler or Cython failure downgrades to a
pure-Python install instead of aborting. Source distributions carry both
the .pyx and the generated .c, so building from an sdist needs no Cython.
"""

import os
import sys

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """build_ext that logs and skips on compiler failure."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # CCompilerError, DistutilsError, ...
            self._warn(exc)

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            self._warn(exc)

    @staticmethod
    def _warn(exc):
        print(
            "WARNING: building the attnsent._ckernels extension failed "
            f"({exc!r}); installing with the pure NumPy kernel backend.",
            file=sys.stderr,
        )


def extensions():
    pyx = "src/attnsent/_ckernels.pyx"
    pregenerated = "src/attnsent/_ckernels.c"
    try:
        from Cython.Build import cythonize

        ext = Extension("attnsent._ckernels", [pyx], extra_compile_args=["-O3"])
        return cythonize([ext], compiler_directives={"language_level": "3"})
    except ImportError:
        pass
    if os.path.exists(pregenerated):
        return [Extension("attnsent._ckernels", [pregenerated],
                          extra_compile_args=["-O3"])]
    print(
        "WARNING: neither Cython nor the pre-generated kernel C source is "
        "available; installing with the pure NumPy kernel backend.",
        file=sys.stderr,
    )
    return []


setup(
    ext_modules=extensions(),
    cmdclass={"build_ext": optional_build_ext},
    exclude_package_data={"attnsent": ["*.c", "*.pyx"]},
)
