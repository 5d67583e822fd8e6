"""Build the optional compiled kernel; the package falls back to pure Python without it."""

import os

from setuptools import Extension, setup
from setuptools.command.build_ext import build_ext

try:
    from Cython.Build import cythonize

    USE_CYTHON = True
except ImportError:
    USE_CYTHON = False

# no FMA contraction: the compiled kernel must round exactly like the Python fallback
COMPILE_ARGS = ["-O2", "-ffp-contract=off", "-fno-fast-math"]

ext = Extension(
    "tclevy._ckernel",
    ["src/tclevy/_ckernel.pyx" if USE_CYTHON else "src/tclevy/_ckernel.c"],
    extra_compile_args=COMPILE_ARGS,
)

extensions = []
if USE_CYTHON:
    extensions = cythonize([ext], compiler_directives={"language_level": 3})
elif os.path.exists(ext.sources[0]):
    extensions = [ext]



class OptionalBuildExt(build_ext):
    """A failed compile leaves the pure-Python kernel in charge instead of aborting the install."""

    def run(self):
        try:
            super().run()
        except Exception as exc:  # compiler missing or broken
            print(f"warning: compiled kernel not built ({exc}); using the Python fallback")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: {ext.name} not built ({exc}); using the Python fallback")


setup(ext_modules=extensions, cmdclass={"build_ext": OptionalBuildExt})
