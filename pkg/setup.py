"""Build script: compiles the BM25 scoring kernel when Cython and a C
compiler are available, and falls back to the pure-Python kernel otherwise.

Set GROUNDCHECK_SKIP_EXT=1 to skip the extension build entirely.
"""

import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class optional_build_ext(build_ext):
    """A build_ext that downgrades compile failures to a warning."""

    def run(self):
        try:
            build_ext.run(self)
        except Exception as exc:  # compiler missing or broken
            print(f"warning: extension build failed ({exc}); "
                  "using the pure-Python kernel")

    def build_extension(self, ext):
        try:
            build_ext.build_extension(self, ext)
        except Exception as exc:
            print(f"warning: building {ext.name} failed ({exc}); "
                  "using the pure-Python kernel")


ext_modules = []
if not os.environ.get("GROUNDCHECK_SKIP_EXT"):
    try:
        from Cython.Build import cythonize
        from setuptools import Extension

        ext_modules = cythonize(
            [Extension("groundcheck._bm25_kernel",
                       ["src/groundcheck/_bm25_kernel.pyx"])],
            language_level=3,
        )
    except ImportError:
        print("warning: Cython not available; using the pure-Python kernel")

setup(ext_modules=ext_modules, cmdclass={"build_ext": optional_build_ext})
