"""Builds the optional compiled elimination kernels.

Falls back to a pure-Python install when Cython or a compiler is missing.
"""
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    cythonize = None


def ext_modules():
    if cythonize is None:
        return []
    ext = Extension("dynfg.elim._ckernels", ["src/dynfg/elim/_ckernels.pyx"],
                    language="c++", extra_compile_args=["-O3"])
    try:
        return cythonize([ext], language_level=3, quiet=True)
    except Exception as exc:  # keep the pure-Python path installable
        print(f"warning: not building compiled kernels ({exc})")
        return []


setup(ext_modules=ext_modules())
