"""Optional extension build: compiles the interpreter's hot step loop.

``effwasm/_kernel.py`` is plain Python and runs fine uncompiled.  When
Cython is available, ``python3 setup.py build_ext --inplace`` compiles that
same source into an extension module which the import system then prefers;
nothing else changes.  ``pip install`` without Cython degrades gracefully
to the pure-Python kernel.
"""

from setuptools import setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        ["src/effwasm/_kernel.py"],
        language_level="3",
        compiler_directives={"boundscheck": False, "initializedcheck": False},
    )

setup(ext_modules=ext_modules)
