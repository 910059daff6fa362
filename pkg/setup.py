"""Build the optional compiled kernels; the package runs without them."""
import numpy as np
from setuptools import Extension, setup

try:
    from Cython.Build import cythonize
except ImportError:
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "relmod.diffcore._pairs",
                ["src/relmod/diffcore/_pairs.pyx"],
                include_dirs=[np.get_include(), "src/relmod/diffcore"],
                extra_compile_args=["-O3", "-fno-trapping-math"],
                optional=True,
            )
        ],
        compiler_directives={"language_level": "3"},
    )

setup(ext_modules=ext_modules)
