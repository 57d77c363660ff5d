"""Build script for the optional compiled step kernel.

The package is fully functional without the extension: curverl.kernels
falls back to a pure-numpy implementation of the same arithmetic when
``curverl._stepcore`` is missing. The extension only speeds up the rollout
sampling / gradient accumulation inner loop of the trainer.
"""

from setuptools import Extension, setup

try:
    import numpy
    from Cython.Build import cythonize
except ImportError:  # pure-python install still works
    ext_modules = []
else:
    ext_modules = cythonize(
        [
            Extension(
                "curverl._stepcore",
                ["src/curverl/_stepcore.pyx"],
                include_dirs=[numpy.get_include()],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level="3",
    )

setup(ext_modules=ext_modules)
