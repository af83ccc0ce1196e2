import os

from setuptools import Extension, setup

ext_modules = []
if os.environ.get("FJSIM_NO_EXT") != "1":
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        pass
    else:
        ext_modules = cythonize(
            [
                Extension(
                    "fjsim._ckernels",
                    ["src/fjsim/_ckernels.pyx"],
                    include_dirs=[np.get_include()],
                    # no contraction/fast-math: results must match the Python kernel bit for bit
                    extra_compile_args=["-O2", "-ffp-contract=off"],
                    optional=True,
                )
            ],
            compiler_directives={"language_level": "3"},
        )

setup(ext_modules=ext_modules)
