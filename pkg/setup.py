from setuptools import Extension, setup

# The compiled kernels are optional: without Cython (or a compiler) the
# package installs anyway and seeker.kernels falls back to the numpy path.
try:
    import numpy
    from Cython.Build import cythonize

    ext_modules = cythonize(
        [
            Extension(
                "seeker._kernels",
                sources=["src/seeker/_kernels.pyx"],
                include_dirs=[numpy.get_include()],
                extra_compile_args=["-O3"],
                define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
            )
        ],
        language_level=3,
    )
except ImportError:
    ext_modules = []

setup(ext_modules=ext_modules)
