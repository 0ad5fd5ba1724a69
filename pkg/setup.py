from setuptools import Extension, setup

try:
    from Cython.Build import cythonize

    extensions = cythonize(
        [Extension("fogoffload._kernels", ["src/fogoffload/_kernels.pyx"],
                   extra_compile_args=["-O3"])],
        compiler_directives={"language_level": "3"},
    )
except ImportError:
    # No Cython: ship the numpy fallback only.
    extensions = []

setup(ext_modules=extensions)
