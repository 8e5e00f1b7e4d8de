from setuptools import Extension, setup
from Cython.Build import cythonize

ext_modules = [
    Extension(
        "patchdesc._convkernels",
        sources=["src/patchdesc/_convkernels.pyx"],
        extra_compile_args=[
            "-O3",
            "-march=native",
            "-funroll-loops",
            # allow the compiler to vectorize the accumulation loops
            "-fassociative-math",
            "-fno-signed-zeros",
            "-fno-trapping-math",
        ],
    ),
]

setup(
    ext_modules=cythonize(
        ext_modules,
        compiler_directives={
            "language_level": 3,
            "boundscheck": False,
            "wraparound": False,
            "initializedcheck": False,
            "cdivision": True,
        },
    ),
)
