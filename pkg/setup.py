import os

from setuptools import setup
from setuptools.command.build_ext import build_ext


class OptionalBuildExt(build_ext):
    """Compile the kernels if possible; the package falls back to numpy otherwise."""

    def run(self):
        try:
            super().run()
        except Exception as exc:
            print(f"warning: skipping compiled kernels ({exc})")

    def build_extension(self, ext):
        try:
            super().build_extension(ext)
        except Exception as exc:
            print(f"warning: failed to build {ext.name} ({exc})")


def extensions():
    if os.environ.get("ORPT_NO_EXT"):
        return []
    try:
        import numpy as np
        from Cython.Build import cythonize
    except ImportError:
        return []
    from setuptools import Extension

    arch = ["-march=native"] if os.environ.get("ORPT_NATIVE") else []

    ext = Extension(
        "orpt._kernels",
        ["src/orpt/_kernels.pyx", "src/orpt/_lstm_kernels.c"],
        include_dirs=[np.get_include(), "src/orpt"],
        define_macros=[("NPY_NO_DEPRECATED_API", "NPY_1_7_API_VERSION")],
        # fast-math lets gcc route the tanh loops through glibc's libmvec
        extra_compile_args=["-O3", "-ffast-math"] + arch,
        extra_link_args=["-lmvec", "-lm"],
    )
    return cythonize([ext], compiler_directives={"language_level": "3"})


setup(ext_modules=extensions(), cmdclass={"build_ext": OptionalBuildExt})
