import os
import subprocess

from pybind11.setup_helpers import Pybind11Extension, build_ext
from setuptools import setup


def eigen_include():
    override = os.environ.get("EIGEN3_INCLUDE_DIR")
    if override:
        return override
    try:
        out = subprocess.run(
            ["pkg-config", "--cflags-only-I", "eigen3"],
            capture_output=True, text=True, check=True,
        ).stdout
        for token in out.split():
            if token.startswith("-I"):
                return token[2:]
    except (OSError, subprocess.CalledProcessError):
        pass
    return "/usr/include/eigen3"


core_sources = sorted(
    os.path.join("src", name)
    for name in os.listdir("src")
    if name.endswith(".cpp")
)

ext_modules = [
    Pybind11Extension(
        "mziln._mziln",
        ["bindings/bindings.cpp"] + core_sources,
        include_dirs=["include", "vendor", eigen_include()],
        cxx_std=20,
    ),
]

setup(ext_modules=ext_modules, cmdclass={"build_ext": build_ext})
