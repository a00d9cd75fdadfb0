from setuptools import Extension, setup

setup(
    ext_modules=[
        Extension(
            "zovr.async_engine._atomics",
            sources=["src/zovr/async_engine/_atomics.c"],
            extra_compile_args=["-O2", "-std=c11"],
        )
    ]
)
