from alqa.backends.base import (
    GenerationBackend,
    ReaderBackend,
    load_generation_backend,
    load_reader_backend,
    register_backend,
)

__all__ = [
    "GenerationBackend",
    "ReaderBackend",
    "load_generation_backend",
    "load_reader_backend",
    "register_backend",
]
