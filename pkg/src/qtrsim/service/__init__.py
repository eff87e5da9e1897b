"""HTTP service wrapping the core simulator (FastAPI + pydantic models)."""

from . import schemas  # noqa: F401
