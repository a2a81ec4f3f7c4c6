"""API package for FastAPI app."""
