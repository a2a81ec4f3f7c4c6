"""Spatial grids and operator assembly (fitted finite volume and finite difference)."""
