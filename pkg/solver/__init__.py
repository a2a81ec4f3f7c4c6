"""Time stepping with policy iteration and error metrics."""
