"""Control problems in divergence form and the built-in benchmarks."""
