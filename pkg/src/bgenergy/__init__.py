"""Feature-level energy benchmarking for background processes.

The package decomposes a background feature into atomic operations, runs
incremental variants of it under a fixed measurement cycle against RAPL
energy counters (or a deterministic synthetic model), and turns the raw
records into control deltas, pairwise comparisons and hourly estimates.
"""

__version__ = "0.1.0"
