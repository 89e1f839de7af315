"""Desk-scale serverless reverse-time migration pipeline.

Per-shot RTM images are computed by a pool of worker processes (map),
collected through a file-backed object store and message queue, and
summed by an event-driven reduction service until a single stacked
image remains.  A deterministic scheduler simulator contrasts the cost
of a fixed VM cluster with an autoscaling batch pool for the same
workload.
"""

__version__ = "0.1.0"
