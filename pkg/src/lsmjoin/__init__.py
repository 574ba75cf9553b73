"""Join methods over LSM-tree storage: engine, indexes, cost model, workloads and bench."""
