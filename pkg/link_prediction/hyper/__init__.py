# HyperKG numerical core
# Knowledge-graph ingestion, kernels, the HypER scorer, training, ranking
# evaluation and checkpoints. Nothing in here imports Django.
