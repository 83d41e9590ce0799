"""Ground truth, scoring, corpus runs and the synthetic sample generator."""
