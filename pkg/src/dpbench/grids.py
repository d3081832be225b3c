"""Experiment grids and repetition protocol used by the default plans."""

EPSILONS = (0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0, 2.25, 2.5, 2.75, 3.0)

HEALTH_SURVEY_SIZES = (1000, 2000, 3000, 4000, 5000, 6000, 7000, 8000, 9000, 9358)
PARKINSON_SIZES = (1000, 2000, 3000, 4000, 5000, 5499)

QUERY_KINDS = ("sum", "avg", "count", "histogram")

# 20 query runs -> 18 kept, 10 training runs -> 8 kept.
QUERY_REPETITIONS = 20
ML_REPETITIONS = 10
TRIM_PER_TAIL = 1
