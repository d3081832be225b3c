"""Reference DP mechanisms and a DP-vs-NP benchmarking harness."""

from .data import ColumnMeta, Dataset, load_csv, neighbor, split, subsample, synth_regression
from .harness import ExperimentPlan, RunRecord, TaskSpec, execute_plan
from .mechanisms import BudgetLedger, PrivacyParams
from .metrics import PairedSample, rmspe, trim_extremes
from .report import MetricSummary, aggregate, emit_plot_data

__version__ = "0.1.0"
