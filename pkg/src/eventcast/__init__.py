"""Online event detection, correlation and forecasting over multivariate sensor streams."""

from .aging import AgingPolicy, RulePool, exponential_weight, linear_weight, merge_rule_probability, pool_update
from .correlation import (EMPTY, PatternForest, node_budget, symbols_for_step)
from .detection import (ChangeDetector, CusumState, DetectorBank, ShewhartState, cusum_step,
                        detect_vector, shewhart_step)
from .evaluation import (PlantedRule, PrecisionReport, PrecisionTracker, SynthConfig,
                         emit_plot_data, generate_synthetic, run_sweep, score_step)
from .ingest import ContextVector, EventVector, open_stream_table
from .pipeline import OnlinePipeline, PipelineConfig, run_pipeline
from .prediction import PatternForecaster, Prediction, emit_rules, match_suffixes, predict
from .ptl import (BlkConstraint, OccConstraint, ProbTemporalRule, check_blk, check_occ, format_rule,
                  parse_rule, prune_predictions)

__all__ = ["AgingPolicy", "BlkConstraint", "ChangeDetector", "check_blk", "check_occ",
    "ContextVector", "cusum_step", "CusumState", "detect_vector", "DetectorBank", "emit_plot_data",
    "emit_rules", "EMPTY", "EventVector", "exponential_weight", "format_rule",
    "generate_synthetic", "linear_weight", "match_suffixes", "merge_rule_probability",
    "node_budget", "OccConstraint", "OnlinePipeline", "open_stream_table", "parse_rule",
    "PatternForecaster", "PatternForest", "PipelineConfig", "PlantedRule", "pool_update",
    "PrecisionReport", "PrecisionTracker", "predict", "Prediction", "ProbTemporalRule",
    "prune_predictions", "RulePool", "run_pipeline", "run_sweep", "score_step", "shewhart_step",
    "ShewhartState", "symbols_for_step", "SynthConfig"]

__version__ = "0.1.0"
