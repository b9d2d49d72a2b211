"""
Pipeline module for the RDFC pipeline.

Handles experiment configuration, stage orchestration, evaluation and
report/heatmap output.
"""

from .config import ExperimentConfig, config_keys, get_profile, key_help, normalize_key, parse_value
from .evaluation import Evaluation, evaluate, exact_synth_pmf, emit_heatmap, heatmap_pixels, read_pgm
from .report import EvalReport, save_report, load_report
from .runner import ExperimentRunner, run_experiment, stage

__all__ = [
    'ExperimentConfig', 'config_keys', 'get_profile', 'key_help', 'normalize_key', 'parse_value',
    'Evaluation', 'evaluate', 'exact_synth_pmf', 'emit_heatmap', 'heatmap_pixels', 'read_pgm',
    'EvalReport', 'save_report', 'load_report', 'ExperimentRunner', 'run_experiment', 'stage',
]
