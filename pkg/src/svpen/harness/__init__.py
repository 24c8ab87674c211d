"""Configuration, datasets, scenario registry and the reproduction commands."""
from .commands import (
    EXIT_ERROR, EXIT_NOT_CONVERGED, EXIT_OK, CaseSummary, TraceParseError, build_mas_problem,
    build_turbofan_problem, gen_dataset_cmd, pretrain_cmd, pretrain_on, read_trace, report_cmd, run_case,
)
from .config import ConfigError, RunConfig
from .datasets import DatasetSpec, gen_dataset, load_dataset
from .scenarios import MAS_SCENARIOS, TURBOFAN_SCENARIOS, desk_model, get_scenario, load_line_db, reference_model
