from .config import ConfigError, RunConfig, load_config, parse_config
from .registry import BENCHMARKS, run_replicate
from .summarize import summarize_dir, summary_rows

__all__ = ["BENCHMARKS", "ConfigError", "RunConfig", "load_config", "parse_config",
           "run_replicate", "summarize_dir", "summary_rows"]
