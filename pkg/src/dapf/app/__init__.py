"""Command-line orchestration of the forecasting and analysis pipeline."""

from .config import PipelineConfig
from .pipeline import cmd_backtest, cmd_ingest, cmd_report, cmd_superstats, cmd_synth

__all__ = ["PipelineConfig", "cmd_backtest", "cmd_ingest", "cmd_report", "cmd_superstats",
           "cmd_synth"]
