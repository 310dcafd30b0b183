"""Services package."""

from .experiment_runner import ExperimentRunner, get_experiment_runner
from .report_writer import ReportWriter, get_report_writer

__all__ = [
    "ExperimentRunner",
    "get_experiment_runner",
    "ReportWriter",
    "get_report_writer",
]
