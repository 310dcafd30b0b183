"""
Report writer service.

Turns iteration reports and summary rows into CSV and JSON files.
"""
import math
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence, Union

import orjson
import pandas as pd

from timedd.logging_config import logger
from timedd.models.errors import ErrorDetail
from timedd.models.reports import IterationReport, ProbeRecord, RefinementRow, SummaryRow

PathLike = Union[str, Path]

FLOAT_FORMAT = "%.16e"
HISTORY_COLUMNS = ["iter", "abs_residual", "rel_residual"]
SUMMARY_COLUMNS = list(SummaryRow.model_fields)
WALL_NOTE = "local wall time in seconds; not comparable to published CPU times"


def _to_csv(df: pd.DataFrame, path: PathLike, append: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = not (append and path.exists() and path.stat().st_size > 0)
    df.to_csv(
        path,
        mode="a" if append else "w",
        header=header,
        index=False,
        float_format=FLOAT_FORMAT,
        lineterminator="\n",
    )
    return path


class ReportWriter:
    """Write experiment output files."""

    @staticmethod
    def history_frame(report: IterationReport) -> pd.DataFrame:
        """
        Residual history as a frame.

        Args:
            report: Iteration report

        Returns:
            DataFrame with columns iter, abs_residual, rel_residual
        """
        return pd.DataFrame(
            {
                "iter": range(len(report.history)),
                "abs_residual": report.abs_history,
                "rel_residual": report.history,
            },
            columns=HISTORY_COLUMNS,
        )

    @staticmethod
    def write_history(report: IterationReport, path: PathLike) -> Path:
        return _to_csv(ReportWriter.history_frame(report), path)

    @staticmethod
    def write_report_json(report: IterationReport, path: PathLike, extra: Optional[dict] = None) -> Path:
        """Serialized report plus optional run metadata."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {**report.model_dump(), **(extra or {})}
        path.write_bytes(orjson.dumps(ReportWriter.sanitize(payload), option=orjson.OPT_INDENT_2))
        return path

    @staticmethod
    def write_failure_json(detail: ErrorDetail, path: PathLike, extra: Optional[dict] = None) -> Path:
        """Error detail of a run that produced no iterate."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = {"status": "failed", "error": detail.model_dump(), **(extra or {})}
        path.write_bytes(orjson.dumps(ReportWriter.sanitize(payload), option=orjson.OPT_INDENT_2))
        return path

    @staticmethod
    def append_summary(rows: Iterable[SummaryRow], path: PathLike) -> Path:
        """Append rows, writing the header only when the file is new."""
        df = pd.DataFrame([r.model_dump() for r in rows], columns=SUMMARY_COLUMNS)
        return _to_csv(df, path, append=True)

    @staticmethod
    def table_frame(rows: Sequence[SummaryRow]) -> pd.DataFrame:
        """
        Iteration table: one row per (levels, K), one iteration and one
        wall-time column per variant.
        """
        df = pd.DataFrame([r.model_dump() for r in rows], columns=SUMMARY_COLUMNS)
        if df.empty:
            return df
        iters = df.pivot_table(index=["levels", "K"], columns="variant", values="iters", aggfunc="first", dropna=False)
        wall = df.pivot_table(index=["levels", "K"], columns="variant", values="wall_seconds", aggfunc="first")
        order = [v for v in ("MSN", "ASN", "MSO", "ASO") if v in iters.columns]
        table = pd.concat(
            [iters[order].add_suffix("_iters"), wall[order].add_suffix("_local_wall_s")],
            axis=1,
        )
        table = table[[c for v in order for c in (f"{v}_iters", f"{v}_local_wall_s")]]
        table = table.reset_index()
        table["wall_note"] = WALL_NOTE
        return table

    @staticmethod
    def write_table(rows: Sequence[SummaryRow], path: PathLike) -> Path:
        path = _to_csv(ReportWriter.table_frame(rows), path)
        logger.info("iteration table written to %s", path)
        return path

    @staticmethod
    def write_refinement(rows: Sequence[RefinementRow], path: PathLike) -> Path:
        df = pd.DataFrame([r.model_dump() for r in rows], columns=list(RefinementRow.model_fields))
        return _to_csv(df, path)

    @staticmethod
    def write_probe(records: Sequence[ProbeRecord], path: PathLike) -> Path:
        df = pd.DataFrame([r.model_dump() for r in records], columns=list(ProbeRecord.model_fields))
        return _to_csv(df, path)

    @staticmethod
    def sanitize(data: Any) -> Any:
        """Replace NaN and infinities by None, recursively."""
        if isinstance(data, dict):
            return {k: ReportWriter.sanitize(v) for k, v in data.items()}
        if isinstance(data, (list, tuple)):
            return [ReportWriter.sanitize(v) for v in data]
        if isinstance(data, float) and not math.isfinite(data):
            return None
        return data


# Singleton instance
_report_writer: Optional[ReportWriter] = None


def get_report_writer() -> ReportWriter:
    """Get or create report writer singleton."""
    global _report_writer
    if _report_writer is None:
        _report_writer = ReportWriter()
    return _report_writer
