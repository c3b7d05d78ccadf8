"""
Writes datasets and validation reports.
CSV files open with the '# ' header block from RunConfig.header_lines(); floats use a fixed
format so identical runs give byte-identical files.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path

from .qubit_config import FLOAT_FORMAT

logger = logging.getLogger(__name__)


def render_csv(df, config):
    header = "\n".join(config.header_lines()) + "\n"
    return header + df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def render_report(report):
    return json.dumps(report, indent=2, allow_nan=False) + "\n"


def _write(text, out):
    if out is None:
        return None
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


def export_csv(df, config, out=None):
    """
    Writes the dataset to `out`; returns (text, path). With out=None nothing is written
    and the caller prints the text.
    """
    text = render_csv(df, config)
    path = _write(text, out)
    if path is not None:
        logger.info(f"CSV saved to {path} ({len(df)} rows)")
    return text, path


def export_report(report, out=None):
    text = render_report(report)
    path = _write(text, out)
    if path is not None:
        logger.info(f"Validation report saved to {path}")
    return text, path
