import io
import logging

import numpy as np
import pandas as pd

from .qubit_config import EVOLVE_COLUMNS, TOLERANCES


class AuditFailed(ValueError):
    """An emitted table breaks the density-matrix constraints."""


class TraceValidator:
    """
    Audits an emitted evolution table.
    Checks the columns, the trace, positivity and the consistency of |rho10|.
    """

    def __init__(self):
        self.required_columns = EVOLVE_COLUMNS
        self.tolerance = TOLERANCES['hard']
        self.logger = logging.getLogger(__name__)

    def check_trace(self, df):
        """
        Validates an evolve table.
        Returns: (bool: valid?, str: report)
        """
        report = []

        missing = [col for col in self.required_columns if col not in df.columns]
        if missing:
            report.append(f"Missing columns: {', '.join(missing)}")
            self.logger.error(f"Trace table missing: {missing}")
            return False, "\n".join(report)

        numeric = [c for c in self.required_columns if c != 'method']
        null_cols = df[numeric].columns[df[numeric].isnull().any()].tolist()
        if null_cols:
            report.append(f"Empty values in: {', '.join(null_cols)}")
            self.logger.error("Found empty values in a trace table")
            return False, "\n".join(report)

        valid = True
        tol = self.tolerance
        coherence_sq = df['re_rho10'] ** 2 + df['im_rho10'] ** 2

        trace_error = (df['rho00'] + df['rho11'] - 1.0).abs()
        if (trace_error > tol).any():
            report.append(f"Trace off by up to {trace_error.max():.3g} in {int((trace_error > tol).sum())} rows")
            self.logger.warning("Trace violations found")
            valid = False

        negative = (df['rho00'] < -tol) | (df['rho11'] < -tol)
        if negative.any():
            report.append(f"Negative populations in {int(negative.sum())} rows")
            self.logger.warning("Negative populations found")
            valid = False

        slack = coherence_sq - df['rho00'] * df['rho11']
        if (slack > tol).any():
            report.append(f"Positivity violated by up to {slack.max():.3g} in {int((slack > tol).sum())} rows")
            self.logger.warning("Positivity violations found")
            valid = False

        modulus_error = (np.sqrt(coherence_sq) - df['abs_rho10']).abs()
        if (modulus_error > tol).any():
            report.append(f"abs_rho10 disagrees with re/im parts by up to {modulus_error.max():.3g}")
            self.logger.warning("Inconsistent coherence modulus")
            valid = False

        for method, rows in df.groupby('method', sort=False):
            if not rows['t_gamma'].is_monotonic_increasing or rows['t_gamma'].duplicated().any():
                report.append(f"Time column of '{method}' is not strictly increasing")
                valid = False

        report.append(f"Rows: {len(df)}, methods: {', '.join(map(str, df['method'].unique()))}")
        return valid, "\n".join(report)


def parse_table(text):
    """DataFrame from emitted CSV text, skipping the '# ' header block."""
    body = "".join(line for line in text.splitlines(keepends=True) if not line.startswith('#'))
    return pd.read_csv(io.StringIO(body))


def read_table(file_path):
    with open(file_path, encoding="utf-8") as handle:
        return parse_table(handle.read())

