"""
Best-effort recording of runs in the ExperimentRun ledger.
A missing or unmigrated database never fails a run; it only logs a warning.
"""
import logging

from django.db import DatabaseError

from .exceptions import describe_error
from .models import ExperimentRun

logger = logging.getLogger(__name__)


def _create(**fields):
    try:
        return ExperimentRun.objects.create(**fields)
    except DatabaseError as exc:
        logger.warning(f"Run ledger unavailable, row not recorded: {exc}")
        return None


def record_report(command, label, report, run_dir=''):
    """Store a completed MetricsReport."""
    return _create(
        command=command,
        label=label,
        method=report.method,
        mode=report.mode or '',
        n_paths=report.n_paths,
        n_samples=report.n_samples,
        seed=report.seed,
        reference=report.reference,
        delta1=report.delta1,
        delta2=report.delta2,
        tv=report.tv,
        sample_tv=report.sample_tv,
        status=ExperimentRun.STATUS_COMPLETED,
        run_dir=str(run_dir),
        timings=dict(report.timings_ms),
    )


def record_failure(command, label, row, exc, reference=''):
    """Store a failed CSV row together with the error that stopped it."""
    error = describe_error(exc)
    return _create(
        command=command,
        label=label,
        method=row['method'],
        mode=row['mode'],
        n_paths=row['K'] or None,
        n_samples=row['S'],
        seed=row['seed'],
        reference=reference,
        status=ExperimentRun.STATUS_FAILED,
        error_class=error['error'],
        error_message=error['message'],
    )
