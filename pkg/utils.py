"""
Pipeline execution logging utilities.

Provides a context manager recording the status, timing and metadata of each
estimator run, for monitoring long sweeps and background API jobs.
"""

import logging
import time
import uuid
from contextlib import contextmanager
from datetime import datetime, timezone
from typing import Any, Dict, Optional

from rbdoa.settings import get_settings

logger = logging.getLogger(__name__)


@contextmanager
def log_pipeline_execution(
    pipeline_name: str,
    input_snapshot: Optional[Dict[str, Any]] = None,
    execution_id: Optional[str] = None,
    record: Optional[bool] = None,
):
    """
    Context manager for logging a pipeline execution.

    Usage:
        with log_pipeline_execution("rb-l1svd", input_snapshot={"grid_points": 441}) as run_log:
            estimate = ...
            run_log.log_success({"solver_iterations": 830})

    Rows are written only when run recording is enabled (RBDOA_RECORD_RUNS or
    record=True); otherwise the yielded logger keeps the status in memory.
    """
    if not execution_id:
        execution_id = str(uuid.uuid4())[:8]
    if record is None:
        record = get_settings().record_runs

    if not record:
        run_log = RunLogger(pipeline_name, execution_id, input_snapshot)
        try:
            yield run_log
        except Exception as e:
            run_log.log_failure(str(e))
            raise
        finally:
            run_log.close()
        return

    from database import get_session_sync
    from models import PipelineExecutionLog

    session = get_session_sync()
    start_time = time.time()

    # Create execution log entry
    log_entry = PipelineExecutionLog(
        pipeline_name=pipeline_name,
        execution_id=execution_id,
        input_snapshot=input_snapshot or {},
        status="running",
        started_at=datetime.now(timezone.utc),
    )

    try:
        session.add(log_entry)
        session.commit()

        run_log = RecordingRunLogger(pipeline_name, execution_id, input_snapshot, log_entry, session)
        yield run_log
        run_log.close()

    except Exception as e:
        # Execution failed
        log_entry.status = "failure"
        log_entry.error_message = str(e)
        log_entry.completed_at = datetime.now(timezone.utc)
        log_entry.execution_metadata = {
            **(log_entry.execution_metadata or {}),
            "execution_time_seconds": time.time() - start_time,
        }
        session.commit()
        raise
    finally:
        session.close()


class RunLogger:
    """Logger object returned by log_pipeline_execution."""

    def __init__(self, pipeline_name: str, execution_id: str, input_snapshot: Optional[Dict[str, Any]] = None):
        self.pipeline_name = pipeline_name
        self.execution_id = execution_id
        self.input_snapshot = input_snapshot or {}
        self.final_status: Optional[str] = None
        self.error_message: Optional[str] = None
        self.metadata: Dict[str, Any] = {}
        self._started = time.perf_counter()

    def log_success(self, metadata: Optional[Dict[str, Any]] = None):
        """Mark execution as successful with optional metadata."""
        self.final_status = "success"
        self.metadata.update(metadata or {})

    def log_failure(self, error_message: str, metadata: Optional[Dict[str, Any]] = None):
        """Mark execution as failed with error message and optional metadata."""
        self.final_status = "failure"
        self.error_message = error_message
        self.metadata.update(metadata or {})

    def log_partial(self, error_message: Optional[str] = None, metadata: Optional[Dict[str, Any]] = None):
        """Mark execution as partially successful, e.g. a solve that hit max_iterations."""
        self.final_status = "partial"
        if error_message:
            self.error_message = error_message
        self.metadata.update(metadata or {})

    def close(self):
        """Settle the final status; no explicit status means success."""
        if self.final_status is None:
            self.final_status = "success"
        self.metadata["execution_time_seconds"] = time.perf_counter() - self._started
        log = logger.warning if self.final_status != "success" else logger.debug
        log(
            "[RUN] %s %s finished with status %s%s",
            self.pipeline_name, self.execution_id, self.final_status,
            f": {self.error_message}" if self.error_message else "",
        )


class RecordingRunLogger(RunLogger):
    """RunLogger that also writes the outcome to its PipelineExecutionLog row."""

    def __init__(self, pipeline_name, execution_id, input_snapshot, log_entry, session):
        super().__init__(pipeline_name, execution_id, input_snapshot)
        self.log_entry = log_entry
        self.session = session

    def close(self):
        super().close()
        self.log_entry.status = self.final_status
        self.log_entry.error_message = self.error_message
        self.log_entry.completed_at = datetime.now(timezone.utc)
        self.log_entry.execution_metadata = {
            **(self.log_entry.execution_metadata or {}),
            **self.metadata,
        }
        try:
            self.session.commit()
        except Exception as e:
            logger.error("[RUN] failed to persist execution log %s: %s", self.execution_id, e)
            self.session.rollback()
