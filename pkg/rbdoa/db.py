"""
Database utilities for sweep persistence.
"""

import logging
import math
import uuid
from typing import List, Optional

from sqlmodel import Session, select

from rbdoa.harness import SweepResult

logger = logging.getLogger(__name__)


def _finite(value: Optional[float]) -> Optional[float]:
    return None if value is None or math.isnan(value) else value


def persist_sweep_result(result: SweepResult, session: Optional[Session] = None) -> str:
    """
    Write one SweepRecord per row of a sweep and return the sweep_run_id.

    NaN metrics of cells where every run failed are stored as NULL.
    """
    from database import get_session_sync
    from models import SweepRecord

    sweep_run_id = str(uuid.uuid4())
    owns_session = session is None
    session = session or get_session_sync()
    try:
        for row in result.rows:
            session.add(SweepRecord(
                sweep_run_id=sweep_run_id,
                method=row.method,
                snr_db=row.snr_db,
                rmse_az_deg=_finite(row.rmse_az_deg),
                rmse_el_deg=_finite(row.rmse_el_deg),
                resolution_probability=row.resolution_probability,
                mean_wall_time_ms=_finite(row.mean_wall_time_ms),
                n_runs_used=row.n_runs_used,
                n_runs_failed=row.n_runs_failed,
                config_hash=result.config_hash,
            ))
        session.commit()
        logger.info("[SWEEP] persisted %d rows as sweep %s", len(result.rows), sweep_run_id)
    except Exception:
        session.rollback()
        raise
    finally:
        if owns_session:
            session.close()
    return sweep_run_id


def load_sweep_records(sweep_run_id: str, session: Optional[Session] = None) -> List:
    """Rows of one persisted sweep ordered by SNR then method."""
    from database import get_session_sync
    from models import SweepRecord

    owns_session = session is None
    session = session or get_session_sync()
    try:
        statement = (
            select(SweepRecord)
            .where(SweepRecord.sweep_run_id == sweep_run_id)
            .order_by(SweepRecord.snr_db, SweepRecord.method)
        )
        return list(session.exec(statement).all())
    finally:
        if owns_session:
            session.close()
