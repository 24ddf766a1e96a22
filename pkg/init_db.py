#!/usr/bin/env python3
"""
Database initialization script
Run this to create the run-log tables in RBDOA_DATABASE_URL
"""

import logging

from database import DATABASE_URL, create_db_and_tables

logger = logging.getLogger(__name__)


def init_database(bind=None):
    """Initialize the database with tables"""
    logger.info("Creating database tables in %s", DATABASE_URL if bind is None else bind.url)
    create_db_and_tables(bind)
    logger.info("Database tables created successfully!")


if __name__ == "__main__":
    from rbdoa.settings import configure_logging

    configure_logging()
    init_database()
