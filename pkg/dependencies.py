import logging

from fastapi import HTTPException
from pydantic import ValidationError

from database import SessionLocal
from errors import DegenerateFitError, InputError, MetricUndefinedError, RiskUndefinedError

logger = logging.getLogger(__name__)

def get_db():
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()

def to_http_error(e: Exception, action: str) -> HTTPException:
    """Map a domain error raised while `action` to the response it deserves"""
    if isinstance(e, HTTPException):
        return e
    if isinstance(e, (InputError, ValidationError)):
        return HTTPException(status_code=400, detail=str(e))
    if isinstance(e, (MetricUndefinedError, RiskUndefinedError, DegenerateFitError)):
        return HTTPException(status_code=422, detail=str(e))
    logger.exception("Error %s", action)
    return HTTPException(status_code=500, detail=f"Error {action}: {str(e)}")
