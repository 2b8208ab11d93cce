"""
FastAPI dependencies shared by the API routers.
"""

from functools import lru_cache
import logging

from fastapi import Depends, HTTPException, Request

from .config import Settings, get_settings
from .logging import get_logger

logger = get_logger(__name__)


@lru_cache()
def get_settings_cached() -> Settings:
    """
    Get cached application settings.

    Returns:
        Application settings instance, loaded once per process
    """
    return get_settings()


def get_logger_for_request(request: Request) -> logging.Logger:
    """
    Get a logger that prefixes every message with the request id.

    Args:
        request: FastAPI request object

    Returns:
        Logger adapter with request context
    """
    request_logger = get_logger(f"request.{request.url.path}")
    request_id = getattr(request.state, 'request_id', 'unknown')

    class RequestLoggerAdapter(logging.LoggerAdapter):
        def process(self, msg, kwargs):
            return f"[{request_id}] {msg}", kwargs

    return RequestLoggerAdapter(request_logger, {})


async def get_upload_body(
    request: Request,
    settings: Settings = Depends(get_settings_cached),
) -> bytes:
    """
    Raw request body of an artifact upload.

    Raises:
        HTTPException: 413 when the body exceeds ``settings.max_upload_bytes``
    """
    declared = request.headers.get("content-length")
    if declared is not None and declared.isdigit() and int(declared) > settings.max_upload_bytes:
        raise HTTPException(status_code=413, detail=f"upload exceeds {settings.max_upload_bytes} bytes")
    body = await request.body()
    if len(body) > settings.max_upload_bytes:
        raise HTTPException(status_code=413, detail=f"upload exceeds {settings.max_upload_bytes} bytes")
    logger.debug(f"Received upload of {len(body)} bytes")
    return body
