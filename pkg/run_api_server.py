#!/usr/bin/env python3
"""
Run the toolkit API server.
"""
import sys
from pathlib import Path

project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

import uvicorn
from src.api.app import create_app
from src.core.config import settings
from src.core.logging import setup_logging, get_logger

setup_logging()
logger = get_logger(__name__)

app = create_app()


def main():
    """Serve the API with uvicorn."""
    logger.info("Starting FastAPI server")
    logger.info(f"Environment: {settings.environment}")
    logger.info(f"Debug mode: {settings.debug}")
    logger.info(f"URL: http://{settings.host}:{settings.port}")
    logger.info(f"API documentation: http://{settings.host}:{settings.port}/docs")

    uvicorn.run(
        "run_api_server:app",
        host=settings.host,
        port=settings.port,
        reload=settings.is_development,
        log_level=settings.log_level.lower(),
        access_log=False
    )


if __name__ == "__main__":
    try:
        main()
    except KeyboardInterrupt:
        logger.info("API server stopped")
    except Exception as e:
        logger.error(f"API server failed: {e}", exc_info=True)
        sys.exit(1)
