#!/usr/bin/env python3
"""
Run the toolkit MCP server.
"""
import asyncio
import sys
from pathlib import Path

project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from src.mcp_server.server import run_mcp_server
from src.core.config import settings
from src.core.exceptions import ConfigurationError, MCPError
from src.core.logging import setup_logging, get_logger

setup_logging()
logger = get_logger(__name__)


async def main():
    """Start the MCP server with the configured transport."""
    logger.info("Starting MCP server")
    logger.info(f"Environment: {settings.environment}")
    logger.info(f"MCP transport: {settings.mcp_transport}")
    await run_mcp_server()


if __name__ == "__main__":
    try:
        asyncio.run(main())
    except KeyboardInterrupt:
        logger.info("MCP server stopped")
    except (ConfigurationError, MCPError) as e:
        logger.error(f"MCP server failed: {e}")
        sys.exit(1)
