"""
FastMCP server exposing the toolkit's inspection, evaluation and synthesis
tools.
"""

from fastmcp import FastMCP
import asyncio
import sys

from ..core.config import settings
from ..core.logging import get_logger
from ..core.exceptions import MCPError, ConfigurationError
from .tools import register_tools
from .resources import register_resources

logger = get_logger(__name__)

TRANSPORTS = ("sse", "stdio")


def create_mcp_server() -> FastMCP:
    """
    Create and configure FastMCP server.

    Returns:
        Configured FastMCP server instance

    Raises:
        MCPError: If server initialization fails
    """
    try:
        logger.info("Creating MCP server instance")
        mcp = FastMCP(name=f"{settings.app_name} MCP Server")

        register_tools(mcp)
        register_resources(mcp)

        logger.info("MCP server created successfully")
        return mcp

    except Exception as e:
        logger.error(f"Failed to create MCP server: {e}", exc_info=True)
        raise MCPError(f"MCP server creation failed: {e}")


async def run_mcp_server(mcp: FastMCP = None):
    """
    Run the MCP server with the configured transport.

    Raises:
        ConfigurationError: If the transport is not supported
        MCPError: If server startup fails
    """
    if settings.mcp_transport not in TRANSPORTS:
        raise ConfigurationError(f"Unsupported transport: {settings.mcp_transport}", "mcp_transport")
    mcp = mcp or create_mcp_server()
    try:
        logger.info(f"Starting MCP Server ({settings.mcp_transport})")
        if settings.mcp_transport == "sse":
            logger.info(f"SSE Endpoint: http://{settings.mcp_host}:{settings.mcp_port}/sse")
            await mcp.run_sse_async(host=settings.mcp_host, port=settings.mcp_port)
        else:
            await mcp.run_stdio_async()
    except Exception as e:
        logger.error(f"MCP server startup failed: {e}", exc_info=True)
        raise MCPError(f"MCP server startup failed: {e}")


if __name__ == "__main__":
    try:
        asyncio.run(run_mcp_server())
    except KeyboardInterrupt:
        logger.info("MCP server shutdown requested by user")
    except (ConfigurationError, MCPError) as e:
        logger.error(f"MCP server configuration/startup error: {e}")
        sys.exit(1)
