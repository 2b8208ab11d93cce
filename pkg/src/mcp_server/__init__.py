"""
MCP (Model Context Protocol) server exposing the toolkit's artifact tools.
"""

from .server import create_mcp_server, run_mcp_server
from .tools import TOOLS, register_tools
from .resources import FORMATS_OVERVIEW, register_resources

__all__ = [
    "FORMATS_OVERVIEW",
    "TOOLS",
    "create_mcp_server",
    "register_resources",
    "register_tools",
    "run_mcp_server",
]
