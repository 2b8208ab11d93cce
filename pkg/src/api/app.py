"""
FastAPI application factory.

Serves the artifact-processing endpoints of the toolkit with request ids,
request logging, consistent error envelopes and Scalar documentation.
"""

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from starlette.exceptions import HTTPException as StarletteHTTPException
from scalar_fastapi import get_scalar_api_reference
import time
import uuid

from ..core.config import settings
from ..core.logging import get_logger, setup_logging
from ..core.exceptions import ArgumentError, ConfigurationError, DataError, FlexEventError
from .routers import health, toolkit

setup_logging()
logger = get_logger(__name__)

CLIENT_ERRORS = (ArgumentError, DataError, ConfigurationError)


def create_app() -> FastAPI:
    """
    Create and configure FastAPI application.

    Returns:
        Application with middleware, exception handlers, the health router
        and the toolkit router under ``/api/v1``
    """
    logger.info("Creating FastAPI application")

    app = FastAPI(
        title=settings.app_name,
        description=_get_api_description(),
        version=settings.app_version,
        docs_url=None,  # Scalar is served at /docs instead
        redoc_url=None,
        debug=settings.debug,
        openapi_tags=_get_openapi_tags(),
        license_info={
            "name": "MIT",
            "url": "https://opensource.org/licenses/MIT",
        },
    )

    _add_middleware(app)
    _add_exception_handlers(app)
    _include_routers(app)
    _add_custom_endpoints(app)

    logger.info("FastAPI application created successfully")
    return app


def _get_api_description() -> str:
    return f"""
    **{settings.app_name}** - {settings.app_description}

    ## Endpoints

    - `POST /api/v1/voxelize`: EVT1 upload, returns per-polarity and per-bin counts
    - `POST /api/v1/evaluate`: detections + labels documents, returns COCO metrics
    - `POST /api/v1/inspect`: any artifact upload, returns a parsed summary

    Artifact formats are documented in `docs/formats`. Invalid artifacts yield
    `422` responses whose `error.context` names the offending field and record.

    **Environment**: {settings.environment.title()}
    **Version**: {settings.app_version}
    """


def _get_openapi_tags() -> list:
    return [
        {"name": "Root", "description": "Root endpoint with API information"},
        {"name": "Health", "description": "Health check endpoints for monitoring system status"},
        {"name": "Toolkit", "description": "Voxelization, evaluation and artifact inspection"},
    ]


def _add_middleware(app: FastAPI) -> None:
    """
    Add request-id, request-logging and CORS middleware.

    Args:
        app: FastAPI application instance
    """
    logger.debug("Adding middleware to application")

    @app.middleware("http")
    async def add_request_id(request: Request, call_next):
        """Add unique request ID for tracing and logging."""
        request_id = str(uuid.uuid4())
        request.state.request_id = request_id
        response = await call_next(request)
        response.headers["X-Request-ID"] = request_id
        return response

    @app.middleware("http")
    async def log_requests(request: Request, call_next):
        """Log all requests for monitoring and debugging."""
        start_time = time.time()
        logger.info(
            f"Request started: {request.method} {request.url.path}",
            extra={
                "request_id": getattr(request.state, 'request_id', 'unknown'),
                "method": request.method,
                "path": request.url.path,
                "query_params": str(request.query_params)
            }
        )

        response = await call_next(request)

        duration = time.time() - start_time
        logger.info(
            f"Request completed: {request.method} {request.url.path} - {response.status_code}",
            extra={
                "request_id": getattr(request.state, 'request_id', 'unknown'),
                "status_code": response.status_code,
                "duration_seconds": round(duration, 3)
            }
        )
        return response

    app.add_middleware(
        CORSMiddleware,
        allow_origins=settings.cors_origins_list,
        allow_credentials=False,
        allow_methods=["GET", "POST"],
        allow_headers=["*"],
    )


def _error_response(request: Request, status_code: int, error_type: str, message: str, **fields) -> JSONResponse:
    return JSONResponse(
        status_code=status_code,
        content={
            "error": {
                "type": error_type,
                "message": message,
                **fields,
                "request_id": getattr(request.state, 'request_id', 'unknown'),
            }
        },
    )


def _add_exception_handlers(app: FastAPI) -> None:
    """
    Map toolkit errors to JSON error envelopes.

    Args:
        app: FastAPI application instance
    """
    logger.debug("Adding exception handlers")

    @app.exception_handler(FlexEventError)
    async def toolkit_exception_handler(request: Request, exc: FlexEventError):
        """Argument, data and configuration errors are the client's; the rest are ours."""
        status_code = 422 if isinstance(exc, CLIENT_ERRORS) else 500
        logger.warning(
            f"{exc.__class__.__name__}: {exc.detail}",
            extra={"request_id": getattr(request.state, 'request_id', 'unknown'), "context": exc.context}
        )
        return _error_response(
            request, status_code, exc.__class__.__name__, exc.detail,
            context={k: v for k, v in exc.context.items() if v is not None},
        )

    @app.exception_handler(RequestValidationError)
    async def validation_exception_handler(request: Request, exc: RequestValidationError):
        """Handle Pydantic validation errors with detailed field information."""
        logger.warning(f"Validation error: {exc}")
        return _error_response(
            request, 422, "ValidationError", "Input validation failed",
            details=[{"loc": list(e["loc"]), "msg": e["msg"]} for e in exc.errors()],
        )

    @app.exception_handler(StarletteHTTPException)
    async def http_exception_handler_custom(request: Request, exc: StarletteHTTPException):
        """Handle standard HTTP exceptions with consistent format."""
        logger.warning(f"HTTP exception: {exc.status_code} - {exc.detail}")
        return _error_response(request, exc.status_code, "HTTPException", str(exc.detail))

    @app.exception_handler(Exception)
    async def general_exception_handler(request: Request, exc: Exception):
        """Handle unexpected exceptions with secure error messages."""
        logger.error(f"Unexpected exception: {exc}", exc_info=True)
        detail = str(exc) if settings.debug else "Internal server error"
        return _error_response(request, 500, "InternalServerError", detail)


def _include_routers(app: FastAPI) -> None:
    app.include_router(health.router, tags=["Health"], responses={503: {"description": "Service unavailable"}})
    app.include_router(toolkit.router, prefix="/api/v1")


def _add_custom_endpoints(app: FastAPI) -> None:
    @app.get("/docs", include_in_schema=False)
    async def scalar_html():
        """Interactive API documentation using Scalar."""
        return get_scalar_api_reference(
            openapi_url=app.openapi_url,
            title=app.title,
        )

    @app.get("/", tags=["Root"], summary="API Information")
    async def read_root():
        """Get API information and available endpoints."""
        return {
            "message": f"Welcome to {settings.app_name}",
            "description": settings.app_description,
            "version": settings.app_version,
            "environment": settings.environment,
            "links": {
                "documentation": "/docs",
                "health_check": "/health",
                "api_v1": "/api/v1",
                "openapi_schema": "/openapi.json"
            },
        }
