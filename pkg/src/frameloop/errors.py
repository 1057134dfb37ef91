"""Exception types shared across the package."""


class FrameloopError(Exception):
    """Base class for all package errors."""


class FormatError(FrameloopError):
    """Raised when a store file is malformed (bad magic, version, truncation)."""


class ValidationError(FrameloopError):
    """Raised when inputs violate a documented precondition or invariant."""


class GatewayError(FrameloopError):
    """Base class for backend gateway failures."""


class TransportError(GatewayError):
    """Network-level failure after retries were exhausted."""


class ServiceError(GatewayError):
    """HTTP error response from the backend service."""

    def __init__(self, status: int, body_excerpt: str = ""):
        self.status = status
        self.body_excerpt = body_excerpt
        super().__init__(f"backend returned HTTP {status}: {body_excerpt}")


class ParseError(GatewayError):
    """Backend reply could not be parsed into the expected structure."""
