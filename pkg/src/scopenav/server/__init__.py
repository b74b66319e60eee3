"""Live navigation session server."""

from scopenav.server.config import SessionConfig, load_session_config
from scopenav.server.session import NavSession, SessionError, StoneAnnotation
from scopenav.server.service import NavServer

__all__ = [
    "NavServer",
    "NavSession",
    "SessionConfig",
    "SessionError",
    "StoneAnnotation",
    "load_session_config",
]
