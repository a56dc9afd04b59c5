from .app import create_app, serve
from .protocol import (
    PROTOCOL_VERSION,
    audit_transcript,
    check_message,
    dump_message,
    make_message,
    parse_message,
)
from .state import AppState, ServiceConfig, bind_addr_from_env

__all__ = [
    "AppState",
    "PROTOCOL_VERSION",
    "ServiceConfig",
    "audit_transcript",
    "bind_addr_from_env",
    "check_message",
    "create_app",
    "dump_message",
    "make_message",
    "parse_message",
    "serve",
]
