"""Event bus for protocol procedure calls."""

import logging
from collections.abc import Callable, Iterator
from contextlib import contextmanager
from typing import Any

logger = logging.getLogger(__name__)

# Event types
PROCEDURE_CALL = "procedure_call"
MESSAGE_SENT = "message_sent"
MESSAGE_DELIVERED = "message_delivered"

# Simple event bus
_listeners: list[Callable[[str, Any], None]] = []


def add_listener(callback: Callable[[str, Any], None]) -> None:
    """Register a listener for protocol events."""
    _listeners.append(callback)


def remove_listener(callback: Callable[[str, Any], None]) -> None:
    """Unregister a listener; unknown callbacks are ignored."""
    try:
        _listeners.remove(callback)
    except ValueError:
        pass


@contextmanager
def listening(callback: Callable[[str, Any], None]) -> Iterator[None]:
    """Register ``callback`` for the duration of a ``with`` block."""
    add_listener(callback)
    try:
        yield
    finally:
        remove_listener(callback)


def emit(event_type: str, payload: Any) -> None:
    """Emit an event to all registered listeners."""
    for listener in list(_listeners):
        try:
            listener(event_type, payload)
        except Exception as e:
            logger.error(f"Event listener error: {e}")
