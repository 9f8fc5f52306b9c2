"""Lightweight warning-event channel shared by all modules.

Numerical safeguards (delay clamping, saturated exponentials, suspicious
negative states) are not errors: runs stay total and the event is recorded
so that reports can surface it. Events go to the ``sddsim`` logger always,
and additionally into any capture list installed for the current context.
The capture list is a contextvar, so concurrent runs do not see each
other's events.
"""
from __future__ import annotations

import contextvars
import logging
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Any, Iterator

log = logging.getLogger("sddsim")
log.addHandler(logging.NullHandler())

_capture: contextvars.ContextVar[list["Event"] | None] = contextvars.ContextVar(
    "sddsim_events", default=None
)


@dataclass(frozen=True)
class Event:
    kind: str
    message: str
    data: dict[str, Any] = field(default_factory=dict)

    def as_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "message": self.message, **self.data}


def record(kind: str, message: str, **data: Any) -> None:
    """Record a warning event in the active capture context (if any).

    Logged at debug level: these can fire once per step, and the capture
    list plus run reports are the channel meant for consumption.
    """
    log.debug("%s: %s", kind, message)
    sink = _capture.get()
    if sink is not None:
        sink.append(Event(kind, message, data))


@contextmanager
def capture_events() -> Iterator[list[Event]]:
    """Collect events recorded inside the ``with`` block."""
    sink: list[Event] = []
    token = _capture.set(sink)
    try:
        yield sink
    finally:
        _capture.reset(token)
