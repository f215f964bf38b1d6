"""Append-only event log backing adjudication sessions.

One JSON object per line, canonical encoding (sorted keys, no whitespace) so
a replayed log is byte-identical to the original. ``seq`` is strictly
increasing per session and the log is the single source of truth: session
state is always reconstructible by replay.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DomainError


@dataclass(frozen=True)
class Event:
    seq: int
    session_id: str
    event_type: str
    actor: str
    payload: dict
    timestamp: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "seq": self.seq,
                "session_id": self.session_id,
                "event_type": self.event_type,
                "actor": self.actor,
                "payload": self.payload,
                "timestamp": self.timestamp,
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, line: str) -> "Event":
        raw = json.loads(line)
        return cls(
            seq=int(raw["seq"]),
            session_id=str(raw["session_id"]),
            event_type=str(raw["event_type"]),
            actor=str(raw["actor"]),
            payload=dict(raw["payload"]),
            timestamp=str(raw["timestamp"]),
        )


@dataclass
class EventLog:
    """In-memory event sequence, optionally mirrored to a JSONL file.

    Appends are validated (per-session seq strictly increasing) and flushed
    to the backing file before the caller observes success. Past events are
    never mutated or reordered.
    """

    path: Path | None = None
    events: list[Event] = field(default_factory=list)
    _last_seq: dict = field(default_factory=dict)

    def __post_init__(self):
        self.path = Path(self.path) if self.path is not None else None
        for event in self.events:
            self._track(event)

    def _track(self, event: Event) -> None:
        last = self._last_seq.get(event.session_id)
        if last is not None and event.seq <= last:
            raise DomainError(
                f"event seq {event.seq} not increasing for session {event.session_id}"
            )
        self._last_seq[event.session_id] = event.seq

    def next_seq(self, session_id: str) -> int:
        return self._last_seq.get(session_id, 0) + 1

    def append(self, event: Event) -> None:
        self._track(event)
        self.events.append(event)
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(event.to_json() + "\n")
                handle.flush()

    def __iter__(self):
        return iter(self.events)

    def __len__(self):
        return len(self.events)

    @classmethod
    def read(cls, path) -> "EventLog":
        events = []
        with open(path, encoding="utf-8") as handle:
            for line in handle:
                line = line.strip()
                if line:
                    events.append(Event.from_json(line))
        return cls(path=None, events=events)

    def dump(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)
