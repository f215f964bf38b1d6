"""Adjudication state machine producing the reference standard.

Two specialists grade each selected image independently in round 1, then
revise over up to three simultaneous rounds with mutual visibility of the
counterpart's latest grade and comments. Rounds are simultaneous rather than
strictly alternating so both specialists always carry equal round counts. If
the pair still disagrees after each has graded three times, a separate senior
specialist settles the image. For the DR task, grades that agree on the
merged 4-category scale count as consensus, since differences below moderate
NPDR are never adjudicated.

All mutations append to an event log; replaying the log reconstructs
identical session state, which is what crash recovery and the headless
simulator rely on.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Iterable, Mapping

from .errors import (
    AuthorizationError,
    ConflictError,
    ContractError,
    DomainError,
    IncompleteInputError,
    IntegrityError,
    ProtocolViolation,
    SequencingError,
)
from .eventlog import Event, EventLog
from .model import DMEStatus, DRSeverity, MergedSeverity, Task, merge_no_mild
from .sampling import AdjudicationSelection

MAX_ROUNDS = 3
TIE_BREAK_ROUND = MAX_ROUNDS + 1

OPENED = "session_opened"
GRADED = "grade_submitted"
TIEBROKEN = "tiebreak_submitted"

GradeValue = DRSeverity | MergedSeverity | DMEStatus | bool


class SessionStatus(enum.Enum):
    AWAITING = "awaiting"
    CONSENSUS = "consensus"
    TIE_BROKEN = "tie_broken"
    CLOSED = "closed"  # administrative cancellation; never produced by grading


class SessionProvenance(str, enum.Enum):
    AGREED_CONSENSUS = "agreed_consensus"
    SENIOR_TIE_BREAK = "senior_tie_break"


class Provenance(str, enum.Enum):
    """How a reference-standard entry was produced."""

    AGREED_WITHOUT_ADJUDICATION = "agreed_without_adjudication"
    ADJUDICATED_CONSENSUS = "adjudicated_consensus"
    SENIOR_TIE_BREAK = "senior_tie_break"


def encode_value(task: Task, value: GradeValue):
    """Wire/event encoding of a grade value for the given task."""
    if task == Task.DR:
        if isinstance(value, (DRSeverity, MergedSeverity)):
            return value.name.lower()
        raise DomainError(f"DR grade must be a severity, got {value!r}")
    if task == Task.DME:
        if isinstance(value, DMEStatus):
            return value.name.lower()
        raise DomainError(f"DME grade must be a DMEStatus, got {value!r}")
    if isinstance(value, bool):
        return value
    raise DomainError(f"gradability grade must be a boolean, got {value!r}")


def decode_value(task: Task, raw) -> GradeValue:
    if task == Task.DR:
        try:
            return DRSeverity[str(raw).upper()]
        except KeyError:
            return MergedSeverity[str(raw).upper()]
    if task == Task.DME:
        return DMEStatus[str(raw).upper()]
    if not isinstance(raw, bool):
        raise DomainError(f"gradability grade must be a boolean, got {raw!r}")
    return raw


def _validate_value(task: Task, value: GradeValue) -> None:
    if task == Task.DR and not isinstance(value, DRSeverity):
        raise DomainError(f"DR submissions use the 5-level scale, got {value!r}")
    if task == Task.DME and not isinstance(value, DMEStatus):
        raise DomainError(f"DME grade must be a DMEStatus, got {value!r}")
    if task in (Task.DR_GRADABILITY, Task.DME_GRADABILITY) and not isinstance(value, bool):
        raise DomainError(f"gradability grade must be a boolean, got {value!r}")


def equivalent(task: Task, a: GradeValue, b: GradeValue) -> bool:
    """Task-specific consensus equivalence; DR compares on the merged scale."""
    if task == Task.DR:
        return merge_no_mild(a) == merge_no_mild(b)
    return a == b


def final_form(task: Task, value: GradeValue) -> GradeValue:
    """Final reference values for DR live on the merged scale, because finer
    ground truth below moderate is never adjudicated."""
    if task == Task.DR:
        return merge_no_mild(value)
    return value


@dataclass(frozen=True)
class Submission:
    """One recorded grade within a session, with what the submitter could see.

    ``visible_counterpart`` is None for round-1 submissions: neither
    specialist sees the other before both have graded independently.
    """

    grader_id: str
    round: int
    value: GradeValue
    comment: str
    visible_counterpart: GradeValue | None
    visible_comments: tuple[str, ...]
    timestamp: str


@dataclass
class AdjudicationSession:
    session_id: str
    image_id: str
    task: Task
    specialist_a: str
    specialist_b: str
    senior: str
    rounds: list[Submission] = field(default_factory=list)
    status: SessionStatus = SessionStatus.AWAITING
    current_round: int = 1
    awaiting: frozenset = frozenset()
    final_value: GradeValue | None = None
    provenance: SessionProvenance | None = None

    def __post_init__(self):
        if not self.awaiting:
            self.awaiting = frozenset({self.specialist_a, self.specialist_b})

    @property
    def specialists(self) -> frozenset:
        return frozenset({self.specialist_a, self.specialist_b})

    @property
    def participants(self) -> frozenset:
        return self.specialists | {self.senior}

    @property
    def closed(self) -> bool:
        return self.status in (
            SessionStatus.CONSENSUS,
            SessionStatus.TIE_BROKEN,
            SessionStatus.CLOSED,
        )

    @property
    def awaiting_tiebreak(self) -> bool:
        return self.status == SessionStatus.AWAITING and self.current_round == TIE_BREAK_ROUND

    def counterpart(self, grader_id: str) -> str:
        return self.specialist_b if grader_id == self.specialist_a else self.specialist_a

    def grades_by(self, grader_id: str) -> list[Submission]:
        return [s for s in self.rounds if s.grader_id == grader_id]

    def latest_grade(self, grader_id: str) -> Submission | None:
        grades = self.grades_by(grader_id)
        return grades[-1] if grades else None

    def visible_to(self, grader_id: str) -> tuple[GradeValue | None, tuple[str, ...]]:
        """What a specialist may see before submitting in the current round:
        nothing in round 1, afterwards the counterpart's latest grade plus all
        comments left so far."""
        if self.current_round <= 1:
            return None, ()
        counterpart = self.counterpart(grader_id)
        latest = None
        for sub in self.rounds:
            if sub.grader_id == counterpart and sub.round < self.current_round:
                latest = sub.value
        comments = tuple(
            s.comment for s in self.rounds if s.comment and s.round < self.current_round
        )
        return latest, comments

    def to_state_dict(self) -> dict:
        """Canonical serializable state, used for replay-identity checks."""
        return {
            "session_id": self.session_id,
            "image_id": self.image_id,
            "task": self.task.value,
            "specialist_a": self.specialist_a,
            "specialist_b": self.specialist_b,
            "senior": self.senior,
            "status": self.status.value,
            "current_round": self.current_round,
            "awaiting": sorted(self.awaiting),
            "final_value": (
                None if self.final_value is None else encode_value(self.task, self.final_value)
            ),
            "provenance": None if self.provenance is None else self.provenance.value,
            "rounds": [
                {
                    "grader_id": s.grader_id,
                    "round": s.round,
                    "value": encode_value(self.task, s.value),
                    "comment": s.comment,
                    "visible_counterpart": (
                        None
                        if s.visible_counterpart is None
                        else encode_value(self.task, s.visible_counterpart)
                    ),
                    "visible_comments": list(s.visible_comments),
                    "timestamp": s.timestamp,
                }
                for s in self.rounds
            ],
        }


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat()


class AdjudicationEngine:
    """Event-sourced manager for adjudication sessions.

    Sessions are independent; callers must serialize mutations per session
    (the bundled service takes a per-process lock). ``clock`` is injectable so
    headless simulation produces byte-identical logs.
    """

    def __init__(
        self,
        log: EventLog | None = None,
        clock: Callable[[], str] | None = None,
        senior_sees_history: bool = False,
    ):
        self.log = log if log is not None else EventLog()
        self.clock = clock if clock is not None else _utc_now
        self.senior_sees_history = senior_sees_history
        self.sessions: dict[str, AdjudicationSession] = {}
        self._by_image_task: dict[tuple[str, str], str] = {}
        for event in self.log:
            self._apply(event)

    # -- event emission ----------------------------------------------------

    def _emit(self, session_id: str, event_type: str, actor: str, payload: dict) -> Event:
        event = Event(
            seq=self.log.next_seq(session_id),
            session_id=session_id,
            event_type=event_type,
            actor=actor,
            payload=payload,
            timestamp=self.clock(),
        )
        self._apply(event)
        self.log.append(event)
        return event

    def open_session(
        self,
        image_id: str,
        task: Task,
        specialist_a: str,
        specialist_b: str,
        senior: str,
        session_id: str | None = None,
        context: dict | None = None,
    ) -> AdjudicationSession:
        """Start a session in round 1 with both specialists blind."""
        task = Task(task)
        if len({specialist_a, specialist_b, senior}) != 3:
            raise DomainError("specialists and senior must be three distinct graders")
        if (image_id, task.value) in self._by_image_task:
            raise ConflictError(f"session already exists for ({image_id}, {task.value})")
        session_id = session_id or f"{task.value}:{image_id}"
        if session_id in self.sessions:
            raise ConflictError(f"session id {session_id} already in use")
        payload = {
            "image_id": image_id,
            "task": task.value,
            "specialist_a": specialist_a,
            "specialist_b": specialist_b,
            "senior": senior,
        }
        if context:
            payload["context"] = context
        self._emit(session_id, OPENED, "system", payload)
        return self.sessions[session_id]

    def submit_grade(
        self,
        session_id: str,
        grader_id: str,
        value: GradeValue,
        comment: str = "",
        extra: dict | None = None,
    ) -> AdjudicationSession:
        """Record a specialist grade and advance the state machine."""
        session = self._get(session_id)
        self._check_submit(session, grader_id, value)
        visible_value, visible_comments = session.visible_to(grader_id)
        payload = {
            "round": session.current_round,
            "value": encode_value(session.task, value),
            "comment": comment,
            "visible_counterpart": (
                None
                if visible_value is None
                else encode_value(session.task, visible_value)
            ),
            "visible_comments": list(visible_comments),
        }
        if extra:
            payload.update(extra)
        self._emit(session_id, GRADED, grader_id, payload)
        return self.sessions[session_id]

    def tiebreak(
        self,
        session_id: str,
        senior_id: str,
        value: GradeValue,
        comment: str = "",
        extra: dict | None = None,
    ) -> AdjudicationSession:
        """Senior specialist settles a session deadlocked after 3 rounds."""
        session = self._get(session_id)
        self._check_tiebreak(session, senior_id, value)
        payload = {
            "value": encode_value(session.task, value),
            "comment": comment,
            "history_visible": self.senior_sees_history,
        }
        if extra:
            payload.update(extra)
        self._emit(session_id, TIEBROKEN, senior_id, payload)
        return self.sessions[session_id]

    # -- guards ------------------------------------------------------------

    def _get(self, session_id: str) -> AdjudicationSession:
        try:
            return self.sessions[session_id]
        except KeyError:
            raise DomainError(f"unknown session {session_id}") from None

    @staticmethod
    def _check_submit(session: AdjudicationSession, grader_id: str, value: GradeValue) -> None:
        if grader_id not in session.participants:
            raise AuthorizationError(
                f"{grader_id} is not a participant in session {session.session_id}"
            )
        if session.closed:
            raise SequencingError(f"session {session.session_id} is closed")
        if grader_id in session.specialists and len(session.grades_by(grader_id)) >= MAX_ROUNDS:
            raise ProtocolViolation(
                f"{grader_id} already graded {MAX_ROUNDS} times in {session.session_id}"
            )
        if session.awaiting_tiebreak:
            raise SequencingError(
                f"session {session.session_id} awaits the senior tie-break"
            )
        if grader_id not in session.awaiting:
            raise SequencingError(
                f"{grader_id} is not awaited in round {session.current_round} "
                f"of {session.session_id}"
            )
        _validate_value(session.task, value)

    @staticmethod
    def _check_tiebreak(session: AdjudicationSession, senior_id: str, value: GradeValue) -> None:
        if senior_id not in session.participants:
            raise AuthorizationError(
                f"{senior_id} is not a participant in session {session.session_id}"
            )
        if senior_id != session.senior:
            raise AuthorizationError(
                f"{senior_id} is not the designated senior for {session.session_id}"
            )
        if session.closed:
            raise ProtocolViolation(f"session {session.session_id} is already closed")
        if not session.awaiting_tiebreak:
            raise ProtocolViolation(
                "tie-break requires 3 full rounds of disagreement "
                f"(session {session.session_id} is in round {session.current_round})"
            )
        _validate_value(session.task, value)

    # -- state transitions (single implementation, used live and in replay) -

    def _apply(self, event: Event) -> None:
        if event.event_type == OPENED:
            self._apply_open(event)
        elif event.event_type == GRADED:
            self._apply_grade(event)
        elif event.event_type == TIEBROKEN:
            self._apply_tiebreak(event)
        else:
            raise DomainError(f"unknown event type {event.event_type}")

    def _apply_open(self, event: Event) -> None:
        p = event.payload
        task = Task(p["task"])
        key = (p["image_id"], task.value)
        if event.session_id in self.sessions or key in self._by_image_task:
            raise ConflictError(f"duplicate session for {key}")
        session = AdjudicationSession(
            session_id=event.session_id,
            image_id=p["image_id"],
            task=task,
            specialist_a=p["specialist_a"],
            specialist_b=p["specialist_b"],
            senior=p["senior"],
        )
        self.sessions[event.session_id] = session
        self._by_image_task[key] = event.session_id

    def _apply_grade(self, event: Event) -> None:
        session = self._get(event.session_id)
        value = decode_value(session.task, event.payload["value"])
        self._check_submit(session, event.actor, value)
        visible_value, visible_comments = session.visible_to(event.actor)
        recorded = event.payload.get("visible_counterpart")
        if recorded != (
            None if visible_value is None else encode_value(session.task, visible_value)
        ):
            raise IntegrityError(
                f"event {event.seq} for {session.session_id} records visibility "
                "inconsistent with the replayed state"
            )
        session.rounds.append(
            Submission(
                grader_id=event.actor,
                round=session.current_round,
                value=value,
                comment=event.payload.get("comment", ""),
                visible_counterpart=visible_value,
                visible_comments=visible_comments,
                timestamp=event.timestamp,
            )
        )
        session.awaiting = session.awaiting - {event.actor}
        if session.awaiting:
            return
        # Both specialists have submitted in this round.
        a_val = session.latest_grade(session.specialist_a).value
        b_val = session.latest_grade(session.specialist_b).value
        if equivalent(session.task, a_val, b_val):
            session.status = SessionStatus.CONSENSUS
            session.final_value = final_form(session.task, a_val)
            session.provenance = SessionProvenance.AGREED_CONSENSUS
            session.awaiting = frozenset()
        elif session.current_round >= MAX_ROUNDS:
            session.current_round = TIE_BREAK_ROUND
            session.awaiting = frozenset({session.senior})
        else:
            session.current_round += 1
            session.awaiting = session.specialists

    def _apply_tiebreak(self, event: Event) -> None:
        session = self._get(event.session_id)
        value = decode_value(session.task, event.payload["value"])
        self._check_tiebreak(session, event.actor, value)
        session.rounds.append(
            Submission(
                grader_id=event.actor,
                round=TIE_BREAK_ROUND,
                value=value,
                comment=event.payload.get("comment", ""),
                visible_counterpart=None,
                visible_comments=(),
                timestamp=event.timestamp,
            )
        )
        session.status = SessionStatus.TIE_BROKEN
        session.final_value = final_form(session.task, value)
        session.provenance = SessionProvenance.SENIOR_TIE_BREAK
        session.awaiting = frozenset()

    # -- introspection -------------------------------------------------------

    def session_for(self, image_id: str, task: Task) -> AdjudicationSession | None:
        session_id = self._by_image_task.get((image_id, Task(task).value))
        return self.sessions.get(session_id) if session_id else None

    def sessions_for_task(self, task: Task) -> list[AdjudicationSession]:
        task = Task(task)
        return [s for s in self.sessions.values() if s.task == task]

    def state_dict(self) -> dict:
        return {sid: s.to_state_dict() for sid, s in sorted(self.sessions.items())}

    @classmethod
    def replay(cls, log: EventLog, senior_sees_history: bool = False) -> "AdjudicationEngine":
        return cls(
            log=EventLog(events=list(log)),
            senior_sees_history=senior_sees_history,
        )


@dataclass(frozen=True)
class ReferenceStandardEntry:
    """Final ground-truth label for one (image, task), with provenance."""

    image_id: str
    task: Task
    value: GradeValue
    provenance: Provenance


def _entry_from_session(session: AdjudicationSession) -> ReferenceStandardEntry:
    provenance = (
        Provenance.ADJUDICATED_CONSENSUS
        if session.provenance == SessionProvenance.AGREED_CONSENSUS
        else Provenance.SENIOR_TIE_BREAK
    )
    return ReferenceStandardEntry(
        image_id=session.image_id,
        task=session.task,
        value=session.final_value,
        provenance=provenance,
    )


def assemble_reference_standard(
    regional: Mapping[str, GradeValue],
    algorithm: Mapping[str, GradeValue],
    sessions: Iterable[AdjudicationSession],
    selection: AdjudicationSelection,
) -> dict[str, ReferenceStandardEntry]:
    """Combine adjudication outcomes with unadjudicated agreements.

    Adjudicated images take the session's final value. Images outside the
    selection where the two sources agree take the agreed value. For DR and
    DME the selection rules route every disagreement to adjudication, so an
    unadjudicated disagreement is an upstream bug, not a data condition; for
    gradability tasks only a sample of disagreements is adjudicated and the
    rest are legitimately absent. Values for the DR task must already be on
    the merged scale.
    """
    task = selection.task
    by_image = {}
    for session in sessions:
        if session.task != task:
            continue
        if session.image_id in by_image:
            raise ContractError(f"multiple sessions for ({session.image_id}, {task.value})")
        by_image[session.image_id] = session

    selected = selection.all_ids
    pending = sorted(
        image_id
        for image_id in selected
        if image_id not in by_image or not by_image[image_id].closed
    )
    if pending:
        raise IncompleteInputError(
            f"{len(pending)} selected images lack a closed session", pending
        )

    entries: dict[str, ReferenceStandardEntry] = {}
    for image_id in selected:
        entries[image_id] = _entry_from_session(by_image[image_id])

    if set(regional) != set(algorithm):
        raise ContractError(
            "regional and algorithm call maps must cover the same images"
        )
    for image_id in regional:
        if image_id in entries:
            continue
        reg, alg = regional[image_id], algorithm[image_id]
        if task == Task.DR:
            reg, alg = merge_no_mild(reg), merge_no_mild(alg)
        if reg == alg:
            entries[image_id] = ReferenceStandardEntry(
                image_id=image_id,
                task=task,
                value=reg,
                provenance=Provenance.AGREED_WITHOUT_ADJUDICATION,
            )
        elif task in (Task.DR, Task.DME):
            raise IntegrityError(
                f"unadjudicated disagreement on {task.value}", [image_id]
            )
        # Gradability disagreements outside the sampled subset stay absent.
    return entries
