"""Network-facing grading service over the adjudication engine.

Single-node service: every mutation appends to the event log under a process
lock, so per-session linearizability holds trivially and crash recovery is a
log replay. Submissions are idempotent under a client-supplied request token;
the stored response is rebuilt during replay so a restart cannot double-apply
a retried request.

Endpoints: GET /graders/{id}/work, POST /sessions/{id}/grades,
GET /sessions/{id}, GET /progress, POST /cohorts. Error bodies carry
{code, message, current_state}.
"""

from __future__ import annotations

import csv
import threading
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .adjudication import (
    TIE_BREAK_ROUND,
    AdjudicationEngine,
    AdjudicationSession,
    decode_value,
    encode_value,
)
from .errors import (
    AuthorizationError,
    ConflictError,
    DomainError,
    ProtocolViolation,
    ScreenEvalError,
    SequencingError,
)
from .eventlog import EventLog
from .model import Task
from .pipeline import agreement_rates

_ERROR_STATUS = {
    AuthorizationError: 403,
    ConflictError: 409,
    SequencingError: 409,
    ProtocolViolation: 409,
    DomainError: 422,
}


def _error_code(exc: Exception) -> str:
    return {
        AuthorizationError: "authorization_error",
        ConflictError: "conflict",
        SequencingError: "sequencing_error",
        ProtocolViolation: "protocol_violation",
        DomainError: "domain_error",
    }.get(type(exc), "error")


class GradeSubmission(BaseModel):
    grader_id: str
    value: str | bool
    comment: str = ""
    request_token: str = Field(min_length=1)
    expected_round: int | None = None


class CohortItem(BaseModel):
    image_id: str
    regional_value: str | bool | None = None
    algorithm_value: str | bool | None = None


class CohortRequest(BaseModel):
    task: str
    specialist_a: str
    specialist_b: str
    senior: str
    items: list[CohortItem]


def read_registry(path) -> dict[str, str]:
    """Grader registry file: CSV with columns grader_id, role."""
    registry = {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != ("grader_id", "role"):
            raise DomainError(f"registry {path} must have columns grader_id,role")
        for row in reader:
            registry[row["grader_id"]] = row["role"]
    return registry


@dataclass
class WorkItem:
    session_id: str
    image_id: str
    task: str
    round: int
    visible_counterpart_grade: object
    visible_comments: list

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "image_id": self.image_id,
            "task": self.task,
            "round": self.round,
            "visible_counterpart_grade": self.visible_counterpart_grade,
            "visible_comments": self.visible_comments,
        }


class GradingService:
    """Engine wrapper holding the lock, the token map, and cohort context."""

    def __init__(self, log_path=None, registry=None, senior_sees_history=True):
        self.lock = threading.RLock()
        self.registry = dict(registry or {})
        self.senior_sees_history = senior_sees_history
        self.token_responses: dict[str, dict] = {}
        existing = []
        if log_path is not None and Path(log_path).exists():
            existing = EventLog.read(log_path).events
        self.engine = AdjudicationEngine(
            log=EventLog(), senior_sees_history=senior_sees_history
        )
        for event in existing:
            self.engine._apply(event)
            self.engine.log.append(event)
            token = event.payload.get("request_token")
            if token:
                session = self.engine.sessions[event.session_id]
                self.token_responses[token] = self.session_view(session, event.actor)
        if log_path is not None:
            self.engine.log.path = Path(log_path)

    # -- authorization -------------------------------------------------------

    def known_grader(self, grader_id: str) -> bool:
        if grader_id in self.registry:
            return True
        return any(
            grader_id in s.participants for s in self.engine.sessions.values()
        )

    def require_known(self, grader_id: str) -> None:
        if not self.known_grader(grader_id):
            raise AuthorizationError(f"unknown grader {grader_id}")

    # -- views ----------------------------------------------------------------

    def work_item(self, session: AdjudicationSession, grader_id: str) -> WorkItem:
        if session.awaiting_tiebreak:
            visible_grade = None
            visible_comments: list = []
            if self.senior_sees_history:
                visible_comments = [s.comment for s in session.rounds if s.comment]
            return WorkItem(
                session_id=session.session_id,
                image_id=session.image_id,
                task=session.task.value,
                round=TIE_BREAK_ROUND,
                visible_counterpart_grade=visible_grade,
                visible_comments=visible_comments,
            )
        value, comments = session.visible_to(grader_id)
        return WorkItem(
            session_id=session.session_id,
            image_id=session.image_id,
            task=session.task.value,
            round=session.current_round,
            visible_counterpart_grade=(
                None if value is None else encode_value(session.task, value)
            ),
            visible_comments=list(comments),
        )

    def list_work(self, grader_id: str) -> list[WorkItem]:
        self.require_known(grader_id)
        items = []
        for session in self.engine.sessions.values():  # insertion order = age
            if session.closed or grader_id not in session.awaiting:
                continue
            items.append(self.work_item(session, grader_id))
        return items

    def session_view(self, session: AdjudicationSession, grader_id: str) -> dict:
        """What one participant may see of a session.

        Open sessions never leak grades the engine's visibility rule hides:
        a specialist sees their own submissions plus counterpart grades from
        completed rounds; the senior sees round history only when the service
        is configured to show it. Closed sessions expose full history.
        """
        if grader_id not in session.participants:
            raise AuthorizationError(
                f"{grader_id} does not participate in {session.session_id}"
            )
        full_history = session.closed or (
            grader_id == session.senior and self.senior_sees_history
        )
        rounds = []
        for sub in session.rounds:
            visible = full_history or sub.grader_id == grader_id or (
                grader_id in session.specialists
                and sub.round < session.current_round
            )
            if not visible:
                continue
            rounds.append(
                {
                    "grader_id": sub.grader_id,
                    "round": sub.round,
                    "value": encode_value(session.task, sub.value),
                    "comment": sub.comment,
                }
            )
        return {
            "session_id": session.session_id,
            "image_id": session.image_id,
            "task": session.task.value,
            "state": session.status.value,
            "round": session.current_round,
            "awaiting": sorted(session.awaiting),
            "awaiting_tiebreak": session.awaiting_tiebreak,
            "final_value": (
                None
                if session.final_value is None
                else encode_value(session.task, session.final_value)
            ),
            "provenance": (
                None if session.provenance is None else session.provenance.value
            ),
            "rounds": rounds,
        }

    # -- mutations --------------------------------------------------------------

    def submit(self, session_id: str, payload: GradeSubmission) -> dict:
        with self.lock:
            if payload.request_token in self.token_responses:
                return self.token_responses[payload.request_token]
            self.require_known(payload.grader_id)
            session = self.engine.sessions.get(session_id)
            if session is None:
                raise DomainError(f"unknown session {session_id}")
            if payload.grader_id not in session.participants:
                raise AuthorizationError(
                    f"{payload.grader_id} does not participate in {session_id}"
                )
            if payload.expected_round is not None and (
                session.closed or payload.expected_round != session.current_round
            ):
                raise ConflictError(
                    f"client acted on round {payload.expected_round} but session "
                    f"is in round {session.current_round}"
                )
            value = decode_value(session.task, payload.value)
            extra = {"request_token": payload.request_token}
            if session.awaiting_tiebreak and payload.grader_id == session.senior:
                self.engine.tiebreak(
                    session_id, payload.grader_id, value, payload.comment, extra=extra
                )
            else:
                self.engine.submit_grade(
                    session_id, payload.grader_id, value, payload.comment, extra=extra
                )
            response = self.session_view(session, payload.grader_id)
            self.token_responses[payload.request_token] = response
            return response

    def create_cohort(self, request: CohortRequest) -> dict:
        task = Task(request.task)
        created, conflicts = [], []
        with self.lock:
            for item in request.items:
                context = {}
                if item.regional_value is not None:
                    context["regional_value"] = item.regional_value
                if item.algorithm_value is not None:
                    context["algorithm_value"] = item.algorithm_value
                try:
                    session = self.engine.open_session(
                        item.image_id,
                        task,
                        request.specialist_a,
                        request.specialist_b,
                        request.senior,
                        context=context or None,
                    )
                    created.append(session.session_id)
                except ConflictError:
                    conflicts.append(item.image_id)
        return {"created": created, "conflicts": conflicts}

    # -- progress ------------------------------------------------------------------

    def progress(self) -> dict:
        with self.lock:
            state_counts: dict[str, int] = {}
            provenance_counts: dict[str, int] = {}
            by_task: dict[Task, list] = {}
            context_regional: dict[Task, dict] = {}
            context_algorithm: dict[Task, dict] = {}
            contexts = self._session_contexts()
            for session in self.engine.sessions.values():
                state_counts[session.status.value] = (
                    state_counts.get(session.status.value, 0) + 1
                )
                if session.provenance is not None:
                    key = session.provenance.value
                    provenance_counts[key] = provenance_counts.get(key, 0) + 1
                by_task.setdefault(session.task, []).append(session)
                ctx = contexts.get(session.session_id, {})
                if "regional_value" in ctx:
                    context_regional.setdefault(session.task, {})[session.image_id] = (
                        decode_value(session.task, ctx["regional_value"])
                    )
                if "algorithm_value" in ctx:
                    context_algorithm.setdefault(session.task, {})[session.image_id] = (
                        decode_value(session.task, ctx["algorithm_value"])
                    )
            agreement = {}
            for task, sessions in by_task.items():
                rates = agreement_rates(
                    sessions,
                    context_regional.get(task, {}),
                    context_algorithm.get(task, {}),
                    task,
                )
                agreement[task.value] = rates
            return {
                "sessions": len(self.engine.sessions),
                "states": state_counts,
                "provenance": provenance_counts,
                "agreement": agreement,
            }

    def _session_contexts(self) -> dict[str, dict]:
        contexts = {}
        for event in self.engine.log:
            if event.event_type == "session_opened" and "context" in event.payload:
                contexts[event.session_id] = event.payload["context"]
        return contexts


def create_app(
    log_path=None, registry=None, senior_sees_history=True
) -> FastAPI:
    service = GradingService(
        log_path=log_path, registry=registry, senior_sees_history=senior_sees_history
    )
    app = FastAPI(title="screeneval grading service")
    app.state.service = service

    def current_state(session_id: str):
        session = service.engine.sessions.get(session_id)
        if session is None:
            return None
        return {
            "state": session.status.value,
            "round": session.current_round,
            "awaiting": sorted(session.awaiting),
        }

    @app.exception_handler(ScreenEvalError)
    async def handle_domain_errors(request, exc: ScreenEvalError):
        status = 500
        for klass, code in _ERROR_STATUS.items():
            if isinstance(exc, klass):
                status = code
                break
        session_id = request.path_params.get("session_id")
        return JSONResponse(
            status_code=status,
            content={
                "code": _error_code(exc),
                "message": str(exc),
                "current_state": current_state(session_id) if session_id else None,
            },
        )

    @app.get("/graders/{grader_id}/work")
    def list_work(grader_id: str):
        with service.lock:
            return [item.to_dict() for item in service.list_work(grader_id)]

    @app.post("/sessions/{session_id}/grades")
    def submit(session_id: str, payload: GradeSubmission):
        return service.submit(session_id, payload)

    @app.get("/sessions/{session_id}")
    def get_session(session_id: str, grader_id: str):
        with service.lock:
            service.require_known(grader_id)
            session = service.engine.sessions.get(session_id)
            if session is None:
                raise DomainError(f"unknown session {session_id}")
            return service.session_view(session, grader_id)

    @app.post("/cohorts")
    def create_cohort(request: CohortRequest):
        return service.create_cohort(request)

    @app.get("/progress")
    def progress():
        return service.progress()

    return app


def main(argv=None) -> int:
    """Run the service; configuration via flags or environment."""
    import argparse
    import os

    import uvicorn

    parser = argparse.ArgumentParser(prog="screeneval-service")
    parser.add_argument("--host", default=os.environ.get("SCREENEVAL_HOST", "127.0.0.1"))
    parser.add_argument(
        "--port", type=int, default=int(os.environ.get("SCREENEVAL_PORT", "8700"))
    )
    parser.add_argument("--log", default=os.environ.get("SCREENEVAL_LOG", "adjudication.log"))
    parser.add_argument("--registry", default=os.environ.get("SCREENEVAL_REGISTRY"))
    parser.add_argument(
        "--senior-blind",
        action="store_true",
        help="hide round history from the senior tie-breaker",
    )
    args = parser.parse_args(argv)
    registry = read_registry(args.registry) if args.registry else None
    app = create_app(
        log_path=args.log,
        registry=registry,
        senior_sees_history=not args.senior_blind,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
