"""HTTP client for a language-model endpoint.

Request body (JSON)::

    {"role": "<role>", "prompt": "<rendered prompt>", "schema": {<JSON schema of result>}}

Response body (JSON)::

    {"result": <value matching the schema>}

Transport errors and 5xx responses are retried ``retries`` times before
:class:`OracleUnavailable`. An unparseable result triggers one repair re-ask;
a second failure raises :class:`MalformedVerdict`.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from typing import Any

import httpx

from ..core import FailureLabel
from ..errors import MalformedVerdict, OracleUnavailable
from . import RESULT_SCHEMAS, OracleHandle, OracleRequest, Role, UpdateChoice, render_context

log = logging.getLogger(__name__)

DEFAULT_TOKEN_ENV = "WEBRECALL_ORACLE_TOKEN"
REPAIR_NOTE = "\n\nYour previous reply could not be parsed. Reply again following the format exactly."

_TRUE = {"true", "yes", "1"}
_FALSE = {"false", "no", "0"}


class _Unparseable(ValueError):
    pass


def parse_result(role: Role, raw: Any) -> Any:
    """Coerce a raw endpoint result to the role's type; clamps heuristic promise into [0, 1]."""
    if role is Role.HEURISTIC:
        try:
            p = float(raw)
        except (TypeError, ValueError):
            raise _Unparseable(raw) from None
        if p != p:
            raise _Unparseable(raw)
        if not 0.0 <= p <= 1.0:
            log.warning("heuristic promise %r outside [0, 1]; clamped", raw)
            p = min(1.0, max(0.0, p))
        return p
    if role is Role.RELEVANCE:
        if isinstance(raw, bool):
            return raw
        s = str(raw).strip().lower()
        if s in _TRUE:
            return True
        if s in _FALSE:
            return False
        raise _Unparseable(raw)
    if role is Role.RANK_PATHS:
        if isinstance(raw, str):
            try:
                raw = json.loads(raw)
            except json.JSONDecodeError:
                raise _Unparseable(raw) from None
        if not isinstance(raw, list):
            raise _Unparseable(raw)
        try:
            return [int(v) for v in raw]
        except (TypeError, ValueError):
            raise _Unparseable(raw) from None
    if role is Role.CLASSIFY_ERROR:
        s = str(raw).strip().lower()
        for label in (FailureLabel.NAVIGATION, FailureLabel.EXECUTION):
            if s in (label.value, label.value.split("_")[0]):
                return label.value
        raise _Unparseable(raw)
    if role is Role.LOCATE_FIRST_ERROR:
        try:
            return int(str(raw).strip())
        except ValueError:
            raise _Unparseable(raw) from None
    if role is Role.REFLECT:
        if not isinstance(raw, str) or not raw.strip():
            raise _Unparseable(raw)
        return raw.strip()
    s = str(raw).strip().lower()
    for choice in UpdateChoice:
        if s == choice.value:
            return s
    raise _Unparseable(raw)


class RemoteOracle(OracleHandle):
    """Oracle backed by an HTTP endpoint; calls are serialized per handle."""

    def __init__(
        self,
        endpoint: str,
        *,
        token_env: str = DEFAULT_TOKEN_ENV,
        timeout: float = 30.0,
        retries: int = 2,
        client: httpx.Client | None = None,
    ) -> None:
        super().__init__()
        self.endpoint = endpoint
        self.token_env = token_env
        self.retries = retries
        self._client = client or httpx.Client(timeout=timeout)
        self._lock = threading.Lock()

    def _headers(self) -> dict[str, str]:
        token = os.environ.get(self.token_env)
        return {"Authorization": f"Bearer {token}"} if token else {}

    def post(self, body: dict[str, Any]) -> Any:
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = self._client.post(self.endpoint, json=body, headers=self._headers())
                if resp.status_code >= 500:
                    raise httpx.HTTPStatusError(f"status {resp.status_code}", request=resp.request, response=resp)
                resp.raise_for_status()
                payload = resp.json()
            except (httpx.HTTPError, json.JSONDecodeError) as exc:
                last = exc
                log.warning("oracle call failed (attempt %d/%d): %s", attempt + 1, self.retries + 1, exc)
                continue
            if not isinstance(payload, dict) or "result" not in payload:
                raise MalformedVerdict(f"response lacks a result field: {payload!r}")
            return payload["result"]
        raise OracleUnavailable(f"{self.endpoint} unreachable after {self.retries + 1} attempts: {last}")

    def _answer(self, req: OracleRequest) -> Any:
        prompt = render_context(req)
        body = {"role": req.role.value, "prompt": prompt, "schema": RESULT_SCHEMAS[req.role]}
        with self._lock:
            raw = self.post(body)
            try:
                return parse_result(req.role, raw)
            except _Unparseable:
                log.warning("unparseable %s result %r; asking once more", req.role.value, raw)
            raw = self.post({**body, "prompt": prompt + REPAIR_NOTE})
            try:
                return parse_result(req.role, raw)
            except _Unparseable:
                raise MalformedVerdict(f"{req.role.value}: unparseable result {raw!r} after repair") from None
