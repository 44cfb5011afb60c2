from __future__ import annotations

import logging
import threading
import time

import httpx

from ..errors import BackendError, BackendUnavailable

log = logging.getLogger(__name__)

RETRYABLE_STATUS = {408, 409, 429, 500, 502, 503, 504}

# Caps concurrent requests across all remote clients in the process.
_inflight = threading.BoundedSemaphore(8)


def set_max_inflight(n: int) -> None:
    global _inflight
    _inflight = threading.BoundedSemaphore(max(1, n))


def post_json(
    url: str,
    payload: dict,
    *,
    token: str | None,
    timeout: float,
    retries: int = 3,
    backoff: float = 1.0,
    transport: httpx.BaseTransport | None = None,
    sleep=None,
) -> dict:
    """POST ``payload`` and return the decoded JSON body.

    Retries transport errors and retryable statuses with exponential backoff.
    Other non-2xx statuses raise immediately with the status attached.
    """
    sleep = sleep or time.sleep
    headers = {"Content-Type": "application/json"}
    if token:
        headers["Authorization"] = f"Bearer {token}"
    last: Exception | None = None
    for attempt in range(retries + 1):
        if attempt:
            sleep(backoff * 2 ** (attempt - 1))
        try:
            with _inflight, httpx.Client(timeout=timeout, transport=transport) as client:
                resp = client.post(url, json=payload, headers=headers)
        except httpx.HTTPError as exc:
            # never log headers: they carry the token
            log.warning("request to %s failed (attempt %d): %s", url, attempt + 1, type(exc).__name__)
            last = exc
            continue
        if resp.status_code in RETRYABLE_STATUS:
            log.warning("request to %s got HTTP %d (attempt %d)", url, resp.status_code, attempt + 1)
            last = BackendError(f"HTTP {resp.status_code}", status=resp.status_code, raw=resp.text[:2000])
            continue
        if resp.status_code >= 400:
            raise BackendError(f"HTTP {resp.status_code} from {url}", status=resp.status_code, raw=resp.text[:2000])
        try:
            return resp.json()
        except ValueError as exc:
            raise BackendError("response is not JSON", status=resp.status_code, raw=resp.text[:2000]) from exc
    status = getattr(last, "status", None)
    raise BackendUnavailable(f"{url} unavailable after {retries + 1} attempts: {last}", status=status)
