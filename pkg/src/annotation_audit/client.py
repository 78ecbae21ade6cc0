"""Collect annotations and verbalized confidences from a chat-completions endpoint."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from typing import Optional

import httpx

from .exceptions import AuthenticationError, ValidationError
from .model import AnnotationRecord

logger = logging.getLogger(__name__)

DEFAULT_CONFIDENCE_TEMPLATE = (
    "Consider the text below and the label {previous_answer}. "
    "What is the probability, between 0 and 1, that this label is correct? "
    "Reply with the number only.\n\nText: {text}\n\nProbability:"
)
_NUMBER = re.compile(r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)")


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    api_key_env_var: str = "OPENAI_API_KEY"
    timeout: float = 30.0
    max_retries: int = 5
    max_concurrency: int = 4
    requests_per_minute: Optional[float] = None
    backoff_base: float = 1.0
    backoff_max: float = 60.0

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValidationError("max_retries must be >= 0")
        if self.max_concurrency < 1:
            raise ValidationError("max_concurrency must be >= 1")
        if self.requests_per_minute is not None and self.requests_per_minute <= 0:
            raise ValidationError("requests_per_minute must be positive")


def render_prompt(template, text):
    """Substitute ``text`` for the single ``{text}`` placeholder, verbatim."""
    n = template.count("{text}")
    if n != 1:
        raise ValidationError(f"prompt template must contain {{text}} exactly once (found {n})")
    return template.replace("{text}", text)


def map_output(raw, output_mapping):
    """Return the label of the first pattern that matches ``raw``.

    Patterns match case-insensitively and only on word boundaries, so
    ``polite`` does not match inside ``impolite``. Returns ``None`` (NA)
    when nothing matches.
    """
    if not output_mapping:
        raise ValidationError("output mapping is empty")
    for pattern, label in output_mapping:
        if re.search(rf"\b(?:{pattern})\b", raw, flags=re.IGNORECASE):
            return label
    return None


def parse_confidence(reply):
    """First decimal number in ``reply`` if it lies in ``[0, 1]``, else ``None``."""
    m = _NUMBER.search(reply or "")
    if m is None:
        return None
    value = float(m.group())
    return value if 0.0 <= value <= 1.0 else None


def cache_key(task_id, datapoint_id, config_id, template):
    payload = json.dumps([task_id, datapoint_id, config_id, template], ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ResponseCache:
    """JSON-lines cache of successful annotation records keyed by SHA-256."""

    def __init__(self, path=None):
        self.path = None if path is None else os.fspath(path)
        self._lock = threading.Lock()
        self._data = {}
        if self.path and os.path.exists(self.path):
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        entry = json.loads(line)
                        self._data[entry["key"]] = AnnotationRecord.from_dict(entry["record"])

    def get(self, key):
        return self._data.get(key)

    def put(self, key, record):
        with self._lock:
            if self._data.get(key) == record:
                return
            self._data[key] = record
            if self.path:
                os.makedirs(os.path.dirname(os.path.abspath(self.path)), exist_ok=True)
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"key": key, "record": record.to_dict()}, ensure_ascii=False) + "\n")

    def __len__(self):
        return len(self._data)


class TokenBucket:
    """Thread-safe limiter allowing ``rate_per_minute`` requests per minute."""

    def __init__(self, rate_per_minute, burst=1, clock=time.monotonic, sleep=time.sleep):
        self.rate = rate_per_minute / 60.0
        self.capacity = float(burst)
        self.tokens = float(burst)
        self.clock = clock
        self.sleep = sleep
        self.updated = clock()
        self._lock = threading.Lock()

    def acquire(self):
        while True:
            with self._lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self.sleep(wait)


class _PermanentFailure(Exception):
    pass


class _TransientFailure(Exception):
    pass


def _utc_now():
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class AnnotationClient:
    """Chat-completions client with retries, caching and bounded fan-out.

    ``transport`` is handed to ``httpx.Client`` and lets tests substitute an
    in-process endpoint (``httpx.MockTransport``).
    """

    def __init__(self, endpoint, cache=None, transport=None, clock=_utc_now, sleep=time.sleep):
        self.endpoint = endpoint
        api_key = os.environ.get(endpoint.api_key_env_var)
        if not api_key:
            raise AuthenticationError(f"environment variable {endpoint.api_key_env_var} is not set")
        self.cache = cache if cache is not None else ResponseCache()
        self.clock = clock
        self.sleep = sleep
        self.limiter = TokenBucket(endpoint.requests_per_minute, sleep=sleep) if endpoint.requests_per_minute else None
        self.retries = {}
        self.requests_sent = 0
        self._count_lock = threading.Lock()
        self._http = httpx.Client(
            base_url=endpoint.base_url.rstrip("/"),
            headers={"Authorization": f"Bearer {api_key}"},
            timeout=endpoint.timeout,
            transport=transport,
        )

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _post_once(self, payload):
        if self.limiter is not None:
            self.limiter.acquire()
        with self._count_lock:
            self.requests_sent += 1
        try:
            resp = self._http.post("/chat/completions", json=payload)
        except httpx.TransportError as exc:
            raise _TransientFailure(f"transport error: {exc}") from None
        if resp.status_code in (401, 403):
            raise AuthenticationError(f"endpoint rejected credentials (HTTP {resp.status_code})")
        if resp.status_code == 429 or resp.status_code >= 500:
            raise _TransientFailure(f"HTTP {resp.status_code}: {resp.text[:200]}")
        if resp.status_code >= 400:
            raise _PermanentFailure(f"HTTP {resp.status_code}: {resp.text[:500]}")
        try:
            return resp.json()["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise _PermanentFailure(f"malformed response: {exc}") from None

    def complete(self, model, prompt, temperature=0.0, max_tokens=20):
        """Send one chat request; returns ``(text, retries_used)``.

        Raises ``_PermanentFailure`` once the request fails permanently or
        transient failures exhaust ``max_retries``.
        """
        payload = {
            "model": model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": temperature,
            "max_tokens": max_tokens,
        }
        attempt = 0
        while True:
            try:
                return self._post_once(payload), attempt
            except _TransientFailure as exc:
                if attempt >= self.endpoint.max_retries:
                    raise _PermanentFailure(f"gave up after {attempt + 1} attempts: {exc}") from None
                delay = min(self.endpoint.backoff_max, self.endpoint.backoff_base * 2**attempt)
                logger.info("transient failure (%s); retrying in %.1fs", exc, delay)
                self.sleep(delay)
                attempt += 1

    def _annotate_one(self, task_id, config, dp):
        key = (task_id, dp.datapoint_id, config.config_id)
        prompt = render_prompt(config.prompt_template, dp.text)
        try:
            text, retries = self.complete(config.model_name, prompt, config.temperature, config.max_tokens)
        except _PermanentFailure as exc:
            logger.warning("annotation failed for %s: %s", key, exc)
            return AnnotationRecord(task_id, dp.datapoint_id, config.config_id, f"ERROR: {exc}", None, True, None, self.clock()), False
        self.retries[key] = retries
        label = map_output(text, config.output_mapping)
        return AnnotationRecord(task_id, dp.datapoint_id, config.config_id, text, label, label is None, None, self.clock()), True

    def annotate(self, task_id, config, datapoints):
        """Annotate ``datapoints`` with ``config``; results follow input order.

        Cached records are returned without a request. Per-datapoint
        failures become NA records carrying the error text and are not
        cached. An authentication failure aborts the run.
        """
        datapoints = list(datapoints)
        results = [None] * len(datapoints)
        pending = []
        for i, dp in enumerate(datapoints):
            hit = self.cache.get(cache_key(task_id, dp.datapoint_id, config.config_id, config.prompt_template))
            if hit is not None:
                results[i] = hit
            else:
                pending.append(i)
        if pending:
            with ThreadPoolExecutor(max_workers=self.endpoint.max_concurrency) as pool:
                futures = {i: pool.submit(self._annotate_one, task_id, config, datapoints[i]) for i in pending}
                try:
                    for i, fut in futures.items():
                        record, ok = fut.result()
                        results[i] = record
                        if ok:
                            key = cache_key(task_id, datapoints[i].datapoint_id, config.config_id, config.prompt_template)
                            self.cache.put(key, record)
                except AuthenticationError:
                    for fut in futures.values():
                        fut.cancel()
                    raise
        return results

    def elicit_confidence(self, config, text, previous_answer, template=None):
        """Ask the model how likely its earlier label is; ``None`` if unusable."""
        template = template or config.confidence_template or DEFAULT_CONFIDENCE_TEMPLATE
        if "{text}" not in template or "{previous_answer}" not in template:
            raise ValidationError("confidence template needs {text} and {previous_answer}")
        prompt = template.replace("{previous_answer}", previous_answer).replace("{text}", text)
        try:
            reply, _ = self.complete(config.model_name, prompt, config.temperature, config.max_tokens)
        except _PermanentFailure as exc:
            logger.warning("confidence elicitation failed: %s", exc)
            return None
        return parse_confidence(reply)

    def add_confidences(self, config, records, texts):
        """Return ``records`` with confidences filled in for non-NA annotations."""
        records = list(records)
        todo = [i for i, r in enumerate(records) if not r.is_na and r.confidence is None]

        def one(i):
            r = records[i]
            return self.elicit_confidence(config, texts[r.datapoint_id], r.mapped_label)

        out = list(records)
        with ThreadPoolExecutor(max_workers=self.endpoint.max_concurrency) as pool:
            for i, c in zip(todo, pool.map(one, todo)):
                if c is not None:
                    out[i] = replace(records[i], confidence=c)
        return out


def annotate(endpoint, config, task, datapoints=None, cache=None, transport=None):
    """Annotate a task's datapoints (all of them by default) with one configuration."""
    config.check_labels(task.label_set)
    with AnnotationClient(endpoint, cache=cache, transport=transport) as client:
        return client.annotate(task.task_id, config, task.datapoints if datapoints is None else datapoints)


def elicit_confidence(endpoint, config, text, previous_answer, template=None, transport=None):
    with AnnotationClient(endpoint, transport=transport) as client:
        return client.elicit_confidence(config, text, previous_answer, template)
