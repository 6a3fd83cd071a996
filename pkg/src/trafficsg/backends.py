"""Language-model and vision backends.

Reasoner backends implement ``complete(messages) -> str`` over chat-style
messages (``[{"role": ..., "content": ...}]``). Vision backends implement
``answer(images, question) -> str``. The scripted variants are fully
deterministic and drive the tests; the remote variants talk to a
chat-completion HTTP endpoint.
"""

from __future__ import annotations

import base64
import io
import json
import logging
import os
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import httpx

from .errors import BackendError, ConfigError

log = logging.getLogger(__name__)

_OBS_MARK = "Observation:"


class ModelBackend(Protocol):
    def complete(self, messages: list[dict]) -> str: ...


def last_observation(messages: list[dict]) -> str:
    """Text of the most recent observation in the last user message, or ''."""
    for msg in reversed(messages):
        if msg.get("role") == "user":
            content = msg.get("content") or ""
            idx = content.rfind(_OBS_MARK)
            return "" if idx < 0 else content[idx + len(_OBS_MARK):].strip()
    return ""


class ScriptedBackend:
    """Replays canned replies, then falls back to regex rules on the last observation.

    ``rules`` is a sequence of ``(pattern, reply)`` or ``(pattern, reply,
    expand)``; the first pattern found (``re.search``) in the latest
    observation wins, and with ``expand`` the reply is a ``Match.expand``
    template (``\\1`` pulls in a group). With ``cycle`` the reply
    list restarts once exhausted. Running out of script raises
    :class:`BackendError`.
    """

    def __init__(self, replies: Sequence[str] = (), rules: Sequence[tuple] = (),
                 default: str | None = None, cycle: bool = False):
        self.replies = list(replies)
        self.rules = [(re.compile(r[0]), r[1], bool(r[2]) if len(r) > 2 else False) for r in rules]
        self.default = default
        self.cycle = cycle
        self.calls = 0
        self._cursor = 0

    def complete(self, messages: list[dict]) -> str:
        self.calls += 1
        if self._cursor < len(self.replies):
            reply = self.replies[self._cursor]
            self._cursor += 1
            return reply
        if self.cycle and self.replies:
            self._cursor = 1
            return self.replies[0]
        obs = last_observation(messages)
        for pattern, reply, expand in self.rules:
            m = pattern.search(obs)
            if m:
                return m.expand(reply) if expand else reply
        if self.default is not None:
            return self.default
        raise BackendError("scripted backend has no reply left")

    @classmethod
    def from_script(cls, data: dict, question_id: str | None = None) -> "ScriptedBackend":
        """Build from a script document, selecting the per-question block if present."""
        if "questions" in data and question_id is not None:
            block = data["questions"].get(str(question_id))
            if block is None:
                if "default_script" in data:
                    block = data["default_script"]
                else:
                    raise BackendError(f"script has no entry for question {question_id!r}")
            data = block
        if isinstance(data, list):
            data = {"replies": data}
        rules = [(r["match"], r["reply"], r.get("expand", False)) for r in data.get("rules", [])]
        return cls(data.get("replies", []), rules, data.get("default"), bool(data.get("cycle", False)))


def load_script(path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read script {path}: {exc}") from None


class ScriptedVLM:
    """Answers keyed on (image refs, question). A single ref may be given as a string."""

    def __init__(self, table=None, default: str | None = None):
        self.table = {}
        for (refs, question), answer in (table or {}).items():
            self.table[(self._key(refs), question)] = answer
        self.default = default

    @staticmethod
    def _key(refs):
        return (refs,) if isinstance(refs, str) else tuple(refs)

    def answer(self, images, question: str) -> str:
        key = (tuple(img.ref for img in images), question)
        if key in self.table:
            answer = self.table[key]
            if isinstance(answer, BaseException):
                raise answer
            return answer
        if self.default is not None:
            return self.default
        raise BackendError(f"scripted VLM has no answer for {key!r}")

    @classmethod
    def from_entries(cls, entries: list[dict], default: str | None = None) -> "ScriptedVLM":
        return cls({(tuple(e["images"]), e["question"]): e["answer"] for e in entries}, default)


@dataclass
class RemoteConfig:
    endpoint: str
    model: str
    token_env: str = "OPENAI_API_KEY"
    timeout_s: float = 60.0
    max_retries: int = 1
    backoff_s: float = 1.0
    temperature: float = 0.0

    @classmethod
    def from_dict(cls, d: dict) -> "RemoteConfig":
        missing = [k for k in ("endpoint", "model") if not d.get(k)]
        if missing:
            raise ConfigError(f"remote backend config missing: {', '.join(missing)}")
        if "token" in d or "api_key" in d:
            raise ConfigError("put the auth token in an environment variable, not the config file")
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


_TRANSIENT_STATUS = {408, 429, 500, 502, 503, 504}


class RemoteBackend:
    """Chat-completion client, temperature 0, one retry with exponential backoff."""

    def __init__(self, config: RemoteConfig, transport: httpx.BaseTransport | None = None,
                 sleep=time.sleep):
        token = os.environ.get(config.token_env, "").strip()
        if not token:
            raise ConfigError(f"environment variable {config.token_env} is not set")
        self.config = config
        self._token = token
        self._sleep = sleep
        self._client = httpx.Client(timeout=config.timeout_s, transport=transport)

    def _post(self, messages: list[dict]) -> dict:
        body = {"model": self.config.model, "messages": messages,
                "temperature": self.config.temperature}
        headers = {"Authorization": f"Bearer {self._token}"}
        last = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                self._sleep(self.config.backoff_s * 2 ** (attempt - 1))
            try:
                resp = self._client.post(self.config.endpoint, json=body, headers=headers)
            except httpx.TimeoutException as exc:
                last = f"timeout: {exc}"
                continue
            except httpx.TransportError as exc:
                last = f"transport error: {exc}"
                continue
            if resp.status_code in _TRANSIENT_STATUS:
                last = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise BackendError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError:
                raise BackendError("endpoint returned non-JSON body") from None
        raise BackendError(f"request failed after {self.config.max_retries + 1} attempts ({last})")

    @staticmethod
    def _content(data: dict) -> str:
        try:
            msg = data["choices"][0]["message"]
        except (KeyError, IndexError, TypeError):
            raise BackendError("malformed completion response") from None
        if msg.get("refusal"):
            raise BackendError(f"model refused: {msg['refusal']}")
        content = msg.get("content")
        if not isinstance(content, str):
            raise BackendError("completion has no text content")
        return content

    def complete(self, messages: list[dict]) -> str:
        return self._content(self._post(messages))


def _png_data_url(pixels) -> str:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(pixels).save(buf, format="PNG")
    return "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")


class RemoteVLM(RemoteBackend):
    """Vision questions through the same chat endpoint, images inlined as PNG data URLs."""

    def answer(self, images, question: str) -> str:
        parts: list[dict] = [{"type": "text", "text": question}]
        for img in images:
            if img.pixels is not None and img.pixels.size:
                parts.append({"type": "image_url", "image_url": {"url": _png_data_url(img.pixels)}})
            else:
                parts.append({"type": "text",
                              "text": f"[{img.ref}: no pixels available, region {img.rect_px}]"})
        return self.complete([{"role": "user", "content": parts}])
