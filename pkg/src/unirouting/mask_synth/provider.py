"""Program providers: a deterministic stub and an HTTP completion endpoint."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import time
import urllib.error
import urllib.request
from dataclasses import dataclass

log = logging.getLogger(__name__)

ENDPOINT_ENV = "UNIROUTING_LLM_ENDPOINT"
KEY_VAR_ENV = "UNIROUTING_LLM_KEY_VAR"
DEFAULT_KEY_VAR = "UNIROUTING_LLM_KEY"
MODEL_ENV = "UNIROUTING_LLM_MODEL"


class ProviderError(RuntimeError):
    pass


@dataclass(frozen=True)
class CandidateProgram:
    source: str

    @property
    def id(self) -> str:
        return hashlib.sha256(self.source.encode()).hexdigest()[:16]


class StubProvider:
    """Returns its corpus in order, cycling; counts calls."""

    def __init__(self, corpus):
        self.corpus = list(corpus)
        if not self.corpus:
            raise ValueError("stub corpus is empty")
        self.calls = 0

    def complete(self, prompt, max_tokens=2048, temperature=0.7) -> str:
        text = self.corpus[self.calls % len(self.corpus)]
        self.calls += 1
        return text


class HTTPProvider:
    """POSTs {model, prompt, max_tokens, temperature} as JSON and reads a completion.

    The endpoint comes from UNIROUTING_LLM_ENDPOINT; the credential is read from the
    variable named by UNIROUTING_LLM_KEY_VAR (default UNIROUTING_LLM_KEY).
    """

    def __init__(self, endpoint=None, model=None, key_var=None, timeout=60.0, retries=3, backoff=1.0):
        self.endpoint = endpoint or os.environ.get(ENDPOINT_ENV)
        if not self.endpoint:
            raise ProviderError(f"no endpoint configured; set {ENDPOINT_ENV}")
        self.model = model or os.environ.get(MODEL_ENV, "default")
        self.key_var = key_var or os.environ.get(KEY_VAR_ENV, DEFAULT_KEY_VAR)
        self.timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self.calls = 0

    def _post(self, body: bytes) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.key_var)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        req = urllib.request.Request(self.endpoint, data=body, headers=headers, method="POST")
        with urllib.request.urlopen(req, timeout=self.timeout) as resp:
            return json.loads(resp.read().decode())

    def complete(self, prompt, max_tokens=2048, temperature=0.7) -> str:
        self.calls += 1
        body = json.dumps({"model": self.model, "prompt": prompt, "max_tokens": max_tokens,
                           "temperature": temperature}).encode()
        last = None
        for attempt in range(self.retries):
            try:
                doc = self._post(body)
                return _completion_text(doc)
            except (urllib.error.URLError, TimeoutError, OSError, ValueError, KeyError) as exc:
                last = exc
                log.warning("provider attempt %d failed: %s", attempt + 1, exc)
                if attempt + 1 < self.retries:
                    time.sleep(self.backoff * 2 ** attempt)
        raise ProviderError(f"provider unreachable after {self.retries} attempts: {last}")


def _completion_text(doc) -> str:
    if isinstance(doc, dict):
        for key in ("completion", "text", "output"):
            if isinstance(doc.get(key), str):
                return doc[key]
        choices = doc.get("choices")
        if choices:
            c = choices[0]
            if isinstance(c.get("text"), str):
                return c["text"]
            return c["message"]["content"]
    raise ValueError("response carries no completion text")


_FENCE = re.compile(r"```(?:python|py)?\s*\n(.*?)```", re.S)


def extract_program(text: str) -> str:
    """Pull the candidate source out of a completion; raises ValueError if absent."""
    if not isinstance(text, str):
        raise ValueError("completion is not text")
    blocks = [b for b in _FENCE.findall(text) if "def mask(" in b]
    src = blocks[0] if blocks else text
    if "def mask(" not in src:
        raise ValueError("completion defines no mask(state, n, instance) function")
    return src.strip() + "\n"


def request_candidates(provider, prompt: str, k: int, diagnostics=None) -> list:
    """Up to ``k`` candidates; failures are recorded in ``diagnostics`` and skipped."""
    diag = diagnostics if diagnostics is not None else []
    out = []
    for i in range(max(k, 0)):
        try:
            text = provider.complete(prompt)
        except Exception as exc:  # transport errors never escape
            diag.append(f"request {i}: {exc}")
            continue
        try:
            out.append(CandidateProgram(extract_program(text)))
        except ValueError as exc:
            diag.append(f"request {i}: malformed completion: {exc}")
    return out
