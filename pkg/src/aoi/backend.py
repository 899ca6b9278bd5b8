"""Pluggable completion backends: HTTP chat-completion client and scripted tables.

The HTTP client speaks the de-facto chat-completions wire shape:

    POST {endpoint}
    {"model": ..., "messages": [{"role": ..., "content": ...}, ...],
     "temperature": ..., "max_tokens": ...}
    -> {"choices": [{"message": {"content": ...}}]}

The scripted backend is an exact lookup table keyed by
(scenario_id, role, iteration, round); a miss is a test bug and fails loudly.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Protocol

import requests

ENV_ENDPOINT = "AOI_LLM_ENDPOINT"
ENV_MODEL = "AOI_LLM_MODEL"
ENV_API_KEY = "AOI_LLM_API_KEY"

DEFAULT_SAMPLING_TEMPERATURE = 0.7
DEFAULT_JUDGE_TEMPERATURE = 0.0


class BackendError(RuntimeError):
    pass


class BackendUnavailable(BackendError):
    """The HTTP endpoint failed for every attempt."""


class ScriptMiss(BackendError, KeyError):
    """A scripted lookup had no entry for the requested key."""


def count_tokens(text: str) -> int:
    """Deterministic token estimate: ceil(utf-8 byte length / 4).

    This is an enforcement heuristic for context budgets, not an exact
    tokenizer; it is monotone in string length and subadditive within one
    token of equality.
    """
    return (len(text.encode("utf-8")) + 3) // 4


@dataclass(frozen=True)
class Prompt:
    system: str
    messages: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        if not self.system and not self.messages:
            raise ValueError("prompt needs a system string or at least one message")

    def wire_messages(self) -> list[dict[str, str]]:
        out = []
        if self.system:
            out.append({"role": "system", "content": self.system})
        out.extend({"role": role, "content": content} for role, content in self.messages)
        return out


@dataclass(frozen=True)
class CallKey:
    """Identifies one completion call inside a scripted run."""

    scenario_id: str
    role: str
    iteration: int
    round: int


class BackendKind(Enum):
    HTTP = "http"
    SCRIPTED = "scripted"


@dataclass
class BackendConfig:
    kind: BackendKind
    endpoint: str = ""
    model: str = ""
    temperature: float = DEFAULT_SAMPLING_TEMPERATURE
    max_tokens: int = 2048
    timeout: float = 60.0
    retries: int = 2
    script: Optional[dict[CallKey, str]] = None

    def __post_init__(self) -> None:
        if self.kind is BackendKind.HTTP and not self.endpoint:
            raise ValueError("http backend requires an endpoint")
        if self.kind is BackendKind.SCRIPTED and self.script is None:
            raise ValueError("scripted backend requires a script table")


class CompletionBackend(Protocol):
    def complete(self, prompt: Prompt, key: Optional[CallKey] = None) -> str: ...


class ScriptedBackend:
    """Immutable lookup table of canned completions.

    Referentially transparent: the same key always returns the same string;
    the prompt is ignored except for being required.
    """

    def __init__(self, table: dict[CallKey, str]) -> None:
        self._table = dict(table)

    def complete(self, prompt: Prompt, key: Optional[CallKey] = None) -> str:
        if key is None:
            raise ScriptMiss("scripted backend requires a call key")
        try:
            return self._table[key]
        except KeyError:
            raise ScriptMiss(f"no scripted completion for {key}") from None

    def __len__(self) -> int:
        return len(self._table)


def load_script_table(path_or_obj) -> dict[CallKey, str]:
    """Load a script table from a JSON file or an already-decoded object.

    Schema: {"entries": [{"role", "iteration", "round", "completion"}, ...],
             "scenario_id": ...}. A per-entry "scenario_id" overrides the
    top-level one.
    """
    if isinstance(path_or_obj, (str, os.PathLike)):
        with open(path_or_obj, "r", encoding="utf-8") as fh:
            obj = json.load(fh)
    else:
        obj = path_or_obj
    default_scenario = obj.get("scenario_id", "")
    table: dict[CallKey, str] = {}
    for entry in obj["entries"]:
        key = CallKey(
            scenario_id=entry.get("scenario_id", default_scenario),
            role=entry["role"],
            iteration=int(entry["iteration"]),
            round=int(entry["round"]),
        )
        if key in table:
            raise ValueError(f"duplicate script entry for {key}")
        table[key] = entry["completion"]
    return table


class HttpBackend:
    """Chat-completion client with bounded retries on transport failure."""

    def __init__(self, config: BackendConfig, session: Optional[requests.Session] = None,
                 api_key: Optional[str] = None) -> None:
        if config.kind is not BackendKind.HTTP:
            raise ValueError("HttpBackend requires an http config")
        self.config = config
        self._session = session or requests.Session()
        self._api_key = api_key if api_key is not None else os.environ.get(ENV_API_KEY, "")

    def complete(self, prompt: Prompt, key: Optional[CallKey] = None) -> str:
        payload = {
            "model": self.config.model,
            "messages": prompt.wire_messages(),
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        attempts = self.config.retries + 1
        last_error: Optional[Exception] = None
        for _ in range(attempts):
            try:
                response = self._session.post(
                    self.config.endpoint, json=payload, headers=headers,
                    timeout=self.config.timeout,
                )
                response.raise_for_status()
                body = response.json()
                return body["choices"][0]["message"]["content"]
            except (requests.RequestException, KeyError, IndexError, ValueError) as exc:
                last_error = exc
        raise BackendUnavailable(
            f"endpoint {self.config.endpoint} failed after {attempts} attempts: {last_error}"
        )


def build_backend(config: BackendConfig) -> CompletionBackend:
    if config.kind is BackendKind.HTTP:
        return HttpBackend(config)
    assert config.script is not None
    return ScriptedBackend(config.script)


def http_config_from_env(temperature: float = DEFAULT_SAMPLING_TEMPERATURE) -> BackendConfig:
    """Build an HTTP config from AOI_LLM_ENDPOINT / AOI_LLM_MODEL / AOI_LLM_API_KEY."""
    endpoint = os.environ.get(ENV_ENDPOINT, "")
    if not endpoint:
        raise BackendError(f"{ENV_ENDPOINT} is not set")
    return BackendConfig(
        kind=BackendKind.HTTP,
        endpoint=endpoint,
        model=os.environ.get(ENV_MODEL, "default"),
        temperature=temperature,
    )


@dataclass
class BackendSession:
    """Keys successive completions of one agent invocation.

    Rounds restart at 1 for each (scenario, role, iteration), which is the
    keying scheme script tables use.
    """

    backend: CompletionBackend
    scenario_id: str
    role: str
    iteration: int
    calls: list[CallKey] = field(default_factory=list)

    def complete(self, prompt: Prompt) -> str:
        key = CallKey(self.scenario_id, self.role, self.iteration, len(self.calls) + 1)
        self.calls.append(key)
        return self.backend.complete(prompt, key=key)


SessionFactory = Callable[[str, int], BackendSession]
