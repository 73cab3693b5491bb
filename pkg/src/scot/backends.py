"""Model backends: an OpenAI-style chat-completion client and a deterministic simulator.

Both speak the same small surface: ``generate`` for text completions and
``next_token_distribution`` for a single constrained forward step.  Token
counts and durations are always backend-reported; nothing here re-tokenizes
text locally.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import re
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

import httpx

from .core import GenerationParams, Question, extract_think_block

logger = logging.getLogger(__name__)

DEFAULT_TOP_LOGPROBS = 20


class FinishReason(Enum):
    STOP = "stop"
    LENGTH_CAP = "length_cap"


@dataclass(frozen=True)
class Generation:
    """One completed generation call.

    ``token_count`` is the number of generated tokens as reported by the
    backend; when ``finish_reason`` is LENGTH_CAP it equals the requested
    ``max_new_tokens``.  ``prompt_tokens`` is the backend-reported prompt
    length, used by the data builders.
    """

    text: str
    token_count: int
    duration_ms: float
    finish_reason: FinishReason
    prompt_tokens: int = 0


@dataclass(frozen=True)
class DistributionResult:
    """Scores for candidate continuations after exactly one decoding step.

    ``scores`` may be partial: candidates outside the backend's top-k are
    absent.  ``duration_ms`` is the backend-reported cost of the step, which
    is what the selection stage of the pipeline charges to its latency
    accounting.
    """

    scores: Mapping[str, float]
    duration_ms: float


class BackendError(RuntimeError):
    """Base class for everything a backend can raise."""


class TransportError(BackendError):
    """Connection-level failure; retried with backoff."""


class BackendRefused(BackendError):
    """The server answered with a non-retriable error."""


class Timeout(BackendError):
    """The configured deadline elapsed."""


class LogprobsUnsupported(BackendError):
    """The backend cannot expose per-token alternatives."""


class Backend:
    """Minimal generation interface shared by the simulator and HTTP client."""

    name: str = "backend"

    def generate(
        self, prompt: str, params: GenerationParams, assistant_prefix: str = ""
    ) -> Generation:
        """Complete ``prompt``; ``assistant_prefix`` is already-written
        assistant-side text the model must continue from."""
        raise NotImplementedError

    def next_token_distribution(
        self, prompt: str, candidates: Sequence[str]
    ) -> DistributionResult:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# HTTP chat-completion client


_RETRIABLE_STATUS = {408, 429, 500, 502, 503, 504}


class HttpChatBackend(Backend):
    """Client for chat-completion servers speaking the de-facto JSON protocol.

    ``assistant_prefix`` is sent as a final assistant message together with
    ``continue_final_message`` so servers that support assistant continuation
    resume mid-turn instead of starting a fresh reply.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: Optional[str] = None,
        timeout_s: float = 120.0,
        max_retries: int = 3,
        backoff_s: float = 0.5,
        top_logprobs: int = DEFAULT_TOP_LOGPROBS,
        name: str = "http",
        transport: Optional[httpx.BaseTransport] = None,
    ):
        self.name = name
        self.model = model
        self.max_retries = max_retries
        self.backoff_s = backoff_s
        self.top_logprobs = top_logprobs
        self._url = base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(
            timeout=timeout_s, headers=headers, transport=transport
        )

    def close(self) -> None:
        self._client.close()

    def _post(self, body: dict) -> dict:
        last_error: Optional[Exception] = None
        for attempt in range(self.max_retries + 1):
            try:
                response = self._client.post(self._url, json=body)
            except httpx.TimeoutException as exc:
                raise Timeout(f"{self.name}: request timed out: {exc}") from exc
            except httpx.HTTPError as exc:
                last_error = exc
                if attempt < self.max_retries:
                    time.sleep(self.backoff_s * (2**attempt))
                    continue
                raise TransportError(f"{self.name}: {exc}") from exc
            if response.status_code in _RETRIABLE_STATUS:
                last_error = TransportError(
                    f"{self.name}: HTTP {response.status_code}"
                )
                if attempt < self.max_retries:
                    time.sleep(self.backoff_s * (2**attempt))
                    continue
                raise last_error
            if response.status_code >= 400:
                raise BackendRefused(
                    f"{self.name}: HTTP {response.status_code}: {response.text[:200]}"
                )
            try:
                return response.json()
            except ValueError as exc:
                raise BackendRefused(f"{self.name}: non-JSON response") from exc
        raise TransportError(f"{self.name}: {last_error}")

    def _messages(self, prompt: str, assistant_prefix: str = "") -> list[dict]:
        messages = [{"role": "user", "content": prompt}]
        if assistant_prefix:
            messages.append({"role": "assistant", "content": assistant_prefix})
        return messages

    def generate(
        self, prompt: str, params: GenerationParams, assistant_prefix: str = ""
    ) -> Generation:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        body: dict = {
            "model": self.model,
            "messages": self._messages(prompt, assistant_prefix),
            "temperature": params.temperature,
            "max_tokens": params.max_new_tokens,
        }
        if params.seed is not None:
            body["seed"] = params.seed
        if params.stop_sequences:
            body["stop"] = list(params.stop_sequences)
        if assistant_prefix:
            body["add_generation_prompt"] = False
            body["continue_final_message"] = True
        started = time.perf_counter()
        data = self._post(body)
        duration_ms = (time.perf_counter() - started) * 1000.0
        try:
            choice = data["choices"][0]
            text = choice["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendRefused(f"{self.name}: malformed completion") from exc
        finish = (
            FinishReason.LENGTH_CAP
            if choice.get("finish_reason") == "length"
            else FinishReason.STOP
        )
        usage = data.get("usage") or {}
        return Generation(
            text=text,
            token_count=int(usage.get("completion_tokens", 0)),
            duration_ms=duration_ms,
            finish_reason=finish,
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
        )

    def next_token_distribution(
        self, prompt: str, candidates: Sequence[str]
    ) -> DistributionResult:
        if not candidates:
            raise ValueError("candidates must be non-empty")
        body = {
            "model": self.model,
            "messages": self._messages(prompt),
            "temperature": 0.0,
            "max_tokens": 1,
            "logprobs": True,
            "top_logprobs": self.top_logprobs,
        }
        started = time.perf_counter()
        data = self._post(body)
        duration_ms = (time.perf_counter() - started) * 1000.0
        try:
            content = (data["choices"][0].get("logprobs") or {}).get("content")
        except (KeyError, IndexError, TypeError) as exc:
            raise BackendRefused(f"{self.name}: malformed completion") from exc
        if not content:
            raise LogprobsUnsupported(
                f"{self.name}: server returned no logprobs ({self.model})"
            )
        entries = list(content[0].get("top_logprobs") or [])
        if content[0].get("token") is not None:
            entries.append(content[0])
        scores: dict[str, float] = {}
        for entry in entries:
            token = entry.get("token")
            if token is None:
                continue
            stripped = token.strip()
            for cand in candidates:
                if token == cand or stripped == cand:
                    prob = math.exp(float(entry["logprob"]))
                    scores[cand] = max(scores.get(cand, 0.0), prob)
        return DistributionResult(scores=scores, duration_ms=duration_ms)


# ---------------------------------------------------------------------------
# Deterministic simulator


DEFAULT_THINK_TEXT = (
    "Working through the problem step by step. The final answer is {answer}."
)
DEFAULT_ANSWER_TEXT = "The final answer is \\boxed{{answer}}."

_GOLD_RE = re.compile(r"\[gold=([^\]]+)\]")
_BELIEF_RE = re.compile(r"final answer is (\S+)")

TokenSpec = Union[int, tuple[int, int]]


@dataclass(frozen=True)
class SimRule:
    """Scripted response selected by substring match against the prompt.

    A rule with ``match`` of None matches every prompt; rules are tried in
    order and the first match wins.  Token counts may be a fixed int or an
    inclusive ``(low, high)`` range drawn deterministically from the prompt
    and seed.  ``correct_rate`` is the probability that the scripted chain
    commits to the gold answer embedded in the prompt as ``[gold=...]``.
    """

    match: Optional[str] = None
    think_tokens: TokenSpec = 128
    answer_tokens: TokenSpec = 16
    correct_rate: float = 1.0
    think_text: Optional[str] = None
    answer_text: Optional[str] = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.correct_rate <= 1.0:
            raise ValueError(f"correct_rate out of range: {self.correct_rate}")
        for spec in (self.think_tokens, self.answer_tokens):
            if isinstance(spec, int):
                if spec < 1:
                    raise ValueError(f"token count must be >= 1, got {spec}")
            else:
                low, high = spec
                if low < 1 or high < low:
                    raise ValueError(f"bad token range {spec}")


@dataclass(frozen=True)
class SimSelection:
    """How the simulator behaves on selection prompts.

    ``oracle`` mode reads the gold marker and each option's committed answer
    out of the rendered prompt and peaks the distribution on the lowest
    correct option, falling back to the final (no-commitment) option when
    nothing is correct.  ``accuracy`` < 1 deliberately flips a deterministic
    share of choices.  The simulated step cost is ``latency_ms`` when set,
    otherwise ``cost_tokens`` charged at the scenario token rate.
    """

    mode: str = "oracle"  # oracle | fixed | uniform
    index: int = 1
    accuracy: float = 1.0
    peak: float = 0.9
    visible_top_k: int = DEFAULT_TOP_LOGPROBS
    latency_ms: Optional[float] = None
    cost_tokens: float = 1.0
    logprobs_supported: bool = True
    prompt_marker: str = "Best option number"
    fallback_text: str = "{index}"

    def __post_init__(self) -> None:
        if self.mode not in ("oracle", "fixed", "uniform"):
            raise ValueError(f"unknown selection mode {self.mode!r}")
        if not 0.0 < self.peak <= 1.0:
            raise ValueError(f"peak out of range: {self.peak}")
        if not 0.0 <= self.accuracy <= 1.0:
            raise ValueError(f"accuracy out of range: {self.accuracy}")


@dataclass(frozen=True)
class SimScript:
    """One named simulator scenario: token rate plus scripted behavior."""

    token_rate_tps: float
    rules: tuple[SimRule, ...] = (SimRule(),)
    selection: Optional[SimSelection] = SimSelection()
    think_open: str = "<think>"
    think_close: str = "</think>"
    jitter_seed: Optional[int] = None
    jitter_pct: float = 0.0

    def __post_init__(self) -> None:
        if self.token_rate_tps <= 0:
            raise ValueError(f"token_rate_tps must be positive: {self.token_rate_tps}")
        if not self.rules:
            raise ValueError("a script needs at least one rule")
        object.__setattr__(self, "rules", tuple(self.rules))
        if not 0.0 <= self.jitter_pct < 1.0:
            raise ValueError(f"jitter_pct out of range: {self.jitter_pct}")


def _hash_u64(*parts: str) -> int:
    digest = hashlib.blake2b(
        "\x1f".join(parts).encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big")


def _unit(*parts: str) -> float:
    return _hash_u64(*parts) / 2.0**64


def _draw_tokens(spec: TokenSpec, *key: str) -> int:
    if isinstance(spec, int):
        return spec
    low, high = spec
    return low + _hash_u64(*key) % (high - low + 1)


def _find_gold(prompt: str) -> Optional[str]:
    match = _GOLD_RE.search(prompt)
    return match.group(1) if match else None


def _last_belief(text: str) -> Optional[str]:
    matches = _BELIEF_RE.findall(text)
    return matches[-1].rstrip(".,") if matches else None


def _wrong_answer(gold: Optional[str], prompt: str, seed: int) -> str:
    h = _hash_u64(prompt, str(seed), "wrong")
    if gold and re.fullmatch(r"-?\d+", gold):
        return str(int(gold) + 1 + h % 7)
    if gold:
        return gold + str(1 + h % 9)
    return str(100000 + h % 900000)


def _parse_options(prompt: str, marker: str) -> list[tuple[int, str]]:
    """Recover ``(label, text)`` pairs from a rendered selection prompt.

    Labels are matched in increasing order at line starts, so option bodies
    that merely contain digits do not break the scan (bodies that start a
    line with the exact next label would, but scripted bodies are
    single-line).
    """
    end = prompt.rfind(marker) if marker else -1
    hay = prompt[:end] if end >= 0 else prompt
    starts: list[tuple[int, int, int]] = []
    pos = 0
    label = 1
    while True:
        m = re.compile(rf"(?m)^{label}\. ").search(hay, pos)
        if m is None:
            break
        starts.append((label, m.start(), m.end()))
        pos = m.end()
        label += 1
    options = []
    for k, (lab, _, body_start) in enumerate(starts):
        body_end = starts[k + 1][1] if k + 1 < len(starts) else len(hay)
        options.append((lab, hay[body_start:body_end].strip()))
    return options


class SimBackend(Backend):
    """Deterministic scripted backend.

    Responses are a pure function of ``(prompt, assistant_prefix, seed)``;
    a duration is ``token_count / token_rate_tps`` seconds exactly unless a
    jitter seed is configured.  ``sleep_factor`` > 0 additionally sleeps a
    scaled-down fraction of the simulated duration, which lets tests observe
    real fan-out concurrency.
    """

    def __init__(self, script: SimScript, name: str = "sim", sleep_factor: float = 0.0):
        self.script = script
        self.name = name
        self.sleep_factor = sleep_factor

    # -- internal draws ----------------------------------------------------

    def _rule_for(self, prompt: str) -> SimRule:
        for rule in self.script.rules:
            if rule.match is None or rule.match in prompt:
                return rule
        return self.script.rules[-1]

    def _correct_draw(self, prompt: str, seed: int, rule: SimRule) -> bool:
        return _unit(prompt, str(seed), "correct") < rule.correct_rate

    def would_draft_correctly(self, prompt: str, seed: int) -> bool:
        """The correctness draw a chain generation for ``(prompt, seed)``
        would commit to, without building the response."""
        return self._correct_draw(prompt, seed, self._rule_for(prompt))

    def _duration_ms(self, token_count: int, prompt: str) -> float:
        duration = token_count / self.script.token_rate_tps * 1000.0
        if self.script.jitter_seed is not None and self.script.jitter_pct > 0:
            wobble = 2.0 * _unit(prompt, str(self.script.jitter_seed), "jitter") - 1.0
            duration *= 1.0 + self.script.jitter_pct * wobble
        return duration

    def _maybe_sleep(self, duration_ms: float) -> None:
        if self.sleep_factor > 0:
            time.sleep(duration_ms * self.sleep_factor / 1000.0)

    # -- generation --------------------------------------------------------

    def generate(
        self, prompt: str, params: GenerationParams, assistant_prefix: str = ""
    ) -> Generation:
        if not prompt:
            raise ValueError("prompt must be non-empty")
        # temperature 0 means greedy decoding: the seed cannot matter
        seed = 0 if params.temperature == 0 else int(params.seed or 0)
        segments = self._scripted_segments(prompt, assistant_prefix, seed)
        text, token_count, finish = _apply_stops_and_cap(segments, params)
        duration_ms = self._duration_ms(token_count, prompt)
        self._maybe_sleep(duration_ms)
        return Generation(
            text=text,
            token_count=token_count,
            duration_ms=duration_ms,
            finish_reason=finish,
            prompt_tokens=max(1, (len(prompt) + len(assistant_prefix)) // 4),
        )

    def _scripted_segments(
        self, prompt: str, assistant_prefix: str, seed: int
    ) -> list[tuple[str, int]]:
        selection = self.script.selection
        if (
            selection is not None
            and selection.prompt_marker
            and selection.prompt_marker in prompt
            and not assistant_prefix
        ):
            # free-form fallback on a selection prompt: answer with the index
            text = selection.fallback_text.replace(
                "{index}", str(self._choose_option(prompt))
            )
            return [(text, max(1, len(text.split())))]
        rule = self._rule_for(prompt)
        if assistant_prefix.rstrip().endswith(self.script.think_close):
            # answer continuation: echo whatever the injected chain committed to
            body, _, closed = extract_think_block(
                assistant_prefix, self.script.think_open, self.script.think_close
            )
            if not closed:
                body = assistant_prefix.replace(self.script.think_close, " ")
            belief = _last_belief(body)
            if belief is None:
                belief = str(100000 + _hash_u64(prompt, str(seed), "junk") % 900000)
            answer = (rule.answer_text or DEFAULT_ANSWER_TEXT).replace(
                "{answer}", belief
            )
            tokens = _draw_tokens(
                rule.answer_tokens, prompt, assistant_prefix, str(seed), "atoks"
            )
            return [(answer, tokens)]
        gold = _find_gold(prompt)
        correct = self._correct_draw(prompt, seed, rule)
        belief = gold if (correct and gold is not None) else _wrong_answer(
            gold, prompt, seed
        )
        body = (rule.think_text or DEFAULT_THINK_TEXT).replace("{answer}", belief)
        answer = (rule.answer_text or DEFAULT_ANSWER_TEXT).replace("{answer}", belief)
        return [
            (
                self.script.think_open + body + self.script.think_close,
                _draw_tokens(rule.think_tokens, prompt, str(seed), "ttoks"),
            ),
            (answer, _draw_tokens(rule.answer_tokens, prompt, str(seed), "atoks")),
        ]

    # -- selection ---------------------------------------------------------

    def _choose_option(self, prompt: str) -> int:
        selection = self.script.selection
        assert selection is not None
        options = _parse_options(prompt, selection.prompt_marker)
        if not options:
            return max(1, selection.index)
        count = len(options)
        if selection.mode == "fixed":
            return selection.index if 1 <= selection.index <= count else count
        if selection.mode == "uniform":
            return 1
        gold = _find_gold(prompt)
        correct = []
        uncommitted = []
        for label, text in options:
            belief = _last_belief(text)
            if belief is None:
                uncommitted.append(label)
            elif gold is not None and belief == gold:
                correct.append(label)
        if correct:
            pick = min(correct)
        elif uncommitted:
            pick = max(uncommitted)
        else:
            pick = 1
        if selection.accuracy < 1.0 and count > 1:
            if _unit(prompt, "selacc") >= selection.accuracy:
                others = [label for label, _ in options if label != pick]
                pick = others[_hash_u64(prompt, "selalt") % len(others)]
        return pick

    def next_token_distribution(
        self, prompt: str, candidates: Sequence[str]
    ) -> DistributionResult:
        selection = self.script.selection
        if selection is None or not selection.logprobs_supported:
            raise LogprobsUnsupported(f"{self.name}: alternatives disabled")
        if not candidates:
            raise ValueError("candidates must be non-empty")
        count = len(candidates)
        if selection.mode == "uniform":
            scores = {c: 1.0 / count for c in candidates}
        else:
            pick = str(self._choose_option(prompt))
            if pick not in candidates:
                pick = candidates[-1]
            rest = (1.0 - selection.peak) / (count - 1) if count > 1 else 0.0
            scores = {
                c: (selection.peak if c == pick else rest) for c in candidates
            }
        ordered = sorted(
            scores.items(),
            key=lambda kv: (-kv[1], int(kv[0]) if kv[0].isdigit() else 0),
        )
        visible = dict(ordered[: max(1, selection.visible_top_k)])
        if selection.latency_ms is not None:
            duration_ms = selection.latency_ms
        else:
            duration_ms = selection.cost_tokens / self.script.token_rate_tps * 1000.0
        self._maybe_sleep(duration_ms)
        return DistributionResult(scores=visible, duration_ms=duration_ms)


def _apply_stops_and_cap(
    segments: list[tuple[str, int]], params: GenerationParams
) -> tuple[str, int, FinishReason]:
    """Cut scripted segments at the earliest stop sequence or the token cap.

    Stop sequences are consumed, not emitted, but their tokens count as
    generated; when a stop lands exactly on a segment boundary the reported
    token count is the exact scripted segment total, which keeps simulated
    latencies exact.
    """
    full = "".join(text for text, _ in segments)
    total_tokens = sum(tokens for _, tokens in segments)
    cut: Optional[tuple[int, int]] = None  # (char position, token cost)
    for stop in params.stop_sequences:
        if not stop:
            continue
        pos = full.find(stop)
        if pos < 0:
            continue
        if cut is None or pos < cut[0]:
            cut = (pos, _tokens_consumed(segments, pos + len(stop)))
    cap = params.max_new_tokens
    if cut is not None and cut[1] <= cap:
        return full[: cut[0]], cut[1], FinishReason.STOP
    if total_tokens > cap:
        return _char_prefix(segments, cap), cap, FinishReason.LENGTH_CAP
    return full, total_tokens, FinishReason.STOP


def _tokens_consumed(segments: list[tuple[str, int]], nchars: int) -> int:
    tokens = 0
    for text, seg_tokens in segments:
        if nchars >= len(text):
            tokens += seg_tokens
            nchars -= len(text)
        else:
            if nchars > 0 and text:
                tokens += max(1, round(seg_tokens * nchars / len(text)))
            break
    return max(1, tokens)


def _char_prefix(segments: list[tuple[str, int]], budget: int) -> str:
    out = []
    for text, seg_tokens in segments:
        if budget >= seg_tokens:
            out.append(text)
            budget -= seg_tokens
        else:
            if budget > 0 and seg_tokens > 0:
                out.append(text[: max(1, len(text) * budget // seg_tokens)])
            break
    return "".join(out)


# ---------------------------------------------------------------------------
# Script files and backend construction


def _rule_from_dict(raw: dict) -> SimRule:
    known = {
        "match",
        "think_tokens",
        "answer_tokens",
        "correct_rate",
        "think_text",
        "answer_text",
    }
    for key in raw:
        if key not in known:
            raise ValueError(f"unknown sim rule key {key!r}")
    cleaned = dict(raw)
    for field_name in ("think_tokens", "answer_tokens"):
        value = cleaned.get(field_name)
        if isinstance(value, list):
            cleaned[field_name] = tuple(value)
    return SimRule(**cleaned)


def _selection_from_dict(raw: dict) -> SimSelection:
    known = {
        "mode",
        "index",
        "accuracy",
        "peak",
        "visible_top_k",
        "latency_ms",
        "cost_tokens",
        "logprobs_supported",
        "prompt_marker",
        "fallback_text",
    }
    for key in raw:
        if key not in known:
            raise ValueError(f"unknown sim selection key {key!r}")
    return SimSelection(**raw)


def script_from_dict(raw: dict) -> SimScript:
    known = {
        "token_rate_tps",
        "rules",
        "selection",
        "think_open",
        "think_close",
        "jitter_seed",
        "jitter_pct",
    }
    for key in raw:
        if key not in known:
            raise ValueError(f"unknown sim script key {key!r}")
    cleaned = dict(raw)
    if "rules" in cleaned:
        cleaned["rules"] = tuple(_rule_from_dict(r) for r in cleaned["rules"])
    if cleaned.get("selection") is not None:
        cleaned["selection"] = _selection_from_dict(cleaned["selection"])
    return SimScript(**cleaned)


def load_sim_scripts(path: Union[str, Path]) -> dict[str, SimScript]:
    """Load ``{scenario name: script}`` from a JSON file."""
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: sim script file must be a JSON object")
    scripts = {}
    for name, entry in raw.items():
        try:
            scripts[name] = script_from_dict(entry)
        except (TypeError, ValueError) as exc:
            raise ValueError(f"{path}: scenario {name!r}: {exc}") from exc
    return scripts


def backend_from_config(config: dict, base_dir: Union[str, Path]) -> Backend:
    """Build a backend from one entry of the run configuration.

    ``kind: sim`` entries name a script file (relative to ``base_dir``) and a
    scenario inside it; ``kind: http`` entries name the server.  Secrets come
    from the environment via ``api_key_env``, never from the file itself.
    """
    kind = config.get("kind")
    if kind == "sim":
        for key in ("script", "scenario"):
            if key not in config:
                raise ValueError(f"sim backend entry is missing key {key!r}")
        path = Path(base_dir) / config["script"]
        scripts = load_sim_scripts(path)
        scenario = config["scenario"]
        if scenario not in scripts:
            raise ValueError(f"scenario {scenario!r} not found in {path}")
        return SimBackend(
            scripts[scenario],
            name=scenario,
            sleep_factor=float(config.get("sleep_factor", 0.0)),
        )
    if kind == "http":
        for key in ("base_url", "model"):
            if key not in config:
                raise ValueError(f"http backend entry is missing key {key!r}")
        api_key = config.get("api_key")
        if not api_key and config.get("api_key_env"):
            api_key = os.environ.get(config["api_key_env"])
        return HttpChatBackend(
            base_url=config["base_url"],
            model=config["model"],
            api_key=api_key,
            timeout_s=float(config.get("timeout_s", 120.0)),
            max_retries=int(config.get("max_retries", 3)),
            top_logprobs=int(config.get("top_logprobs", DEFAULT_TOP_LOGPROBS)),
            name=config.get("name", "http"),
        )
    raise ValueError(f"unknown backend kind {kind!r}")


def synthetic_questions(
    count: int, hard_rate: float = 0.0, seed: int = 0
) -> list[Question]:
    """Deterministic corpus for simulator runs.

    Each question embeds its gold answer as a ``[gold=...]`` marker that the
    scripted backends read; a ``[hard]`` marker is spread evenly over a
    ``hard_rate`` share of questions so scripts can key failure rules on it.
    """
    import random

    rng = random.Random(seed)
    questions = []
    for i in range(count):
        gold = str(rng.randrange(1, 999))
        hard = math.floor((i + 1) * hard_rate) - math.floor(i * hard_rate) >= 1
        text = f"Sample problem {i}: determine the quantity. [gold={gold}]"
        if hard:
            text += " [hard]"
        questions.append(Question(id=f"q{i:05d}", text=text, gold_answer=gold))
    return questions
