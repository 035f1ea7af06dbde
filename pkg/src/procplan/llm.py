"""Chat-model planning protocol: prompt templates, response parsing, retrying
transport, and batch evaluation with all-wrong scoring for failures.

The prompt pair is a fixed template: the system text names the action pool
and shows two worked examples, the user text states the step count and
carries the start/end images. Responses must be numbered action lists drawn
from the pool; matching is exact after lowercasing, trimming, and collapsing
internal whitespace. Image payloads are opaque base64 strings end to end;
nothing here decodes them.

Failed samples (transport dead or final response unparseable) are scored as
all-wrong rather than dropped, so reports stay comparable across planners.
"""

from __future__ import annotations

import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from procplan.evaluation import EvalReport, compute_metrics
from procplan.ioutil import read_jsonl, stable_json, write_jsonl
from procplan.planners import ActionSpace, Plan

SYSTEM_TEMPLATE = (
    "You are a helpful assistant, an expert in answering questions about action "
    "planning in instructional videos. Based on the start and end images, you need "
    "to infer the actions to transform from the start images to the end images. "
    "You must choose from the following actions [action_pool]. Output the name of "
    "the actions step by step.\n"
    "\n"
    "Example: 1. cut in half 2. slice the pulp\n"
    "\n"
    "Example: 1. dip detergent with rag or apply detergent 2. clean the floor "
    "3. wash the floor"
)

USER_TEMPLATE = (
    "Infer the actions to transform from the start images to the end images. "
    "The actions must be actions from the given action pool.\n"
    "\n"
    "The number of actions is [T]. The start images: [images encoded with base64]. "
    "The end images: [images encoded with base64]."
)

IMAGE_SLOT = "[images encoded with base64]"
IMAGES_PER_SIDE = (0, 1, 3)


class TransportError(RuntimeError):
    """Transient transport failure; retried up to the attempt budget."""


class ResponseParseError(ValueError):
    pass


class WrongCountError(ResponseParseError):
    def __init__(self, expected: int, found: int):
        super().__init__(f"expected {expected} actions, found {found}")
        self.expected = expected
        self.found = found


class UnmatchedLabelError(ResponseParseError):
    def __init__(self, label: str):
        super().__init__(f"label not in the action pool: {label!r}")
        self.label = label


class DuplicateNumberingError(ResponseParseError):
    def __init__(self, number: int):
        super().__init__(f"duplicate item number {number}")
        self.number = number


class PlanningFailure(RuntimeError):
    """Raised after the attempt budget; carries the exchanges for logging."""

    def __init__(self, message: str, exchanges: list["ChatExchange"]):
        super().__init__(message)
        self.exchanges = exchanges


@dataclass(frozen=True)
class PromptSpec:
    system_text: str
    user_text: str
    pool_labels: tuple[str, ...]
    horizon: int
    image_payloads: tuple[str, ...] = ()
    images_per_side: int = 0


@dataclass(frozen=True)
class ChatExchange:
    request: dict
    response: str
    latency: float
    transport_id: str

    def __post_init__(self):
        if not self.response:
            raise ValueError("a successful exchange needs a non-empty response")


def render_action_pool(labels: list[str]) -> str:
    return "[" + ", ".join(labels) + "]"


def build_prompt(space: ActionSpace, horizon: int,
                 start_images: list[str] | tuple[str, ...] = (),
                 end_images: list[str] | tuple[str, ...] = ()) -> PromptSpec:
    """Fill the templates; byte-identical output for identical inputs."""
    if horizon < 2:
        raise ValueError(f"horizon must be >= 2, got {horizon}")
    if space.size == 0:
        raise ValueError("action pool is empty")
    if len(start_images) != len(end_images):
        raise ValueError(
            f"got {len(start_images)} start images and {len(end_images)} end images"
        )
    per_side = len(start_images)
    if per_side not in IMAGES_PER_SIDE:
        raise ValueError(f"images per side must be one of {IMAGES_PER_SIDE}, got {per_side}")
    system_text = SYSTEM_TEMPLATE.replace(
        "[action_pool]", render_action_pool(space.action_ids)
    )
    user_text = USER_TEMPLATE.replace("[T]", str(horizon))
    if per_side == 0:
        # No images: the slots are omitted, the text is otherwise identical.
        user_text = user_text.replace(IMAGE_SLOT, "")
    return PromptSpec(
        system_text=system_text,
        user_text=user_text,
        pool_labels=tuple(space.action_ids),
        horizon=horizon,
        image_payloads=tuple(start_images) + tuple(end_images),
        images_per_side=per_side,
    )


def normalize_label(label: str) -> str:
    return re.sub(r"\s+", " ", label.strip()).lower()


_ITEM_RE = re.compile(r"(\d+)\s*\.\s*")


def parse_plan_response(text: str, space: ActionSpace, horizon: int) -> Plan:
    """Extract "k. label" items; exactly `horizon` pool labels required."""
    matches = list(_ITEM_RE.finditer(text))
    items: list[tuple[int, str]] = []
    seen: set[int] = set()
    for i, m in enumerate(matches):
        number = int(m.group(1))
        if number in seen:
            raise DuplicateNumberingError(number)
        seen.add(number)
        end = matches[i + 1].start() if i + 1 < len(matches) else len(text)
        items.append((number, text[m.end():end].strip()))
    if len(items) != horizon:
        raise WrongCountError(expected=horizon, found=len(items))
    pool = {normalize_label(a): a for a in space.action_ids}
    plan: Plan = []
    for _, label in sorted(items, key=lambda item: item[0]):
        key = normalize_label(label)
        if key not in pool:
            raise UnmatchedLabelError(label)
        plan.append(pool[key])
    return plan


def render_plan(plan: Plan) -> str:
    """The answer format the system prompt's examples demonstrate."""
    return " ".join(f"{k}. {label}" for k, label in enumerate(plan, start=1))


def chat_request(prompt: PromptSpec, model: str) -> dict:
    """JSON chat body; image payloads ride as opaque parts after the text."""
    if prompt.image_payloads:
        user_content: object = [{"type": "text", "text": prompt.user_text}] + [
            {"type": "image", "data": payload} for payload in prompt.image_payloads
        ]
    else:
        user_content = prompt.user_text
    return {
        "model": model,
        "messages": [
            {"role": "system", "content": prompt.system_text},
            {"role": "user", "content": user_content},
        ],
    }


class MockTransport:
    """Offline transport: scripted replies, optionally keyed by request body.

    Replies may be strings or exceptions to raise. With `by_request`, each
    canonicalized request body consumes its own FIFO of replies, which keeps
    replay deterministic under concurrency.
    """

    transport_id = "mock"
    model = "mock"

    def __init__(self, replies: list | None = None,
                 by_request: dict[str, list[str]] | None = None):
        self._replies = list(replies or [])
        self._by_request = by_request
        self._lock = threading.Lock()

    @classmethod
    def from_fixture(cls, path: str | Path) -> "MockTransport":
        by_request: dict[str, list[str]] = {}
        for row in read_jsonl(path):
            by_request.setdefault(stable_json(row["request"]), []).append(row["response"])
        return cls(by_request=by_request)

    def send(self, request: dict) -> str:
        with self._lock:
            if self._by_request is not None:
                queue = self._by_request.get(stable_json(request))
                if not queue:
                    raise TransportError("no scripted reply for this request")
                item = queue.pop(0)
            else:
                if not self._replies:
                    raise TransportError("mock transport is out of replies")
                item = self._replies.pop(0)
        if isinstance(item, Exception):
            raise item
        if not item:
            raise TransportError("empty response")
        return item


class HttpChatTransport:
    """POSTs chat-completion bodies; auth and endpoint come from config."""

    transport_id = "http"

    def __init__(self, endpoint: str, model: str, api_key: str | None = None,
                 timeout: float = 60.0, session=None):
        import requests

        self.endpoint = endpoint
        self.model = model
        self.timeout = timeout
        self._session = session if session is not None else requests.Session()
        self._headers = {"Content-Type": "application/json"}
        if api_key:
            self._headers["Authorization"] = f"Bearer {api_key}"

    def send(self, request: dict) -> str:
        import requests

        try:
            resp = self._session.post(self.endpoint, json=request,
                                      headers=self._headers, timeout=self.timeout)
        except requests.RequestException as err:
            raise TransportError(f"request failed: {err}") from err
        if resp.status_code != 200:
            raise TransportError(f"chat endpoint returned {resp.status_code}")
        try:
            text = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError) as err:
            raise TransportError(f"malformed chat response: {err}") from err
        if not text:
            raise TransportError("empty response")
        return text


def backoff_delays(attempts: int, base: float, cap: float) -> list[float]:
    """Delay before each retry: base, 2*base, 4*base, ... capped at `cap`."""
    return [min(cap, base * 2.0 ** i) for i in range(max(0, attempts - 1))]


def plan_via_chat(transport, prompt: PromptSpec, space: ActionSpace, *,
                  max_attempts: int = 3, backoff_base: float = 0.5,
                  backoff_cap: float = 8.0,
                  sleeper=None) -> tuple[Plan, list[ChatExchange]]:
    """Submit, retry transport and parse failures with capped exponential
    backoff, and return the parsed plan plus every completed exchange."""
    if max_attempts < 1:
        raise ValueError(f"max_attempts must be >= 1, got {max_attempts}")
    do_sleep = sleeper if sleeper is not None else time.sleep
    delays = backoff_delays(max_attempts, backoff_base, backoff_cap)
    request = chat_request(prompt, getattr(transport, "model", "unknown"))
    exchanges: list[ChatExchange] = []
    last_error: Exception | None = None
    for attempt in range(max_attempts):
        if attempt:
            do_sleep(delays[attempt - 1])
        started = time.monotonic()
        try:
            text = transport.send(request)
        except TransportError as err:
            last_error = err
            continue
        exchanges.append(ChatExchange(
            request=request, response=text,
            latency=time.monotonic() - started,
            transport_id=getattr(transport, "transport_id", "unknown"),
        ))
        try:
            return parse_plan_response(text, space, prompt.horizon), exchanges
        except ResponseParseError as err:
            last_error = err
    raise PlanningFailure(
        f"no valid plan after {max_attempts} attempts: {last_error}", exchanges
    )


@dataclass
class LlmSample:
    """One evaluation item: ground truth plus optional boundary images."""

    sample_id: str
    gt_action_ids: list[str]
    start_images: list[str] = field(default_factory=list)
    end_images: list[str] = field(default_factory=list)


@dataclass
class LlmRunResult:
    report: EvalReport
    failures: list[str]
    exchanges: list[dict]


def run_llm_eval(samples: list[LlmSample], space: ActionSpace, transport, *,
                 split: str = "test_base", space_name: str = "base", seed: int = 0,
                 in_flight: int = 4, max_attempts: int = 3,
                 backoff_base: float = 0.5, backoff_cap: float = 8.0,
                 sleeper=None, fixture_path: str | Path | None = None) -> LlmRunResult:
    """Evaluate every sample; failed samples score all-wrong, never dropped.

    Requests run with at most `in_flight` in parallel; results and the
    replayable fixture rows merge back in sample order.
    """
    if not samples:
        raise ValueError("no samples to evaluate")
    horizons = {len(s.gt_action_ids) for s in samples}
    if len(horizons) != 1:
        raise ValueError(f"samples mix horizons {sorted(horizons)}")
    horizon = horizons.pop()
    if in_flight < 1:
        raise ValueError(f"in_flight must be >= 1, got {in_flight}")

    def worker(sample: LlmSample) -> tuple[Plan | None, list[ChatExchange]]:
        prompt = build_prompt(space, horizon, sample.start_images, sample.end_images)
        try:
            return plan_via_chat(
                transport, prompt, space, max_attempts=max_attempts,
                backoff_base=backoff_base, backoff_cap=backoff_cap, sleeper=sleeper,
            )
        except PlanningFailure as failure:
            return None, failure.exchanges

    with ThreadPoolExecutor(max_workers=in_flight) as pool:
        results = list(pool.map(worker, samples))

    plans: list[Plan] = []
    failures: list[str] = []
    rows: list[dict] = []
    for sample, (plan, exchanges) in zip(samples, results):
        if plan is None:
            failures.append(sample.sample_id)
            plans.append([""] * horizon)
        else:
            plans.append(plan)
        for attempt, ex in enumerate(exchanges):
            rows.append({
                "sample_id": sample.sample_id,
                "attempt": attempt,
                "request": ex.request,
                "response": ex.response,
                "latency": ex.latency,
                "transport": ex.transport_id,
                "parsed": plan is not None and attempt == len(exchanges) - 1,
            })
    if fixture_path is not None:
        write_jsonl(fixture_path, rows)

    metrics = compute_metrics(plans, [s.gt_action_ids for s in samples])
    report = EvalReport(
        planner=f"llm:{getattr(transport, 'transport_id', 'unknown')}",
        split=split, space=space_name, horizon=horizon, seed=seed,
        n=len(samples), metrics=metrics,
    )
    return LlmRunResult(report=report, failures=failures, exchanges=rows)
