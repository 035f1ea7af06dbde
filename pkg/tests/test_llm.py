"""Prompt templates, numbered-list parsing, retry transport, and batch runs."""

from __future__ import annotations

import numpy as np
import pytest

from procplan.llm import (
    ChatExchange,
    DuplicateNumberingError,
    HttpChatTransport,
    LlmSample,
    MockTransport,
    PlanningFailure,
    TransportError,
    UnmatchedLabelError,
    WrongCountError,
    backoff_delays,
    build_prompt,
    chat_request,
    normalize_label,
    parse_plan_response,
    plan_via_chat,
    render_plan,
    run_llm_eval,
)
from procplan.planners import ActionSpace

CAR_KEY_POOL = [
    "open the car key cover",
    "take out the car key battery",
    "put in the battery",
    "close the car key cover",
]

CAR_KEY_REPLY = (
    "1. open the car key cover 2. take out the car key battery "
    "3. put in the battery 4. close the car key cover"
)


def pool_space(labels=None) -> ActionSpace:
    labels = labels if labels is not None else CAR_KEY_POOL
    return ActionSpace(action_ids=list(labels), text_vectors=np.eye(len(labels)))


def test_system_text_includes_pool_and_examples():
    prompt = build_prompt(pool_space(), horizon=4)
    assert "[action_pool]" not in prompt.system_text
    assert ("You must choose from the following actions [open the car key cover, "
            "take out the car key battery, put in the battery, "
            "close the car key cover].") in prompt.system_text
    assert "Example: 1. cut in half 2. slice the pulp" in prompt.system_text
    assert ("Example: 1. dip detergent with rag or apply detergent "
            "2. clean the floor 3. wash the floor") in prompt.system_text


def test_user_text_states_step_count():
    prompt = build_prompt(pool_space(), horizon=4)
    assert "The number of actions is 4." in prompt.user_text
    assert "[T]" not in prompt.user_text


def test_prompt_is_pure():
    a = build_prompt(pool_space(), horizon=3, start_images=["s"], end_images=["e"])
    b = build_prompt(pool_space(), horizon=3, start_images=["s"], end_images=["e"])
    assert a == b


def test_no_images_omits_slots_only():
    with_images = build_prompt(pool_space(), 4, ["s"], ["e"])
    without = build_prompt(pool_space(), 4)
    assert "base64" in with_images.user_text
    assert "base64" not in without.user_text
    assert "The start images: ." in without.user_text
    assert without.user_text.replace("The start images: .", "x") != without.user_text
    assert with_images.user_text.replace("[images encoded with base64]", "") \
        == without.user_text


def test_three_images_per_side_in_order():
    prompt = build_prompt(pool_space(), 4, ["s1", "s2", "s3"], ["e1", "e2", "e3"])
    assert prompt.image_payloads == ("s1", "s2", "s3", "e1", "e2", "e3")
    assert prompt.images_per_side == 3


def test_image_count_validation():
    with pytest.raises(ValueError, match="one of"):
        build_prompt(pool_space(), 4, ["a", "b"], ["c", "d"])
    with pytest.raises(ValueError, match="start images"):
        build_prompt(pool_space(), 4, ["a"], [])
    with pytest.raises(ValueError, match="horizon"):
        build_prompt(pool_space(), 1)
    with pytest.raises(ValueError, match="empty"):
        build_prompt(ActionSpace([], np.zeros((0, 2))), 3)


def test_parse_reference_reply():
    plan = parse_plan_response(CAR_KEY_REPLY, pool_space(), 4)
    assert plan == CAR_KEY_POOL


def test_parse_normalizes_case_and_whitespace():
    text = "1. OPEN   the car key cover\n2. take out the car key battery  "
    plan = parse_plan_response(text, pool_space(), 2)
    assert plan == CAR_KEY_POOL[:2]
    assert normalize_label("  Wipe   THE Screen ") == "wipe the screen"


def test_parse_orders_by_item_number():
    text = "2. put in the battery 1. open the car key cover"
    plan = parse_plan_response(text, pool_space(), 2)
    assert plan == ["open the car key cover", "put in the battery"]


def test_parse_wrong_count():
    with pytest.raises(WrongCountError, match="expected 4 actions, found 3"):
        parse_plan_response(
            "1. open the car key cover 2. put in the battery 3. close the car key cover",
            pool_space(), 4,
        )


def test_parse_unmatched_label_verbatim():
    with pytest.raises(UnmatchedLabelError, match="fly to the moon"):
        parse_plan_response("1. fly to the moon 2. put in the battery", pool_space(), 2)


def test_parse_duplicate_numbering():
    with pytest.raises(DuplicateNumberingError, match="duplicate item number 1"):
        parse_plan_response(
            "1. open the car key cover 1. put in the battery", pool_space(), 2
        )


def test_parse_render_idempotent():
    plan = parse_plan_response(CAR_KEY_REPLY, pool_space(), 4)
    assert parse_plan_response(render_plan(plan), pool_space(), 4) == plan
    assert render_plan(plan) == CAR_KEY_REPLY


def test_plan_via_chat_replays_reference_exchange():
    transport = MockTransport(replies=[CAR_KEY_REPLY])
    prompt = build_prompt(pool_space(), 4)
    plan, exchanges = plan_via_chat(transport, prompt, pool_space(),
                                    sleeper=lambda s: None)
    assert plan == CAR_KEY_POOL
    assert len(exchanges) == 1
    assert exchanges[0].response == CAR_KEY_REPLY


def test_plan_via_chat_retries_transport_failures_with_backoff():
    transport = MockTransport(replies=[
        TransportError("down"), TransportError("still down"), CAR_KEY_REPLY,
    ])
    delays: list[float] = []
    prompt = build_prompt(pool_space(), 4)
    plan, exchanges = plan_via_chat(transport, prompt, pool_space(),
                                    max_attempts=3, backoff_base=0.5,
                                    sleeper=delays.append)
    assert plan == CAR_KEY_POOL
    assert delays == [0.5, 1.0]
    assert len(exchanges) == 1


def test_plan_via_chat_retries_parse_failures():
    transport = MockTransport(replies=["not a list at all", CAR_KEY_REPLY])
    prompt = build_prompt(pool_space(), 4)
    plan, exchanges = plan_via_chat(transport, prompt, pool_space(),
                                    sleeper=lambda s: None)
    assert plan == CAR_KEY_POOL
    assert [e.response for e in exchanges] == ["not a list at all", CAR_KEY_REPLY]


def test_plan_via_chat_gives_up_after_budget():
    transport = MockTransport(replies=["junk", "junk", "junk"])
    prompt = build_prompt(pool_space(), 4)
    with pytest.raises(PlanningFailure, match="after 3 attempts") as info:
        plan_via_chat(transport, prompt, pool_space(), sleeper=lambda s: None)
    assert len(info.value.exchanges) == 3


def test_backoff_delays_capped():
    assert backoff_delays(6, 1.0, 4.0) == [1.0, 2.0, 4.0, 4.0, 4.0]
    assert backoff_delays(1, 1.0, 4.0) == []


def test_exchange_requires_response_text():
    with pytest.raises(ValueError, match="non-empty"):
        ChatExchange(request={}, response="", latency=0.0, transport_id="mock")


def keyed_transport(samples, space, replies):
    by_request = {}
    from procplan.ioutil import stable_json

    for sample, reply in zip(samples, replies):
        prompt = build_prompt(space, len(sample.gt_action_ids),
                              sample.start_images, sample.end_images)
        request = chat_request(prompt, "mock")
        by_request.setdefault(stable_json(request), []).extend(
            reply if isinstance(reply, list) else [reply]
        )
    return MockTransport(by_request=by_request)


def test_run_scores_failures_all_wrong(tmp_path):
    space = pool_space()
    samples = [
        LlmSample(sample_id=f"s{i}", gt_action_ids=list(CAR_KEY_POOL),
                  start_images=[f"img-start-{i}"], end_images=[f"img-end-{i}"])
        for i in range(10)
    ]
    replies = [CAR_KEY_REPLY] * 8 + [["junk"] * 3, ["junk"] * 3]
    transport = keyed_transport(samples, space, replies)
    result = run_llm_eval(samples, space, transport, in_flight=4,
                          sleeper=lambda s: None,
                          fixture_path=tmp_path / "fixture.jsonl")
    assert result.report.n == 10
    assert result.report.metrics.sr == pytest.approx(0.8)
    assert result.report.metrics.acc == pytest.approx(0.8)
    assert sorted(result.failures) == ["s8", "s9"]
    assert result.report.planner == "llm:mock"


def test_fixture_replay_reproduces_report(tmp_path):
    space = pool_space()
    samples = [
        LlmSample(sample_id=f"s{i}", gt_action_ids=list(CAR_KEY_POOL),
                  start_images=[f"start-{i}"], end_images=[f"end-{i}"])
        for i in range(4)
    ]
    transport = keyed_transport(samples, space, [CAR_KEY_REPLY] * 4)
    fixture = tmp_path / "run.jsonl"
    first = run_llm_eval(samples, space, transport, sleeper=lambda s: None,
                         fixture_path=fixture)
    replay = MockTransport.from_fixture(fixture)
    second = run_llm_eval(samples, space, replay, sleeper=lambda s: None)
    assert first.report.metrics == second.report.metrics
    assert second.failures == []


def test_run_validates_inputs():
    space = pool_space()
    with pytest.raises(ValueError, match="no samples"):
        run_llm_eval([], space, MockTransport())
    mixed = [
        LlmSample(sample_id="a", gt_action_ids=CAR_KEY_POOL[:2]),
        LlmSample(sample_id="b", gt_action_ids=CAR_KEY_POOL[:3]),
    ]
    with pytest.raises(ValueError, match="mix horizons"):
        run_llm_eval(mixed, space, MockTransport())


class StubResponse:
    def __init__(self, status_code=200, body=None):
        self.status_code = status_code
        self._body = body

    def json(self):
        if self._body is None:
            raise ValueError("no body")
        return self._body


class StubSession:
    def __init__(self, response):
        self._response = response
        self.posts: list[dict] = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.posts.append({"url": url, "json": json, "headers": headers})
        if isinstance(self._response, Exception):
            raise self._response
        return self._response


def test_http_transport_extracts_content():
    body = {"choices": [{"message": {"content": CAR_KEY_REPLY}}]}
    session = StubSession(StubResponse(200, body))
    transport = HttpChatTransport("https://chat.example/v1", "planner-model",
                                  api_key="secret", session=session)
    text = transport.send({"model": "planner-model", "messages": []})
    assert text == CAR_KEY_REPLY
    assert session.posts[0]["headers"]["Authorization"] == "Bearer secret"


def test_http_transport_maps_failures():
    import requests

    transport = HttpChatTransport("https://chat.example/v1", "m",
                                  session=StubSession(StubResponse(500, {})))
    with pytest.raises(TransportError, match="500"):
        transport.send({})
    transport = HttpChatTransport("https://chat.example/v1", "m",
                                  session=StubSession(StubResponse(200, {"nope": 1})))
    with pytest.raises(TransportError, match="malformed"):
        transport.send({})
    transport = HttpChatTransport(
        "https://chat.example/v1", "m",
        session=StubSession(requests.ConnectionError("refused")),
    )
    with pytest.raises(TransportError, match="request failed"):
        transport.send({})
