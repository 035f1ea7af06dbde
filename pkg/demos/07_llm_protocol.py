"""
Chat-based planning: prompts, parsing, and failure scoring
==========================================================

Builds the planning prompt for a chat model, replays a canned exchange
through the mock transport, shows the typed parse errors, and runs a small
evaluation where one sample's reply is garbage and gets scored all-wrong
instead of crashing the run.
"""

from __future__ import annotations

import numpy as np

from procplan.llm import (
    LlmSample,
    MockTransport,
    UnmatchedLabelError,
    WrongCountError,
    build_prompt,
    parse_plan_response,
    plan_via_chat,
    run_llm_eval,
)
from procplan.planners import ActionSpace

pool = [
    "open the car key cover",
    "take out the car key battery",
    "put in the battery",
    "close the car key cover",
]
space = ActionSpace(action_ids=pool, text_vectors=np.eye(4))

# 1. The prompt states the action pool and the required step count. With
#    no boundary images the image slots simply vanish from the text.
prompt = build_prompt(space, horizon=4)
print("--- system ---")
print(prompt.system_text)
print("--- user ---")
print(prompt.user_text)

# 2. A well-formed reply parses into an exact plan.
reply = ("1. open the car key cover 2. take out the car key battery "
         "3. put in the battery 4. close the car key cover")
print("\nparsed:", parse_plan_response(reply, space, 4))

# 3. Malformed replies raise typed errors naming the problem.
for bad in ("1. put in the battery",
            "1. open the car key cover 2. fly to the moon "
            "3. put in the battery 4. close the car key cover"):
    try:
        parse_plan_response(bad, space, 4)
    except (WrongCountError, UnmatchedLabelError) as err:
        print(f"{type(err).__name__}: {err}")

# 4. plan_via_chat retries transport and parse failures with capped
#    exponential backoff. Here the first reply is junk, the second good.
transport = MockTransport(replies=["no steps here at all", reply])
plan, exchanges = plan_via_chat(transport, prompt, space, max_attempts=3,
                                sleeper=lambda s: None)
print(f"\nrecovered after {len(exchanges)} attempts: {plan[:2]} ...")

# 5. A full evaluation run never aborts on one bad sample: exhausted
#    retries score the sample as all-wrong and continue.
samples = [LlmSample(sample_id=f"s{i}", gt_action_ids=list(pool))
           for i in range(4)]
transport = MockTransport(replies=[reply, "???", reply, reply])
result = run_llm_eval(samples, space, transport, in_flight=1, max_attempts=1)
m = result.report.metrics
print(f"\nrun of 4 with 1 junk reply: SR {m.sr:.2%}  Acc {m.acc:.2%}")
print("failed samples:", result.failures)
