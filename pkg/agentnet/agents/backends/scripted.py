"""
Scripted agents: deterministic test doubles for LLM agents, configured entirely by their backend params
"""
import random
import time
from collections import Counter

from agentnet.utils import derive_seed

from ..extraction import NO_ANSWER, TASK_ACTION, TASK_MULTIPLE_CHOICE, extract_answer
from . import AgentFailure, BackendResponse, BaseBackend

ANY = "*"

RATE_MATCH = "match"
RATE_UNIFORM = "uniform"
RATE_FIXED = "fixed"
RATE_RANDOM = "random"
RATING_POLICIES = (RATE_MATCH, RATE_UNIFORM, RATE_FIXED, RATE_RANDOM)

RANK_MAJORITY = "majority"
RANK_REPLY = "reply"

UNSURE_TEXT = "I am not sure."


def observed_majority(answers):
    """
    Gets the answer held by more than half of the given answers, if there is one
    """
    counts = Counter(a for a in answers if a != NO_ANSWER)
    for answer, count in counts.most_common(1):
        if count * 2 > len(answers):
            return answer
    return None


class ScriptedBehavior(object):
    """
    How a scripted agent answers and rates. Answers are looked up by (query tag, step, observed peer majority) with
    "*" matching anything, most specific key first.
    """

    def __init__(
        self,
        answer_table=None,
        default_answer=None,
        rating_policy=RATE_MATCH,
        noise=0.0,
        fixed_scores=None,
        fail_steps=(),
        delay=0.0,
        seed=0,
        fence="",
        ranker_policy=RANK_MAJORITY,
        reply="",
    ):
        if rating_policy not in RATING_POLICIES:
            raise ValueError("Unknown rating policy: %s" % rating_policy)

        self.answer_table = answer_table or {}
        self.default_answer = default_answer
        self.rating_policy = rating_policy
        self.noise = noise
        self.fixed_scores = {str(k): v for k, v in (fixed_scores or {}).items()}
        self.fail_steps = set(fail_steps)
        self.delay = delay
        self.seed = seed
        self.fence = fence
        self.ranker_policy = ranker_policy
        self.reply = reply

    @classmethod
    def from_params(cls, params):
        return cls(
            answer_table=params.get("answer_table"),
            default_answer=params.get("default_answer"),
            rating_policy=params.get("rating_policy", RATE_MATCH),
            noise=params.get("noise", 0.0),
            fixed_scores=params.get("fixed_scores"),
            fail_steps=params.get("fail_steps", ()),
            delay=params.get("delay", 0.0),
            seed=params.get("seed", 0),
            fence=params.get("fence", ""),
            ranker_policy=params.get("ranker_policy", RANK_MAJORITY),
            reply=params.get("reply", ""),
        )

    def lookup(self, tag, step, majority):
        majority_keys = (majority, ANY) if majority is not None else (ANY,)

        for tag_key in (tag, ANY):
            by_step = self.answer_table.get(tag_key)
            if not by_step:
                continue
            for step_key in (str(step), ANY):
                by_majority = by_step.get(step_key)
                if not by_majority:
                    continue
                for majority_key in majority_keys:
                    if majority_key in by_majority:
                        return by_majority[majority_key]

        return self.default_answer

    def score(self, own_answer, peer_answer, target, context):
        rng = random.Random(
            derive_seed(
                self.seed, context.query_id, context.node.step, context.node.agent_id, target.step, target.agent_id
            )
        )

        if self.rating_policy == RATE_UNIFORM:
            return 3
        elif self.rating_policy == RATE_FIXED:
            return self.fixed_scores.get(str(target.agent_id), 3)
        elif self.rating_policy == RATE_RANDOM:
            return rng.randint(1, 5)

        if self.noise and rng.random() < self.noise:
            return rng.randint(1, 5)
        return 5 if peer_answer == own_answer else 1

    def rank(self, bundle, context):
        if self.ranker_policy == RANK_REPLY:
            return self.reply

        answers = [extract_answer(text, context.task_kind) for _, text in bundle.peer_messages]
        counts = Counter(answers)
        slots = sorted(
            range(len(answers)),
            key=lambda s: (-(counts[answers[s]] if answers[s] != NO_ANSWER else 1), bundle.slot_map[s].agent_id),
        )
        return " > ".join("[%d]" % (s + 1) for s in slots)


def format_answer(answer, task_kind, fence=""):
    if answer is None:
        return UNSURE_TEXT
    if task_kind == TASK_MULTIPLE_CHOICE:
        return "Having considered the options, the answer is (%s)." % answer
    if task_kind == TASK_ACTION:
        return "Thought: the next step is clear.\nAction: %s" % answer
    return "Here is my answer:\n```%s\n%s\n```" % (fence, answer)


class ScriptedBackend(BaseBackend):
    def execute(self, spec, bundle, decoding, context):
        behavior = ScriptedBehavior.from_params(spec.backend_params)

        if behavior.delay:
            time.sleep(behavior.delay)

        if context.is_ranking:
            context.ledger.record(spec.agent_id, context.query_id)
            return BackendResponse(behavior.rank(bundle, context))

        if context.node.step in behavior.fail_steps:
            context.ledger.record(spec.agent_id, context.query_id, success=False)
            raise AgentFailure(spec.agent_id, "scripted failure at step %d" % context.node.step)

        peer_answers = [extract_answer(text, context.task_kind) for _, text in bundle.peer_messages]
        answer = behavior.lookup(context.query_id, context.node.step, observed_majority(peer_answers))
        text = format_answer(answer, context.task_kind, behavior.fence)

        if bundle.rating_targets:
            own_answer = extract_answer(text, context.task_kind)
            by_node = dict(zip(bundle.slot_map, peer_answers))
            scores = [behavior.score(own_answer, by_node[t], t, context) for t in bundle.rating_targets]
            text += "\n[[%s]]" % ", ".join(str(s) for s in scores)

        context.ledger.record(spec.agent_id, context.query_id)
        return BackendResponse(text)
