"""
Ranking of a layer's responses for agent team reformation. The ranker is an ordinary agent (id 0) which never
occupies a node, so its calls are counted separately.
"""
import logging

import regex

from agentnet.network.models import PreconditionError

from .backends import AgentFailure, Decoding, get_backend
from .prompts import PromptBundle, shuffled
from .runtime import ExecutionContext

logger = logging.getLogger(__name__)

METHOD_LISTWISE = "listwise"
METHOD_SLIDING_WINDOW = "sliding-window"
METHOD_IDENTITY = "identity"
METHODS = (METHOD_LISTWISE, METHOD_SLIDING_WINDOW)

RANKING_DECODING = Decoding(temperature=0.0, max_tokens=256)

LISTWISE_TEMPLATE = (
    "Here is the query:\n{query}\n\n"
    "These are the responses of {num} agents, each marked with an identifier like [1]:{responses}\n\n"
    "Rank the responses from the most to the least helpful for answering the query. "
    "Reply with the identifiers only, in the form [2] > [1] > [3]."
)

PAIRWISE_TEMPLATE = (
    "Here is the query:\n{query}\n\n"
    "These are the responses of two agents:{responses}\n\n"
    "Which response is more helpful for answering the query? Reply with [1] or [2] only."
)

SLOT_REGEX = regex.compile(r"\d+")


class RankingError(Exception):
    pass


class RankingOutcome(object):
    def __init__(self, survivors, order, ranker_calls, method, slot_map):
        self.survivors = survivors
        self.order = order
        self.ranker_calls = ranker_calls
        self.method = method
        self.slot_map = slot_map

    def __repr__(self):
        return "RankingOutcome(%r, method=%s)" % (self.survivors, self.method)


def parse_ranking(text, num_slots):
    """
    Parses a ranking reply into 0-based slots. Repeated mentions are ignored after the first. Every slot must appear.
    """
    order = []
    for match in SLOT_REGEX.findall(text or ""):
        slot = int(match) - 1
        if 0 <= slot < num_slots and slot not in order:
            order.append(slot)

    if len(order) != num_slots:
        raise RankingError("Ranking mentions %d of %d responses: %r" % (len(order), num_slots, text))
    return order


def _responses_text(records):
    return "".join("\n\n[%d] %s" % (s + 1, r.raw_text) for s, r in enumerate(records))


class Ranker(object):
    """
    Asks the ranker agent to order candidate records, counting every call
    """

    def __init__(self, spec, query, task_kind, query_id, gateway=None, ledger=None):
        self.spec = spec
        self.query = query
        self.calls = 0
        self.context = ExecutionContext(query_id, task_kind, gateway=gateway, ledger=ledger, is_ranking=True)
        self.backend = get_backend(spec.backend)

    def ask(self, template, records):
        bundle = PromptBundle(
            self.spec.role_prompt,
            template.format(query=self.query, num=len(records), responses=_responses_text(records)),
            [(s + 1, r.raw_text) for s, r in enumerate(records)],
            slot_map=[r.node for r in records],
        )
        response = self.backend.execute(self.spec, bundle, RANKING_DECODING, self.context)
        self.calls += response.call_cost
        return response.text

    def listwise(self, records):
        return [records[s] for s in parse_ranking(self.ask(LISTWISE_TEMPLATE, records), len(records))]

    def prefers_second(self, first, second):
        return parse_ranking_pair(self.ask(PAIRWISE_TEMPLATE, [first, second]))

    def sliding_window(self, records, k):
        """
        Bubbles the best responses up from the bottom of the list with a window of two, once per survivor
        """
        ranked = list(records)
        for p in range(k):
            for i in range(len(ranked) - 2, p - 1, -1):
                if self.prefers_second(ranked[i], ranked[i + 1]):
                    ranked[i], ranked[i + 1] = ranked[i + 1], ranked[i]
        return ranked


def parse_ranking_pair(text):
    for match in SLOT_REGEX.findall(text or ""):
        if match in ("1", "2"):
            return match == "2"
    raise RankingError("Pairwise reply names neither response: %r" % text)


def rank_listwise(
    ranker, query, candidates, k, seed, task_kind, query_id=None, gateway=None, ledger=None, method=METHOD_LISTWISE
):
    """
    Ranks candidate records with the ranker agent and keeps the top k. Candidates are shown in a seeded shuffle. If the
    listwise reply can't be parsed, falls back to the sliding window ranker, and if that fails too, to agent id order.

    :return: the RankingOutcome, whose survivors are agent ids in rank order
    """
    if k > len(candidates):
        raise PreconditionError("Can't keep %d of %d candidates" % (k, len(candidates)))
    if k < 1:
        raise PreconditionError("Ranking must keep at least one candidate")

    shown = shuffled(sorted(candidates, key=lambda r: r.node), seed)
    slot_map = [r.node for r in shown]
    asker = Ranker(ranker, query, task_kind, query_id, gateway, ledger)

    attempts = [(METHOD_LISTWISE, asker.listwise)] if method == METHOD_LISTWISE else []
    attempts.append((METHOD_SLIDING_WINDOW, lambda records: asker.sliding_window(records, k)))

    for name, attempt in attempts:
        try:
            ranked = attempt(shown)
        except (RankingError, AgentFailure) as e:
            logger.warning("Ranker %s ranking failed for query %s: %s" % (name, query_id, e))
            continue

        order = [r.node.agent_id for r in ranked]
        return RankingOutcome(order[:k], order, asker.calls, name, slot_map)

    logger.warning("Falling back to agent id order for query %s" % query_id)
    order = sorted(r.node.agent_id for r in candidates)
    return RankingOutcome(order[:k], order, asker.calls, METHOD_IDENTITY, slot_map)
