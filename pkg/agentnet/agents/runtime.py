import logging

from agentnet.attribution.weights import normalize_ratings
from agentnet.gateway import LEDGER
from agentnet.network.models import MessageRecord

from .backends import get_backend
from .extraction import NO_ANSWER, RatingParseError, extract_answer, extract_ratings, fenced_blocks

logger = logging.getLogger(__name__)

TOOL_UNIT_TESTER = "unit-tester"

NEUTRAL_SCORE = 3


class ExecutionContext(object):
    """
    Where an agent is executing: the query, the node (None for the ranker), and the gateway and ledger of the run.
    Calls are recorded in the process-wide ledger when no ledger is given.
    """

    def __init__(self, query_id, task_kind, node=None, gateway=None, ledger=None, is_ranking=False):
        self.query_id = query_id
        self.task_kind = task_kind
        self.node = node
        self.gateway = gateway
        self.ledger = ledger if ledger is not None else LEDGER
        self.is_ranking = is_ranking


def execute_agent(spec, bundle, decoding, context):
    """
    Executes an agent at a node, returning its MessageRecord. Raises AgentFailure if the backend fails.
    """
    response = get_backend(spec.backend).execute(spec, bundle, decoding, context)
    node = context.node

    if spec.is_tool:
        return MessageRecord(
            node, response.text, NO_ANSWER, call_cost=response.call_cost, degenerate=response.degenerate
        )

    record = MessageRecord(
        node,
        response.text,
        extract_answer(response.text, context.task_kind),
        call_cost=response.call_cost,
        degenerate=response.degenerate,
    )

    if TOOL_UNIT_TESTER in spec.tool_bindings:
        record.unit_tests = tuple(fenced_blocks(response.text, "python"))

    if bundle.rating_targets:
        try:
            record.ratings = extract_ratings(response.text, len(bundle.rating_targets), bundle.rating_targets)
        except RatingParseError as e:
            logger.info("Agent %d at %s gave unusable ratings (%s), using neutral scores" % (spec.agent_id, node, e))
            record.ratings = sorted((target, NEUTRAL_SCORE) for target in bundle.rating_targets)
            record.rating_parse_failed = True

        weights = normalize_ratings(record.ratings)

        # an agent not asked to score its own previous response gives it no weight
        unrated = set(bundle.slot_map) - set(bundle.rating_targets)
        record.normalized_weights = sorted(weights + [(n, 0.0) for n in unrated])

    return record
