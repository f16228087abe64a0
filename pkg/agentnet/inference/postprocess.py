import logging
import random
import subprocess

from agentnet.agents.backends.tools import run_unit_tests
from agentnet.agents.extraction import NO_ANSWER
from agentnet.consensus.bleu import consistency_classes, largest_class

logger = logging.getLogger(__name__)


def postprocess_plurality(final_records, seed=None, policy=None):
    """
    Gets the answer of the largest consistency class, preferring the class holding the lowest agent id on ties
    """
    if not final_records:
        return NO_ANSWER

    by_agent = {r.node.agent_id: r.answer for r in final_records}
    classes = consistency_classes(by_agent.items(), policy)
    answered = [c for c in classes if c.answer != NO_ANSWER]

    winner = largest_class(answered)
    return winner.answer if winner else NO_ANSWER


def postprocess_top_tested_code(candidates, unit_tests, seed, final_records=None, policy=None, top=5, timeout=None):
    """
    Picks the output among the code completions that pass the most unit tests: a seeded choice among the first `top`
    of them in node order. Falls back to the plurality of the final layer when there are no tests to run or they can't
    be executed.

    :param candidates: every answering record of the run that holds a completion
    :param unit_tests: the unit tests contributed during the run
    :param seed: seed of the choice
    :param final_records: the records of the final layer, for the fallback
    """
    completions = [r for r in sorted(candidates, key=lambda r: r.node) if r.answer and r.answer != NO_ANSWER]

    if not unit_tests or not completions:
        if not unit_tests:
            logger.warning("No unit tests were contributed, choosing the output by plurality")
        return postprocess_plurality(final_records or candidates, seed, policy)

    passed = {}
    scored = []
    try:
        for record in completions:
            if record.answer not in passed:
                passed[record.answer] = run_unit_tests(record.answer, unit_tests, timeout)
            scored.append((passed[record.answer], record))
    except (OSError, subprocess.SubprocessError) as e:
        logger.warning("Unit tests can't be executed (%s), choosing the output by plurality" % e)
        return postprocess_plurality(final_records or candidates, seed, policy)

    best = max(score for score, _ in scored)
    top_records = [r for score, r in scored if score == best][:top]

    return random.Random(seed).choice(top_records).answer


def filter_actions(records, action_filter):
    """
    Drops the records whose answers the action filter rejects
    """
    if not action_filter:
        return list(records)
    return [r for r in records if r.answer != NO_ANSWER and action_filter(r.answer)]
