"""
Tool agents. A tool only processes part of its input, e.g. the fenced python blocks in its peers' responses, and never
rates anyone.
"""
import logging
import os
import subprocess
import sys
import tempfile

from django.conf import settings

from ..extraction import fenced_blocks
from . import AgentFailure, BackendResponse, BaseBackend

logger = logging.getLogger(__name__)

TOOL_SYNTAX_CHECK = "syntax-check"


def check_syntax(code):
    """
    Gets None if the code compiles, otherwise a description of the first syntax error
    """
    try:
        compile(code, "<candidate>", "exec")
    except (SyntaxError, ValueError) as e:
        line = getattr(e, "lineno", None)
        return "%s: %s%s" % (e.__class__.__name__, getattr(e, "msg", str(e)), " (line %d)" % line if line else "")
    return None


def syntax_check_tool(bundle):
    verdicts = []
    for slot, text in bundle.peer_messages:
        for code in fenced_blocks(text, "python"):
            error = check_syntax(code)
            verdicts.append("Response (%d): %s" % (slot, error or "no syntax errors"))
    return "\n".join(verdicts)


TOOLS = {TOOL_SYNTAX_CHECK: syntax_check_tool}


def run_unit_tests(code, tests, timeout=None):
    """
    Runs candidate code followed by each test snippet in a separate isolated interpreter

    :param code: the candidate completion
    :param tests: list of test snippets, e.g. assert statements
    :param timeout: seconds allowed per test, defaults to settings.UNIT_TEST_TIMEOUT
    :return: the number of tests that passed
    """
    timeout = timeout or settings.UNIT_TEST_TIMEOUT
    passed = 0

    with tempfile.TemporaryDirectory(prefix="agentnet-tests-") as directory:
        for t, test in enumerate(tests):
            path = os.path.join(directory, "test_%d.py" % t)
            with open(path, "w", encoding="utf-8") as f:
                f.write(code + "\n\n" + test + "\n")

            try:
                result = subprocess.run(
                    [sys.executable, "-I", path], cwd=directory, capture_output=True, timeout=timeout
                )
            except subprocess.TimeoutExpired:
                logger.info("Unit test %d timed out after %ss" % (t, timeout))
                continue

            if result.returncode == 0:
                passed += 1

    return passed


class ToolBackend(BaseBackend):
    """
    Backend for agents which are pure tools. A tool only counts as a call when its agent has count_calls set.
    """

    def execute(self, spec, bundle, decoding, context):
        tool_name = spec.backend_params.get("tool") or (spec.tool_bindings[0] if spec.tool_bindings else None)
        tool = TOOLS.get(tool_name)
        if not tool:
            raise AgentFailure(spec.agent_id, "unknown tool %s" % tool_name)

        output = tool(bundle)
        if not output:
            return BackendResponse("", call_cost=0, degenerate=True)

        call_cost = 0
        if spec.backend_params.get("count_calls", False):
            context.ledger.record(spec.agent_id, context.query_id)
            call_cost = 1

        return BackendResponse(output, call_cost=call_cost)
