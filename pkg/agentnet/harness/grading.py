import regex

from agentnet.agents.backends.tools import run_unit_tests
from agentnet.agents.extraction import NO_ANSWER, TASK_ACTION, TASK_MULTIPLE_CHOICE
from agentnet.utils import normalize

BOXED_REGEX = regex.compile(r"\\boxed\{((?:[^{}]|\{(?1)\})*)\}")


def normalize_final_answer(text):
    """
    Normalizes an arithmetic final answer: unwraps \\boxed{...}, drops $ signs, spaces and a trailing period
    """
    text = text or ""
    boxed = BOXED_REGEX.findall(text)
    if boxed:
        text = boxed[-1]

    text = normalize(text).replace("$", "").replace(" ", "")
    return text.rstrip(".")


def grade(query, output):
    """
    Grades an output against the query's gold label or unit tests, returning None if it has neither
    """
    if query.tests:
        if not output or output == NO_ANSWER:
            return False
        return run_unit_tests(output, query.tests) == len(query.tests)

    if query.gold is None:
        return None

    if output == NO_ANSWER:
        return False

    if query.task_kind == TASK_MULTIPLE_CHOICE:
        return output.strip().upper() == str(query.gold).strip().upper()
    elif query.task_kind == TASK_ACTION:
        return output.strip() == str(query.gold).strip()

    return normalize_final_answer(output) == normalize_final_answer(str(query.gold))


def accuracy_grader(query, output):
    """
    Grader scoring 1 for a correct output, for Shapley performance
    """
    return 1.0 if grade(query, output) else 0.0
