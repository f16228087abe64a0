import regex

NO_ANSWER = "<no-answer>"

TASK_MULTIPLE_CHOICE = "multiple-choice"
TASK_OPEN_ENDED = "open-ended"
TASK_ACTION = "action"
TASK_KINDS = (TASK_MULTIPLE_CHOICE, TASK_OPEN_ENDED, TASK_ACTION)

# "(X" or "(X)" where X is A-D, not the start of a longer word like "(Because"
CHOICE_REGEX = regex.compile(r"\(([A-D])(?![\p{L}\p{N}])")

FENCED_BLOCK_REGEX = regex.compile(r"```([\w+.-]*)[ \t]*\n(.*?)```", regex.DOTALL)

# e.g. search[red shoes] or click[Buy Now], optionally after "Action:"
ACTION_REGEX = regex.compile(r"^\s*(?:Action:\s*)?([a-z_]+\[[^\[\]\n]*\])\s*$", regex.MULTILINE | regex.IGNORECASE)

RATINGS_REGEX = regex.compile(r"\[\[([^\[\]]*)\]\]")
NUMBER_REGEX = regex.compile(r"-?\d+(?:\.\d+)?")

MIN_SCORE = 1
MAX_SCORE = 5


class RatingParseError(Exception):
    pass


def fenced_blocks(text, language=None):
    """
    Gets the contents of every fenced block in the text, optionally only those tagged with the given language
    """
    blocks = []
    for match in FENCED_BLOCK_REGEX.finditer(text or ""):
        if language is None or match.group(1).lower() == language:
            blocks.append(match.group(2).strip("\n"))
    return blocks


def extract_answer(raw_text, task_kind):
    """
    Extracts the answer from a response:
        multiple-choice: the letter of the last "(X" or "(X)"
        open-ended: the content of the last fenced block, else the whole text
        action: the last line that is an action like click[Buy Now]
    """
    raw_text = raw_text or ""

    if task_kind == TASK_MULTIPLE_CHOICE:
        letters = CHOICE_REGEX.findall(raw_text)
        return letters[-1] if letters else NO_ANSWER

    elif task_kind == TASK_OPEN_ENDED:
        blocks = fenced_blocks(raw_text)
        return blocks[-1].strip() if blocks else raw_text.strip()

    elif task_kind == TASK_ACTION:
        actions = ACTION_REGEX.findall(raw_text)
        return actions[-1] if actions else NO_ANSWER

    raise ValueError("Unknown task kind: %s" % task_kind)


def _clamp(score):
    score = float(min(max(float(score), MIN_SCORE), MAX_SCORE))
    return int(score) if score.is_integer() else score


def extract_ratings(raw_text, expected_count, slot_map):
    """
    Parses the last [[...]] group of scores in a response. Scores are in display order, so each is mapped back to the
    predecessor shown in that slot.

    :param raw_text: the response text
    :param expected_count: how many scores were requested
    :param slot_map: the rated predecessors' NodeIds in display order
    :return: list of (NodeId, score) in node order, each score clamped to [1, 5]
    """
    if expected_count < 1:
        raise ValueError("Ratings need at least one expected score")

    groups = RATINGS_REGEX.findall(raw_text or "")
    if not groups:
        raise RatingParseError("No [[...]] scores found in response")

    scores = NUMBER_REGEX.findall(groups[-1])
    if len(scores) != expected_count:
        raise RatingParseError("Expected %d scores but found %d" % (expected_count, len(scores)))

    return sorted((slot_map[s], _clamp(score)) for s, score in enumerate(scores))
