import random

from .extraction import TASK_ACTION, TASK_MULTIPLE_CHOICE, TASK_OPEN_ENDED

INSTRUCTION_TEMPLATES = {
    TASK_MULTIPLE_CHOICE: (
        "Here is the question:\n{query}\n\n"
        "Explain your answer, putting the answer in the form (X) at the end of your response."
    ),
    TASK_OPEN_ENDED: "{query}\n\nPut your final answer inside a fenced block at the end of your response.",
    TASK_ACTION: "{query}\n\nEnd your response with a single line of the form Action: verb[argument].",
}

PEERS_HEADER = "These are the recent responses from other agents:"

PEER_TEMPLATE = "\n\nAgent response ({slot}):\n{text}"

PEERS_FOOTER = "\n\nUse these responses carefully as additional advice and give an updated response."

RATING_TEMPLATE = (
    "Along with your answer, give a score ranging from 1 to 5 to {targets}, where 1 means not helpful at all "
    "and 5 means very helpful. Put all {num} scores in the form like [[1, 5, 2]]."
)

TOOL_TEMPLATE = "\n\nYou can use these tools: {tools}."


class PromptBundle(object):
    """
    Everything sent to one agent at one node. Peer responses are shown in a shuffled order, so slot_map keeps the
    predecessor behind each display slot and rating_targets the predecessors asked to be scored, in display order.
    """

    def __init__(
        self, system_text, instruction_text, peer_messages=(), rating_clause=None, slot_map=(), rating_targets=()
    ):
        self.system_text = system_text
        self.instruction_text = instruction_text
        self.peer_messages = list(peer_messages)
        self.rating_clause = rating_clause
        self.slot_map = list(slot_map)
        self.rating_targets = list(rating_targets)

    @property
    def user_text(self):
        parts = [self.instruction_text]

        if self.peer_messages:
            parts.append("\n\n" + PEERS_HEADER)
            for slot, text in self.peer_messages:
                parts.append(PEER_TEMPLATE.format(slot=slot, text=text))
            parts.append(PEERS_FOOTER)

        if self.rating_clause:
            parts.append(" " + self.rating_clause)

        return "".join(parts)


def shuffled(items, seed):
    items = list(items)
    random.Random(seed).shuffle(items)
    return items


def rating_clause(slots, shown):
    if len(slots) == shown:
        description = "each of the above responses"
    else:
        description = "the responses %s in that order" % ", ".join("(%d)" % s for s in slots)

    return RATING_TEMPLATE.format(targets=description, num=len(slots))


def assemble_prompt(spec, query, peers, shuffle_seed, task_kind=TASK_MULTIPLE_CHOICE, rate_self=True):
    """
    Builds the prompt of one node. Only the previous step's responses are included, shown in a seeded shuffle.

    :param spec: the AgentSpec of the node
    :param query: the task prompt
    :param peers: the MessageRecords of the node's predecessors which produced a message
    :param shuffle_seed: seed of the display order
    :param task_kind: the kind of answer the query expects
    :param rate_self: whether the agent scores its own previous response too
    :return: the PromptBundle
    """
    system_text = spec.role_prompt
    if spec.tool_bindings:
        system_text += TOOL_TEMPLATE.format(tools=", ".join(spec.tool_bindings))

    instruction_text = INSTRUCTION_TEMPLATES[task_kind].format(query=query)

    ordered = shuffled(sorted(peers, key=lambda r: r.node), shuffle_seed)
    peer_messages = [(s + 1, r.raw_text) for s, r in enumerate(ordered)]
    slot_map = [r.node for r in ordered]

    clause = None
    targets = []
    if spec.rater and ordered:
        rated = [(s + 1, r.node) for s, r in enumerate(ordered) if rate_self or r.node.agent_id != spec.agent_id]
        targets = [node for _, node in rated]
        if targets:
            clause = rating_clause([s for s, _ in rated], len(ordered))

    return PromptBundle(system_text, instruction_text, peer_messages, clause, slot_map, targets)
