"""
Agent Importance Scores. Contributions are initialized on the final layer and propagated backwards through the
normalized peer ratings: I(t-1, i) = sum over successors j of I(t, j) * w(t-1, i, j).
"""
import ast
from collections import defaultdict

from agentnet.consensus.bleu import consistency_classes
from agentnet.inference.engine import counted_records
from agentnet.inference.models import INIT_CONSISTENT_ANSWERS, INIT_SYNTAX_OK
from agentnet.network.models import NodeId, predecessors

from .models import AttributionError, ImportanceReport, SelectionError


def parses(code):
    try:
        ast.parse(code)
    except (SyntaxError, ValueError):
        return False
    return True


def init_final_contributions(
    graph, policy=INIT_CONSISTENT_ANSWERS, consensus_policy=None, pool=None, answer_roles=None
):
    """
    Spreads a mass of 1 uniformly over the final layer nodes which gave consistent answers (every class tied at the
    largest size) or, for code, whose answers have no syntax errors. Falls back to every answering node when none
    qualify.

    :return: tuple of the NodeId -> contribution map and whether the fallback was used
    """
    step = graph.terminal_step

    if pool:
        records = counted_records(graph, step, {a.agent_id: a for a in pool}, answer_roles)
    else:
        records = graph.layer_records(step, answering_only=True)

    if not records:
        raise AttributionError("Final layer %d has no answering nodes" % step)

    if policy == INIT_CONSISTENT_ANSWERS:
        classes = consistency_classes([(r.node.agent_id, r.answer) for r in records], consensus_policy)
        size = max(c.size for c in classes)
        if size >= 2 or len(records) == 1:
            qualifying = [NodeId(step, i) for c in classes if c.size == size for i in c.members]
        else:
            qualifying = []
    elif policy == INIT_SYNTAX_OK:
        qualifying = [r.node for r in records if parses(r.answer)]
    else:
        raise AttributionError("Unknown contribution initialization: %s" % policy)

    fallback = not qualifying
    if fallback:
        qualifying = [r.node for r in records]

    mass = 1.0 / len(qualifying)
    return {node: mass for node in qualifying}, fallback


def incoming_weights(graph, node, raters=None):
    """
    Gets the (predecessor, weight) row a node spreads its importance over. Copies pass everything to the node they
    copy, rater records use their normalized ratings, anything else spreads uniformly over the predecessors that
    produced a message.
    """
    record = graph.records.get(node)
    if record is None:
        raise AttributionError("Node %s carries importance but has no record" % str(node))

    if record.is_copy:
        return [(record.copied_from, 1.0)]

    if record.normalized_weights is not None:
        return record.normalized_weights

    messaged = []
    for predecessor in predecessors(graph, node):
        predecessor_record = graph.records.get(predecessor)
        if predecessor_record and predecessor_record.is_answering:
            messaged.append(predecessor)

    if raters and node.agent_id in raters and record.is_answering and messaged:
        raise AttributionError("Rater node %s has no weights for its %d predecessors" % (str(node), len(messaged)))

    return [(p, 1.0 / len(messaged)) for p in messaged]


def backpropagate_importance(graph, terminal, raters=None):
    """
    Propagates final layer contributions back through every earlier layer, returning the ImportanceReport. Deactivated
    nodes end up with 0.

    :param graph: the completed network
    :param terminal: NodeId -> contribution of the final layer nodes
    :param raters: ids of the agents expected to rate, whose nodes must carry weights
    """
    last = graph.terminal_step
    per_node = {}
    for step in range(1, last + 1):
        for node, _ in graph.layer(step):
            per_node[node] = 0.0

    for node, value in terminal.items():
        if node.step != last:
            raise AttributionError("Terminal contribution given for %s outside final layer %d" % (str(node), last))
        per_node[node] = float(value)

    for step in range(last, 1, -1):
        for agent_id in graph.active_agents(step):
            node = NodeId(step, agent_id)
            value = per_node[node]
            if value == 0.0:
                continue

            for predecessor, weight in incoming_weights(graph, node, raters):
                per_node[predecessor] += value * weight

    per_agent = defaultdict(float)
    layer_sums = defaultdict(float)
    for node, value in per_node.items():
        per_agent[node.agent_id] += value
        layer_sums[node.step] += value

    return ImportanceReport(per_node, dict(per_agent), dict(layer_sums))


def compute_importance(graph, init_policy=INIT_CONSISTENT_ANSWERS, consensus_policy=None, pool=None, answer_roles=None):
    """
    Computes the Agent Importance Scores of a completed run
    """
    terminal, fallback = init_final_contributions(graph, init_policy, consensus_policy, pool, answer_roles)
    raters = {a.agent_id for a in pool if a.rater} if pool else None

    report = backpropagate_importance(graph, terminal, raters)
    if fallback:
        report.flags.append(ImportanceReport.FLAG_UNIFORM_FALLBACK)
    return report


def select_team(report, k):
    """
    Gets the k most important agents, ties going to the lower agent id
    """
    if k < 1:
        raise SelectionError("Teams need at least one agent")
    participating = [i for i, value in report.per_agent.items() if value > 0]
    if k > len(participating):
        raise SelectionError("Can't select %d agents from the %d that took part" % (k, len(participating)))

    ranked = sorted(report.per_agent.items(), key=lambda i: (-i[1], i[0]))
    return [agent_id for agent_id, _ in ranked[:k]]


def average_reports(reports):
    """
    Averages per-agent scores over the reports of several queries. Agents missing from a report count as 0.
    """
    if not reports:
        raise AttributionError("No importance reports to average")

    agent_ids = sorted({i for r in reports for i in r.per_agent})
    per_agent = {i: sum(r.per_agent.get(i, 0.0) for r in reports) / len(reports) for i in agent_ids}
    flags = sorted({f for r in reports for f in r.flags})

    return ImportanceReport(per_agent=per_agent, flags=flags)
