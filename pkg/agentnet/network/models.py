from collections import namedtuple

from django.core.exceptions import ImproperlyConfigured


class GraphError(Exception):
    pass


class ReformationError(GraphError):
    pass


class PreconditionError(GraphError):
    pass


class NodeLookupError(GraphError, KeyError):
    pass


class AgentSpec(object):
    """
    One agent of the pool: a role prompt bound to a backend (an LLM endpoint, a tool or a scripted test double)
    """

    BACKEND_LLM = "llm"
    BACKEND_TOOL = "tool"
    BACKEND_SCRIPTED = "scripted"
    BACKEND_CHOICES = (BACKEND_LLM, BACKEND_TOOL, BACKEND_SCRIPTED)

    RANKER_ID = 0

    def __init__(
        self,
        agent_id,
        display_name,
        role_prompt="",
        backend=BACKEND_LLM,
        backend_params=None,
        tool_bindings=(),
        rater=True,
        role=None,
        expertise=(),
    ):
        self.agent_id = agent_id
        self.display_name = display_name
        self.role_prompt = role_prompt
        self.backend = backend
        self.backend_params = dict(backend_params or {})
        self.tool_bindings = tuple(tool_bindings)
        self.rater = rater and backend != self.BACKEND_TOOL
        self.role = role
        self.expertise = tuple(expertise)

    @property
    def is_tool(self):
        return self.backend == self.BACKEND_TOOL

    def renumbered(self, agent_id):
        return AgentSpec(
            agent_id,
            self.display_name,
            self.role_prompt,
            self.backend,
            self.backend_params,
            self.tool_bindings,
            self.rater,
            self.role,
            self.expertise,
        )

    @classmethod
    def from_json(cls, json_obj):
        backend = json_obj.get("backend", cls.BACKEND_LLM)
        if backend not in cls.BACKEND_CHOICES:
            raise ImproperlyConfigured("Agent %s has unknown backend kind: %s" % (json_obj.get("agent_id"), backend))

        return cls(
            json_obj["agent_id"],
            json_obj.get("display_name") or "Agent %d" % json_obj["agent_id"],
            json_obj.get("role_prompt", ""),
            backend,
            json_obj.get("backend_params"),
            json_obj.get("tool_bindings", ()),
            json_obj.get("rater", backend != cls.BACKEND_TOOL),
            json_obj.get("role"),
            json_obj.get("expertise", ()),
        )

    def to_json(self):
        return {
            "agent_id": self.agent_id,
            "display_name": self.display_name,
            "role_prompt": self.role_prompt,
            "backend": self.backend,
            "backend_params": self.backend_params,
            "tool_bindings": list(self.tool_bindings),
            "rater": self.rater,
            "role": self.role,
            "expertise": list(self.expertise),
        }

    def __eq__(self, other):
        return isinstance(other, AgentSpec) and self.to_json() == other.to_json()

    def __repr__(self):
        return "AgentSpec(%d, %r)" % (self.agent_id, self.display_name)


def validate_pool(pool):
    """
    Checks that agent ids are unique and dense in [1, N]
    """
    if not pool:
        raise ImproperlyConfigured("Agent pool must contain at least one agent")

    ids = sorted(a.agent_id for a in pool)
    if ids != list(range(1, len(pool) + 1)):
        raise ImproperlyConfigured("Agent ids must be unique and numbered 1..%d, got %s" % (len(pool), ids))

    for agent in pool:
        if agent.is_tool and agent.rater:  # pragma: no cover
            raise ImproperlyConfigured("Tool agent %d can't rate its peers" % agent.agent_id)


class NodeId(namedtuple("NodeId", ["step", "agent_id"])):
    """
    The node of agent `agent_id` at time step `step`. Orders by (step, agent_id).
    """

    __slots__ = ()

    def to_json(self):
        return [self.step, self.agent_id]

    @classmethod
    def from_json(cls, json_obj):
        return cls(int(json_obj[0]), int(json_obj[1]))

    def __str__(self):
        return "%d:%d" % (self.step, self.agent_id)


class MessageRecord(object):
    """
    The response of one node, plus the peer ratings extracted from it
    """

    def __init__(
        self,
        node,
        raw_text,
        answer,
        ratings=None,
        normalized_weights=None,
        call_cost=0,
        copied_from=None,
        idle=False,
        failed=False,
        degenerate=False,
        rating_parse_failed=False,
        unit_tests=(),
    ):
        self.node = node
        self.raw_text = raw_text
        self.answer = answer
        self.ratings = list(ratings) if ratings is not None else None
        self.normalized_weights = list(normalized_weights) if normalized_weights is not None else None
        self.call_cost = call_cost
        self.copied_from = copied_from
        self.idle = idle
        self.failed = failed
        self.degenerate = degenerate
        self.rating_parse_failed = rating_parse_failed
        self.unit_tests = tuple(unit_tests)

    @property
    def is_answering(self):
        return not (self.idle or self.failed)

    @property
    def is_copy(self):
        return self.copied_from is not None

    def copy_forward(self, node):
        """
        Creates the record of `node` as a zero-cost copy of this one
        """
        return MessageRecord(node, self.raw_text, self.answer, call_cost=0, copied_from=self.node)

    @classmethod
    def idle_record(cls, node, answer):
        return cls(node, "", answer, call_cost=0, idle=True)

    @classmethod
    def failure_record(cls, node, error, answer):
        return cls(node, str(error), answer, call_cost=0, failed=True)

    def to_json(self):
        def pairs(items):
            return [[n.to_json(), v] for n, v in items] if items is not None else None

        return {
            "node": self.node.to_json(),
            "raw_text": self.raw_text,
            "answer": self.answer,
            "ratings": pairs(self.ratings),
            "normalized_weights": pairs(self.normalized_weights),
            "call_cost": self.call_cost,
            "copied_from": self.copied_from.to_json() if self.copied_from else None,
            "idle": self.idle,
            "failed": self.failed,
            "degenerate": self.degenerate,
            "rating_parse_failed": self.rating_parse_failed,
            "unit_tests": list(self.unit_tests),
        }

    @classmethod
    def from_json(cls, json_obj):
        def pairs(items):
            return [(NodeId.from_json(n), v) for n, v in items] if items is not None else None

        copied_from = json_obj.get("copied_from")
        return cls(
            NodeId.from_json(json_obj["node"]),
            json_obj["raw_text"],
            json_obj["answer"],
            ratings=pairs(json_obj.get("ratings")),
            normalized_weights=pairs(json_obj.get("normalized_weights")),
            call_cost=json_obj.get("call_cost", 0),
            copied_from=NodeId.from_json(copied_from) if copied_from else None,
            idle=json_obj.get("idle", False),
            failed=json_obj.get("failed", False),
            degenerate=json_obj.get("degenerate", False),
            rating_parse_failed=json_obj.get("rating_parse_failed", False),
            unit_tests=json_obj.get("unit_tests", ()),
        )

    def __eq__(self, other):
        return isinstance(other, MessageRecord) and self.to_json() == other.to_json()

    def __repr__(self):
        return "MessageRecord(%s, %r)" % (self.node, self.answer)


class TffnGraph(object):
    """
    A layered network with one node per agent per time step. Edges only join adjacent layers. Nodes are never removed,
    a node is deactivated from the step its agent leaves the team.
    """

    def __init__(self, agent_ids, max_steps, query=None):
        self.agent_ids = tuple(sorted(agent_ids))
        self.max_steps = max_steps
        self.query = query
        self.deactivated_from = {}  # agent id -> first step the agent is inactive
        self.edges = {}  # step t -> frozenset of (u, v) edges in E_{t-1,t}
        self.copy_forward = {}  # step t -> agent ids whose message at t-1 is carried into t
        self.records = {}
        self.stop_step = None

    def clone(self):
        graph = TffnGraph(self.agent_ids, self.max_steps, self.query)
        graph.deactivated_from = dict(self.deactivated_from)
        graph.edges = dict(self.edges)
        graph.copy_forward = dict(self.copy_forward)
        graph.records = dict(self.records)
        graph.stop_step = self.stop_step
        return graph

    def is_active(self, node):
        first_inactive = self.deactivated_from.get(node.agent_id)
        return first_inactive is None or node.step < first_inactive

    def active_agents(self, step):
        return [i for i in self.agent_ids if self.is_active(NodeId(step, i))]

    def layer(self, step):
        """
        Gets the nodes of the given layer as (node, active) pairs in agent order
        """
        return [(NodeId(step, i), self.is_active(NodeId(step, i))) for i in self.agent_ids]

    @property
    def layers(self):
        return [self.layer(t) for t in range(1, self.max_steps + 1)]

    def has_node(self, node):
        return 1 <= node.step <= self.max_steps and node.agent_id in self.agent_ids

    def add_record(self, record):
        if not self.has_node(record.node):
            raise NodeLookupError("No such node %s" % str(record.node))
        self.records[record.node] = record

    def layer_records(self, step, answering_only=False):
        """
        Gets the records of active nodes in the given layer in agent order
        """
        records = []
        for agent_id in self.active_agents(step):
            record = self.records.get(NodeId(step, agent_id))
            if record and (record.is_answering or not answering_only):
                records.append(record)
        return records

    @property
    def terminal_step(self):
        return self.stop_step or self.max_steps

    def edge_count(self, step):
        return len(self.edges.get(step, ()))

    def to_json(self):
        return {
            "agent_ids": list(self.agent_ids),
            "max_steps": self.max_steps,
            "layers": [
                {"step": t, "nodes": [{"agent_id": n.agent_id, "active": active} for n, active in self.layer(t)]}
                for t in range(1, self.max_steps + 1)
            ],
            "deactivated_from": {str(i): t for i, t in sorted(self.deactivated_from.items())},
            "edges": {
                str(t): [[u.to_json(), v.to_json()] for u, v in sorted(edges)]
                for t, edges in sorted(self.edges.items())
            },
            "copy_forward": {str(t): sorted(ids) for t, ids in sorted(self.copy_forward.items())},
            "records": [r.to_json() for _, r in sorted(self.records.items())],
            "stop_step": self.stop_step,
        }

    @classmethod
    def from_json(cls, json_obj, query=None):
        graph = cls(json_obj["agent_ids"], json_obj["max_steps"], query)
        graph.deactivated_from = {int(i): t for i, t in json_obj["deactivated_from"].items()}
        graph.edges = {
            int(t): frozenset((NodeId.from_json(u), NodeId.from_json(v)) for u, v in edges)
            for t, edges in json_obj["edges"].items()
        }
        graph.copy_forward = {int(t): frozenset(ids) for t, ids in json_obj["copy_forward"].items()}
        for record_json in json_obj["records"]:
            graph.add_record(MessageRecord.from_json(record_json))
        graph.stop_step = json_obj["stop_step"]
        return graph


def _complete_edges(step, sources, targets):
    return frozenset((NodeId(step - 1, i), NodeId(step, j)) for i in sources for j in targets)


def build_initial_graph(pool, max_steps, query=None):
    """
    Builds a graph with a node per agent per step, each layer fully connected to the previous one
    """
    if not pool:
        raise ImproperlyConfigured("Can't build a network from an empty agent pool")
    if max_steps < 1:
        raise ImproperlyConfigured("Networks need at least one time step")

    agent_ids = sorted(a.agent_id for a in pool)
    graph = TffnGraph(agent_ids, max_steps, query)
    for t in range(2, max_steps + 1):
        graph.edges[t] = _complete_edges(t, agent_ids, agent_ids)
    return graph


def apply_reformation(graph, step, survivors, copy_forward=True):
    """
    Keeps only the survivor agents after the given step: other agents are deactivated from step + 1 and every edge
    set from step onwards becomes the complete product over survivors. With copy_forward the survivors' messages at
    step are carried unchanged into step + 1. Returns a new graph.
    """
    survivors = frozenset(survivors)
    if not survivors:
        raise ReformationError("Reformation at step %d left no surviving agents" % step)
    if not 1 <= step < graph.max_steps:
        raise PreconditionError("Can't reform after step %d of a %d step network" % (step, graph.max_steps))

    active = frozenset(graph.active_agents(step))
    if not survivors <= active:
        raise PreconditionError(
            "Survivors %s aren't all active at step %d (active: %s)" % (sorted(survivors), step, sorted(active))
        )

    reformed = graph.clone()
    for agent_id in active - survivors:
        reformed.deactivated_from[agent_id] = step + 1

    for t in range(step + 1, graph.max_steps + 1):
        sources = survivors if t == step + 1 else reformed.active_agents(t - 1)
        reformed.edges[t] = _complete_edges(t, sources, reformed.active_agents(t))

    if copy_forward:
        reformed.copy_forward[step + 1] = survivors

    return reformed


def predecessors(graph, node):
    """
    Gets the sources of the node's incoming edges in agent order
    """
    if not graph.has_node(node):
        raise NodeLookupError("No such node %s" % str(node))

    return sorted(u for u, v in graph.edges.get(node.step, ()) if v == node)


def successors(graph, node):
    if not graph.has_node(node):
        raise NodeLookupError("No such node %s" % str(node))

    return sorted(v for u, v in graph.edges.get(node.step + 1, ()) if u == node)
