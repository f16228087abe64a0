from agentnet.network.models import NodeId

REPORT_SCHEMA_VERSION = 1

KIND_IMPORTANCE = "importance"
KIND_SHAPLEY = "shapley"


class AttributionError(Exception):
    pass


class SelectionError(AttributionError):
    pass


class ShapleyError(AttributionError):
    pass


class MetricError(AttributionError):
    pass


class ImportanceReport(object):
    """
    Agent Importance Scores of one run (or averaged over several): per node, per agent and summed per layer
    """

    FLAG_UNIFORM_FALLBACK = "uniform-fallback"

    def __init__(self, per_node=None, per_agent=None, layer_sums=None, selected_team=(), flags=(), query_id=None):
        self.per_node = dict(per_node or {})
        self.per_agent = dict(per_agent or {})
        self.layer_sums = dict(layer_sums or {})
        self.selected_team = list(selected_team)
        self.flags = list(flags)
        self.query_id = query_id

    @property
    def total_mass(self):
        return sum(self.per_agent.values())

    def to_json(self):
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "kind": KIND_IMPORTANCE,
            "query_id": self.query_id,
            "per_node": [[n.to_json(), v] for n, v in sorted(self.per_node.items())],
            "per_agent": {str(i): v for i, v in sorted(self.per_agent.items())},
            "layer_sums": {str(t): v for t, v in sorted(self.layer_sums.items())},
            "selected_team": self.selected_team,
            "flags": self.flags,
        }

    @classmethod
    def from_json(cls, json_obj):
        return cls(
            per_node={NodeId.from_json(n): v for n, v in json_obj.get("per_node", [])},
            per_agent={int(i): v for i, v in json_obj["per_agent"].items()},
            layer_sums={int(t): v for t, v in json_obj.get("layer_sums", {}).items()},
            selected_team=json_obj.get("selected_team", ()),
            flags=json_obj.get("flags", ()),
            query_id=json_obj.get("query_id"),
        )

    def __eq__(self, other):
        return isinstance(other, ImportanceReport) and self.to_json() == other.to_json()

    def __repr__(self):
        return "ImportanceReport(%r)" % self.per_agent


class ShapleyReport(object):
    def __init__(
        self, per_agent, evaluations, performance_fn_tag, pipeline_runs=0, weighting="combination", performances=None
    ):
        self.per_agent = dict(per_agent)
        self.evaluations = evaluations
        self.performance_fn_tag = performance_fn_tag
        self.pipeline_runs = pipeline_runs
        self.weighting = weighting
        self.performances = dict(performances or {})

    def to_json(self):
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "kind": KIND_SHAPLEY,
            "per_agent": {str(i): v for i, v in sorted(self.per_agent.items())},
            "evaluations": self.evaluations,
            "performance_fn_tag": self.performance_fn_tag,
            "pipeline_runs": self.pipeline_runs,
            "weighting": self.weighting,
            "performances": [[sorted(s), v] for s, v in sorted(self.performances.items(), key=lambda i: sorted(i[0]))],
        }

    def __repr__(self):
        return "ShapleyReport(%r)" % self.per_agent
