import math

from confmodel import Config
from confmodel import fields
from django.core.exceptions import ImproperlyConfigured

from agentnet.agents.extraction import TASK_ACTION, TASK_KINDS, TASK_MULTIPLE_CHOICE
from agentnet.agents.ranking import METHODS as RANKING_METHODS
from agentnet.consensus.models import ConsensusPolicy
from agentnet.utils import read_json

POSTPROCESS_PLURALITY = "plurality"
POSTPROCESS_TOP_TESTED_CODE = "top-tested-code"
POSTPROCESS_CHOICES = (POSTPROCESS_PLURALITY, POSTPROCESS_TOP_TESTED_CODE)

INIT_CONSISTENT_ANSWERS = "consistent-answers"
INIT_SYNTAX_OK = "syntax-ok"
INIT_CHOICES = (INIT_CONSISTENT_ANSWERS, INIT_SYNTAX_OK)

PRESETS = {
    "reasoning": {"max_steps": 4, "keep_k": 2, "temperature": 0.2, "consensus": {"mode": "exact"}},
    "code": {
        "max_steps": 6,
        "keep_k": 2,
        "reformation_steps": [4],
        "role_schedule": {
            "1": ["writer"],
            "2": ["reviewer"],
            "3": ["writer"],
            "4": ["writer"],
            "5": ["reviewer"],
            "6": ["writer"],
        },
        "answer_roles": ["writer"],
        "temperature": 0.8,
        "postprocess": POSTPROCESS_TOP_TESTED_CODE,
        "importance_init": INIT_SYNTAX_OK,
        "consensus": {"mode": "bleu", "bleu_threshold": 0.9, "earliest_stop_step": 3},
    },
}

CONFIG_FIELDS = (
    "preset",
    "max_steps",
    "reformation_steps",
    "keep_k",
    "consensus",
    "role_schedule",
    "answer_roles",
    "shuffle_seed",
    "temperature",
    "max_tokens",
    "postprocess",
    "rate_self",
    "parallelism",
    "ranking",
    "importance_init",
    "top_code_candidates",
)


class RunConfig(Config):
    """
    Every knob of a run of the network on a query
    """

    preset = fields.ConfigText("The preset the config was built from, if any", default=None)
    max_steps = fields.ConfigInt("Number of time steps T", default=4)
    reformation_steps = fields.ConfigList(
        "Steps whose layer is made of the survivors of ranking the previous layer. Defaults to ceil(T/2)", default=None
    )
    keep_k = fields.ConfigInt("Number of agents kept by each reformation", default=2)
    consensus = fields.ConfigDict("The early stopping policy", default={})
    role_schedule = fields.ConfigDict("Step -> roles that act at that step, others copy forward", default=None)
    answer_roles = fields.ConfigList("Roles whose answers count for consensus and the output", default=None)
    shuffle_seed = fields.ConfigInt("Master seed of the presentation order", default=0)
    temperature = fields.ConfigFloat("Sampling temperature", default=0.0)
    max_tokens = fields.ConfigInt("Completion token limit. Defaults by task kind", default=None)
    postprocess = fields.ConfigText("How the output is chosen from the final layer", default=POSTPROCESS_PLURALITY)
    rate_self = fields.ConfigBool("Whether agents score their own previous response", default=True)
    parallelism = fields.ConfigInt("Agents executed concurrently within a layer", default=1)
    ranking = fields.ConfigText("Ranker used by reformations: listwise or sliding-window", default="listwise")
    importance_init = fields.ConfigText(
        "How final layer contributions are initialized", default=INIT_CONSISTENT_ANSWERS
    )
    top_code_candidates = fields.ConfigInt("Candidates drawn from when choosing tested code", default=5)

    def post_validate(self):
        if self.max_steps < 1:
            self.raise_config_error("max_steps must be at least 1")
        if self.keep_k < 1:
            self.raise_config_error("keep_k must be at least 1")
        if self.parallelism < 1:
            self.raise_config_error("parallelism must be at least 1")
        if self.top_code_candidates < 1:
            self.raise_config_error("top_code_candidates must be at least 1")
        if self.max_tokens is not None and self.max_tokens < 1:
            self.raise_config_error("max_tokens must be positive")
        if not 0 <= self.temperature <= 2:
            self.raise_config_error("temperature must be in [0, 2]")
        if self.postprocess not in POSTPROCESS_CHOICES:
            self.raise_config_error("postprocess must be one of %s" % ", ".join(POSTPROCESS_CHOICES))
        if self.importance_init not in INIT_CHOICES:
            self.raise_config_error("importance_init must be one of %s" % ", ".join(INIT_CHOICES))
        if self.ranking not in RANKING_METHODS:
            self.raise_config_error("ranking must be one of %s" % ", ".join(RANKING_METHODS))

        for step in self.reformation_steps or ():
            if not isinstance(step, int) or not 2 <= step < self.max_steps:
                self.raise_config_error("reformation steps must be in [2, %d), got %s" % (self.max_steps, step))

        for step in (self.role_schedule or {}).keys():
            if not str(step).isdigit() or not 1 <= int(step) <= self.max_steps:
                self.raise_config_error("role schedule steps must be in [1, %d], got %s" % (self.max_steps, step))

        # validates the nested policy
        self.consensus_policy

    @property
    def consensus_policy(self):
        return ConsensusPolicy(self.consensus)

    @property
    def reformation_schedule(self):
        """
        Gets the sorted reformation steps, defaulting to a single reformation half way through the run
        """
        if self.reformation_steps is not None:
            return sorted(set(self.reformation_steps))

        default = int(math.ceil(self.max_steps / 2.0))
        return [default] if 2 <= default < self.max_steps else []

    def roles_at(self, step):
        """
        Gets the roles that act at the given step, or None if every agent acts
        """
        if not self.role_schedule:
            return None
        roles = self.role_schedule.get(str(step))
        return None if roles is None else set(roles)

    def max_tokens_for(self, task_kind):
        if self.max_tokens:
            return self.max_tokens
        if task_kind == TASK_ACTION or self.postprocess == POSTPROCESS_TOP_TESTED_CODE:
            return 1024
        return 2048

    @classmethod
    def from_json(cls, json_obj):
        """
        Builds a config from a document, applying its preset's values first
        """
        json_obj = dict(json_obj)
        preset = json_obj.get("preset")
        if preset and preset not in PRESETS:
            raise ImproperlyConfigured("Unknown preset: %s (choose from %s)" % (preset, ", ".join(sorted(PRESETS))))

        data = dict(PRESETS.get(preset, {}))
        consensus = dict(data.get("consensus", {}), **json_obj.pop("consensus", {}))
        data.update(json_obj)
        data["consensus"] = consensus
        return cls(data)

    @classmethod
    def for_preset(cls, preset, **overrides):
        return cls.from_json(dict(overrides, preset=preset))

    def with_overrides(self, **overrides):
        return RunConfig.from_json(dict(self.to_json(), **overrides))

    def to_json(self):
        return {name: getattr(self, name) for name in CONFIG_FIELDS}


def load_config(path=None, preset=None, **overrides):
    doc = read_json(path) if path else {}
    if preset:
        doc["preset"] = preset
    doc.update(overrides)
    return RunConfig.from_json(doc)


class TaskQuery(object):
    """
    A query to solve, with an optional gold label or unit tests for grading. Extra fields of the dataset record are
    kept as tags.
    """

    KNOWN_FIELDS = ("query_id", "prompt", "task_kind", "gold", "group", "tests")

    def __init__(self, query_id, prompt, task_kind=TASK_MULTIPLE_CHOICE, gold=None, group=None, tests=(), tags=None):
        if task_kind not in TASK_KINDS:
            raise ImproperlyConfigured("Query %s has unknown task kind: %s" % (query_id, task_kind))

        self.query_id = str(query_id)
        self.prompt = prompt
        self.task_kind = task_kind
        self.gold = gold
        self.group = group
        self.tests = tuple(tests or ())
        self.tags = dict(tags or {})

    def tag(self, key):
        if key == "group":
            return self.group
        return self.tags.get(key)

    @classmethod
    def from_json(cls, json_obj):
        return cls(
            json_obj["query_id"],
            json_obj["prompt"],
            json_obj.get("task_kind", TASK_MULTIPLE_CHOICE),
            json_obj.get("gold"),
            json_obj.get("group"),
            json_obj.get("tests"),
            {k: v for k, v in json_obj.items() if k not in cls.KNOWN_FIELDS},
        )

    def to_json(self):
        json_obj = dict(self.tags)
        json_obj.update(
            {
                "query_id": self.query_id,
                "prompt": self.prompt,
                "task_kind": self.task_kind,
                "gold": self.gold,
                "group": self.group,
                "tests": list(self.tests),
            }
        )
        return json_obj

    def __repr__(self):
        return "TaskQuery(%r)" % self.query_id


class TaskResult(object):
    """
    The outcome of a run: the output, when it stopped, what it cost and the whole network
    """

    def __init__(self, query_id, output, stop_step, api_calls, graph, ranker_calls=0, attempts=0, flags=()):
        self.query_id = query_id
        self.output = output
        self.stop_step = stop_step
        self.api_calls = api_calls
        self.graph = graph
        self.ranker_calls = ranker_calls
        self.attempts = attempts
        self.flags = list(flags)

    def summary(self):
        return {
            "query_id": self.query_id,
            "output": self.output,
            "stop_step": self.stop_step,
            "api_calls": self.api_calls,
            "ranker_calls": self.ranker_calls,
            "attempts": self.attempts,
            "flags": self.flags,
        }

    def __repr__(self):
        return "TaskResult(%r, %r, stop_step=%d)" % (self.query_id, self.output, self.stop_step)
