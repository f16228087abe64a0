"""
Shapley values of the agents of a pool, used as a supervised reference for the Agent Importance Scores. Each agent's
marginal contributions are summed over every subset of the other agents. The combination weighting divides the sum
by (number of subsets x number of agents), the classical weighting weights each subset by |T|!(n-|T|-1)!/n!.
"""
import itertools
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor

from django.conf import settings

from agentnet.inference.engine import InferenceError, run_inference

from .models import ShapleyError, ShapleyReport

logger = logging.getLogger(__name__)

WEIGHTING_COMBINATION = "combination"
WEIGHTING_CLASSICAL = "classical"
WEIGHTINGS = (WEIGHTING_COMBINATION, WEIGHTING_CLASSICAL)


def exact_match(query, output):
    return query.gold is not None and output == query.gold


def team_of(pool, agent_ids):
    """
    Gets the agents with the given ids renumbered 1..k in id order, ready to run as a network
    """
    by_id = {a.agent_id: a for a in pool}
    return [by_id[i].renumbered(n + 1) for n, i in enumerate(sorted(agent_ids))]


class PipelinePerformance(object):
    """
    Performance of a team: the mean grade of its outputs over the queries
    """

    def __init__(self, pool, queries, config, grader=None, ranker=None, gateway=None):
        self.pool = pool
        self.queries = queries
        self.config = config
        self.grader = grader or exact_match
        self.ranker = ranker
        self.gateway = gateway

    @property
    def tag(self):
        return getattr(self.grader, "__name__", self.grader.__class__.__name__)

    def __call__(self, agent_ids):
        team = team_of(self.pool, agent_ids)
        total = 0.0
        for query in self.queries:
            try:
                result = run_inference(team, query, self.config, ranker=self.ranker, gateway=self.gateway)
            except InferenceError as e:
                logger.warning("Subset %s failed on query %s: %s" % (sorted(agent_ids), query.query_id, e))
                continue
            total += float(self.grader(query, result.output))
        return total / len(self.queries) if self.queries else 0.0


class PerformanceCache(object):
    """
    Evaluates each subset once. The empty team performs 0.
    """

    def __init__(self, performance):
        self.performance = performance
        self.values = {frozenset(): 0.0}
        self.runs = 0
        self._lock = threading.Lock()

    def evaluate(self, subset):
        subset = frozenset(subset)
        with self._lock:
            if subset in self.values:
                return self.values[subset]

        value = self.performance(subset)

        with self._lock:
            if subset not in self.values:
                self.values[subset] = value
                self.runs += 1
            return self.values[subset]


def subset_weight(subset_size, num_agents, weighting):
    if weighting == WEIGHTING_CLASSICAL:
        return (
            math.factorial(subset_size)
            * math.factorial(num_agents - subset_size - 1)
            / float(math.factorial(num_agents))
        )
    return 1.0 / (2 ** (num_agents - 1) * num_agents)


def shapley(
    pool,
    queries=(),
    config=None,
    grader=None,
    performance=None,
    weighting=WEIGHTING_COMBINATION,
    ranker=None,
    gateway=None,
    parallelism=1,
):
    """
    Computes the Shapley value of every agent of the pool

    :param pool: the agents, at most settings.AGENTNET_MAX_SHAPLEY_AGENTS of them
    :param queries: the TaskQuerys each subset team is run on
    :param config: the RunConfig of those runs
    :param grader: callable (query, output) -> score, defaults to exact match against the gold label
    :param performance: callable (frozenset of agent ids) -> score used instead of running the pipeline
    :param weighting: combination or classical
    :param parallelism: subset runs executed concurrently
    :return: the ShapleyReport
    """
    max_agents = settings.AGENTNET_MAX_SHAPLEY_AGENTS
    if len(pool) > max_agents:
        raise ShapleyError(
            "Exact Shapley values need every subset of the pool, so pools are limited to %d agents. "
            "Evaluate sampled subsets of at most %d agents instead." % (max_agents, max_agents)
        )
    if not pool:
        raise ShapleyError("Can't compute Shapley values of an empty pool")
    if weighting not in WEIGHTINGS:
        raise ShapleyError("Unknown weighting: %s" % weighting)

    if performance is None:
        performance = PipelinePerformance(pool, list(queries), config, grader, ranker, gateway)
        tag = performance.tag
    else:
        tag = "injected"

    cache = PerformanceCache(performance)
    agent_ids = sorted(a.agent_id for a in pool)
    n = len(agent_ids)

    if parallelism > 1:
        subsets = [frozenset(c) for r in range(1, n + 1) for c in itertools.combinations(agent_ids, r)]
        with ThreadPoolExecutor(max_workers=parallelism) as executor:
            list(executor.map(cache.evaluate, subsets))

    per_agent = {}
    evaluations = 0
    for agent_id in agent_ids:
        others = [i for i in agent_ids if i != agent_id]
        value = 0.0
        for size in range(0, n):
            for subset in itertools.combinations(others, size):
                marginal = cache.evaluate(set(subset) | {agent_id}) - cache.evaluate(subset)
                value += subset_weight(size, n, weighting) * marginal
                evaluations += 1
        per_agent[agent_id] = value

    return ShapleyReport(
        per_agent, evaluations, tag, pipeline_runs=cache.runs, weighting=weighting, performances=cache.values
    )
