import random

from django.test import SimpleTestCase

from agentnet.agents.extraction import TASK_MULTIPLE_CHOICE
from agentnet.gateway import reset_ledger
from agentnet.inference.models import RunConfig, TaskQuery
from agentnet.network.models import AgentSpec, MessageRecord, NodeId, build_initial_graph, predecessors

LETTERS = "ABCD"


def fixed_answers(answer, query_id="*"):
    """
    Answer table of an agent which always gives the same answer
    """
    return {query_id: {"*": {"*": answer}}}


def step_answers(answers, query_id="*"):
    """
    Answer table of an agent giving the answers[s - 1] at step s
    """
    return {query_id: {str(s + 1): {"*": a} for s, a in enumerate(answers)}}


def make_queries(num, seed=0, group=None, prefix="q"):
    rng = random.Random(seed)
    return [
        TaskQuery("%s%03d" % (prefix, n), "Question %d?" % n, TASK_MULTIPLE_CHOICE, rng.choice(LETTERS), group)
        for n in range(1, num + 1)
    ]


def scripted_agent(agent_id, answer_table=None, role=None, rater=True, expertise=(), tool_bindings=(), **params):
    backend_params = dict(params)
    if answer_table is not None:
        backend_params["answer_table"] = answer_table

    return AgentSpec(
        agent_id,
        "Agent %d" % agent_id,
        "You are agent %d." % agent_id,
        AgentSpec.BACKEND_SCRIPTED,
        backend_params,
        tool_bindings,
        rater,
        role,
        expertise,
    )


def scripted_ranker(policy="majority", reply=""):
    return AgentSpec(
        AgentSpec.RANKER_ID,
        "Ranker",
        "You rank responses.",
        AgentSpec.BACKEND_SCRIPTED,
        {"ranker_policy": policy, "reply": reply},
        rater=False,
    )


def planted_expert_pool(queries, seed, expert_ids=(2, 5, 7), num_agents=7, expert_accuracy=0.9, weak_accuracy=0.3):
    """
    A pool where experts answer correctly with high probability and stick to their answer, while weak agents are
    mostly wrong and follow any majority they see from step 2
    """
    rng = random.Random(seed)
    tables = {i: {} for i in range(1, num_agents + 1)}

    for query in queries:
        wrong = [letter for letter in LETTERS if letter != query.gold]

        for agent_id in range(1, num_agents + 1):
            expert = agent_id in expert_ids
            if rng.random() < (expert_accuracy if expert else weak_accuracy):
                own = query.gold
            else:
                own = rng.choice(wrong)

            if expert:
                tables[agent_id][query.query_id] = {"*": {"*": own}}
            else:
                follow = {letter: letter for letter in LETTERS}
                follow["*"] = own
                tables[agent_id][query.query_id] = {"1": {"*": own}, "*": follow}

    return [
        scripted_agent(i, tables[i], expertise=("physics",) if i in expert_ids else (), seed=seed)
        for i in range(1, num_agents + 1)
    ]


def consensus_prone_pool(queries, seed, num_agents=4, num_steps=4, converge=0.9):
    """
    A pool split evenly at step 1 which converges on one answer with high probability at every later step
    """
    rng = random.Random(seed)
    tables = {i: {} for i in range(1, num_agents + 1)}

    for query in queries:
        target, other = rng.sample("AB", 2)
        order = list(range(1, num_agents + 1))
        rng.shuffle(order)

        for position, agent_id in enumerate(order):
            answers = [target if position < num_agents // 2 else other]
            for _ in range(2, num_steps + 1):
                answers.append(target if rng.random() < converge else other)
            tables[agent_id].update(step_answers(answers, query.query_id))

    return [scripted_agent(i, tables[i], seed=seed) for i in range(1, num_agents + 1)]


def rated_graph(answers, weights=None):
    """
    Builds a completed network from answers[t - 1][i - 1] for each node. Weight rows are given per (step, agent id)
    over the node's predecessors in agent order, uniform when not given.
    """
    pool = [scripted_agent(i + 1) for i in range(len(answers[0]))]
    graph = build_initial_graph(pool, len(answers))

    for t, layer in enumerate(answers, start=1):
        for i, answer in enumerate(layer, start=1):
            node = NodeId(t, i)
            row = None
            preds = predecessors(graph, node)
            if preds:
                values = (weights or {}).get((t, i)) or [1.0 / len(preds)] * len(preds)
                row = list(zip(preds, values))
            graph.add_record(MessageRecord(node, "(%s)" % answer, answer, normalized_weights=row, call_cost=1))

    graph.stop_step = len(answers)
    return graph


def random_rated_graph(rng, num_agents, num_steps):
    answers = [[rng.choice("AB") for _ in range(num_agents)] for _ in range(num_steps)]
    weights = {}
    for t in range(2, num_steps + 1):
        for i in range(1, num_agents + 1):
            scores = [rng.randint(1, 5) for _ in range(num_agents)]
            weights[(t, i)] = [s / float(sum(scores)) for s in scores]
    return rated_graph(answers, weights)


class BaseAgentNetTest(SimpleTestCase):
    """
    Base class for all test cases
    """

    def setUp(self):
        super(BaseAgentNetTest, self).setUp()

        reset_ledger()

    def create_agent(self, agent_id, answer="A", **kwargs):
        if "answer_table" not in kwargs:
            kwargs["answer_table"] = fixed_answers(answer)
        return scripted_agent(agent_id, **kwargs)

    def create_pool(self, answers, **kwargs):
        """
        Creates a scripted pool with one agent per answer. Each answer is a letter, a list of letters by step or an
        answer table.
        """
        pool = []
        for n, answer in enumerate(answers, start=1):
            if isinstance(answer, dict):
                table = answer
            elif isinstance(answer, (list, tuple)):
                table = step_answers(answer)
            else:
                table = fixed_answers(answer)
            pool.append(scripted_agent(n, table, **kwargs))
        return pool

    def create_ranker(self, policy="majority", reply=""):
        return scripted_ranker(policy, reply)

    def create_query(self, query_id="q1", prompt="Which option is correct?", task_kind=TASK_MULTIPLE_CHOICE, **kwargs):
        return TaskQuery(query_id, prompt, task_kind, **kwargs)

    def create_config(self, **overrides):
        return RunConfig.from_json(overrides)

    def create_rated_graph(self, answers, weights=None):
        return rated_graph(answers, weights)

    def assertSumsTo(self, values, expected, places=9):
        self.assertAlmostEqual(sum(values), expected, places=places)
