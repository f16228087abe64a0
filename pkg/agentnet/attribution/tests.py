import math
import random
from collections import defaultdict

from agentnet.inference.engine import run_inference
from agentnet.inference.models import INIT_SYNTAX_OK
from agentnet.network.models import NodeId
from agentnet.test import LETTERS, BaseAgentNetTest, make_queries, random_rated_graph, scripted_agent

from .importance import (
    average_reports,
    backpropagate_importance,
    compute_importance,
    init_final_contributions,
    select_team,
)
from .metrics import FLAG_IMPORTANCE_FLOORED, FLAG_SHAPLEY_SHIFTED, agreement_metrics, listmle, uniform_report
from .models import AttributionError, ImportanceReport, MetricError, SelectionError, ShapleyError, ShapleyReport
from .shapley import WEIGHTING_CLASSICAL, shapley
from .weights import normalize_ratings


def path_oracle(graph, terminal):
    """
    Sums terminal mass times the product of edge weights over every backward path from the final layer
    """
    values = defaultdict(float)

    def walk(node, mass):
        values[node] += mass
        record = graph.records[node]
        if record.is_copy:
            walk(record.copied_from, mass)
        for predecessor, weight in record.normalized_weights or ():
            walk(predecessor, mass * weight)

    for node, mass in terminal.items():
        walk(node, mass)
    return values


def table_performance(values):
    values = {frozenset(k): v for k, v in values.items()}
    return lambda subset: values[frozenset(subset)]


class NormalizeRatingsTest(BaseAgentNetTest):
    def test_normalize_ratings(self):
        nodes = [NodeId(1, i) for i in range(1, 4)]

        self.assertEqual(normalize_ratings(list(zip(nodes, [1, 5, 2]))), list(zip(nodes, [0.125, 0.625, 0.25])))
        self.assertSumsTo([w for _, w in normalize_ratings(list(zip(nodes, [3, 3, 3])))], 1.0)
        self.assertEqual(normalize_ratings([(nodes[0], 4)]), [(nodes[0], 1.0)])

        # scaling every score leaves the weights alone
        for (_, w1), (_, w2) in zip(
            normalize_ratings(list(zip(nodes, [1, 2, 4]))), normalize_ratings(list(zip(nodes, [2, 4, 8])))
        ):
            self.assertAlmostEqual(w1, w2, places=12)

        self.assertRaises(AttributionError, normalize_ratings, [])
        self.assertRaises(AttributionError, normalize_ratings, [(nodes[0], 0)])


class ImportanceTest(BaseAgentNetTest):
    def test_init_final_contributions(self):
        graph = self.create_rated_graph([["A", "B", "C", "D"], ["A", "A", "A", "B"]])
        terminal, fallback = init_final_contributions(graph)

        self.assertEqual(terminal, {NodeId(2, 1): 1 / 3.0, NodeId(2, 2): 1 / 3.0, NodeId(2, 3): 1 / 3.0})
        self.assertFalse(fallback)

        # classes tied at the largest size share the mass
        graph = self.create_rated_graph([["A", "B", "C", "D", "A"], ["B", "C", "B", "C", "D"]])
        terminal, fallback = init_final_contributions(graph)

        self.assertEqual(terminal, {NodeId(2, i): 0.25 for i in range(1, 5)})
        self.assertFalse(fallback)

        graph = self.create_rated_graph([["A", "B", "C", "D"]])
        terminal, fallback = init_final_contributions(graph)

        self.assertEqual(terminal, {NodeId(1, i): 0.25 for i in range(1, 5)})
        self.assertTrue(fallback)

        # a lone agent is consistent with itself
        terminal, fallback = init_final_contributions(self.create_rated_graph([["B"]]))
        self.assertEqual(terminal, {NodeId(1, 1): 1.0})
        self.assertFalse(fallback)

    def test_init_syntax_ok(self):
        graph = self.create_rated_graph([["x = 1", "def f(:", "return = 2", "y = [1, 2]"]])
        terminal, fallback = init_final_contributions(graph, INIT_SYNTAX_OK)

        self.assertEqual(terminal, {NodeId(1, 1): 0.5, NodeId(1, 4): 0.5})
        self.assertFalse(fallback)

        graph = self.create_rated_graph([["def f(:", "return = 2"]])
        terminal, fallback = init_final_contributions(graph, INIT_SYNTAX_OK)
        self.assertEqual(terminal, {NodeId(1, 1): 0.5, NodeId(1, 2): 0.5})
        self.assertTrue(fallback)

        self.assertRaises(AttributionError, init_final_contributions, graph, "vibes")

    def test_init_without_answers(self):
        graph = self.create_rated_graph([["A", "B"]])
        for record in graph.records.values():
            record.failed = True

        self.assertRaises(AttributionError, init_final_contributions, graph)

    def test_backpropagate(self):
        graph = self.create_rated_graph([["A", "B"], ["A", "A"]], weights={(2, 1): [0.6, 0.4], (2, 2): [0.2, 0.8]})
        report = backpropagate_importance(graph, {NodeId(2, 1): 0.5, NodeId(2, 2): 0.5})

        self.assertAlmostEqual(report.per_node[NodeId(1, 1)], 0.4, places=12)
        self.assertAlmostEqual(report.per_node[NodeId(1, 2)], 0.6, places=12)
        self.assertAlmostEqual(report.per_agent[1], 0.9, places=12)
        self.assertAlmostEqual(report.per_agent[2], 1.1, places=12)
        self.assertEqual(sorted(report.layer_sums), [1, 2])
        self.assertAlmostEqual(report.total_mass, 2.0, places=12)

        self.assertRaises(AttributionError, backpropagate_importance, graph, {NodeId(1, 1): 1.0})

    def test_chain(self):
        report = compute_importance(self.create_rated_graph([["A"], ["B"], ["C"]]))

        self.assertEqual(report.per_node, {NodeId(t, 1): 1.0 for t in range(1, 4)})
        self.assertEqual(report.per_agent, {1: 3.0})
        self.assertEqual(report.flags, [])

    def test_missing_weights(self):
        graph = self.create_rated_graph([["A", "B"], ["A", "A"]])
        graph.records[NodeId(2, 1)].normalized_weights = None

        with self.assertRaises(AttributionError) as context:
            backpropagate_importance(graph, {NodeId(2, 1): 1.0}, raters={1, 2})
        self.assertIn("2:1", str(context.exception))

        # nodes of agents which don't rate spread uniformly
        report = backpropagate_importance(graph, {NodeId(2, 1): 1.0}, raters={2})
        self.assertEqual(report.per_node[NodeId(1, 1)], 0.5)
        self.assertEqual(report.per_node[NodeId(1, 2)], 0.5)

    def test_matches_path_oracle(self):
        rng = random.Random(17)

        for num_agents in range(1, 5):
            for num_steps in range(1, 5):
                for _ in range(3):
                    graph = random_rated_graph(rng, num_agents, num_steps)
                    terminal, _ = init_final_contributions(graph)

                    report = backpropagate_importance(graph, terminal)
                    oracle = path_oracle(graph, terminal)

                    for node, value in report.per_node.items():
                        self.assertAlmostEqual(value, oracle.get(node, 0.0), places=12, msg="at %s" % str(node))
                    for step, total in report.layer_sums.items():
                        self.assertAlmostEqual(total, 1.0, places=9)

    def test_scripted_runs_conserve_mass(self):
        rng = random.Random(23)

        for trial in range(200):
            num_agents = rng.randint(3, 6)
            num_steps = rng.randint(2, 4)
            answers = [[rng.choice("AB") for _ in range(num_steps)] for _ in range(num_agents)]

            pool = self.create_pool(answers, rating_policy="random", seed=trial)
            ranker = self.create_ranker() if trial % 2 else None
            result = run_inference(
                pool, self.create_query("t%d" % trial), self.create_config(max_steps=num_steps), ranker=ranker
            )
            report = compute_importance(result.graph, pool=pool)

            self.assertEqual(sorted(report.layer_sums), list(range(1, result.stop_step + 1)))
            for step, total in report.layer_sums.items():
                self.assertAlmostEqual(total, 1.0, places=9, msg="layer %d of trial %d" % (step, trial))
            self.assertAlmostEqual(report.total_mass, result.stop_step, places=8)
            self.assertTrue(all(v >= 0 for v in report.per_node.values()))

            for node, value in report.per_node.items():
                if not result.graph.is_active(node):
                    self.assertEqual(value, 0.0)

    def test_select_team(self):
        report = ImportanceReport(per_agent={1: 0.9, 2: 1.7, 3: 1.4})
        self.assertEqual(select_team(report, 2), [2, 3])
        self.assertEqual(select_team(report, 3), [2, 3, 1])

        tied = ImportanceReport(per_agent={3: 1.0, 1: 0.5, 2: 1.0})
        self.assertEqual(select_team(tied, 1), [2])

        self.assertRaises(SelectionError, select_team, report, 0)
        self.assertRaises(SelectionError, select_team, report, 4)

        # agents without any importance didn't take part
        idle = ImportanceReport(per_agent={1: 0.9, 2: 1.7, 3: 0.0})
        self.assertEqual(select_team(idle, 2), [2, 1])
        self.assertRaises(SelectionError, select_team, idle, 3)

    def test_average_reports(self):
        first = ImportanceReport(per_agent={1: 1.0, 2: 0.5})
        second = ImportanceReport(per_agent={1: 0.0, 3: 1.0}, flags=[ImportanceReport.FLAG_UNIFORM_FALLBACK])

        average = average_reports([first, second])
        self.assertEqual(average.per_agent, {1: 0.5, 2: 0.25, 3: 0.5})
        self.assertEqual(average.flags, ["uniform-fallback"])

        self.assertRaises(AttributionError, average_reports, [])

    def test_report_json(self):
        report = compute_importance(self.create_rated_graph([["A", "B"], ["A", "A"]]))
        report.selected_team = [1]

        self.assertEqual(ImportanceReport.from_json(report.to_json()), report)
        self.assertEqual(report.to_json()["per_agent"], {"1": 1.0, "2": 1.0})


class ShapleyTest(BaseAgentNetTest):
    def test_two_agents(self):
        pool = self.create_pool(["A", "B"])
        performance = table_performance({(1,): 1, (2,): 0, (1, 2): 1})

        report = shapley(pool, performance=performance)
        self.assertEqual(report.per_agent, {1: 0.5, 2: 0.0})
        self.assertEqual(report.evaluations, 4)
        self.assertEqual(report.pipeline_runs, 3)
        self.assertEqual(report.performance_fn_tag, "injected")

        report = shapley(pool, performance=performance, weighting=WEIGHTING_CLASSICAL)
        self.assertEqual(report.per_agent, {1: 1.0, 2: 0.0})
        self.assertEqual(report.to_json()["weighting"], "classical")

    def test_null_and_symmetric_agents(self):
        for num_agents in range(2, 5):
            pool = self.create_pool(["A"] * num_agents)

            def performance(subset):
                return len(set(subset) & {1, 2}) / 2.0

            report = shapley(pool, performance=performance)
            self.assertEqual(report.evaluations, num_agents * 2 ** (num_agents - 1))
            self.assertAlmostEqual(report.per_agent[1], report.per_agent[2], places=12)
            self.assertGreater(report.per_agent[1], 0)
            for agent_id in range(3, num_agents + 1):
                self.assertEqual(report.per_agent[agent_id], 0.0)

            # the classical weighting shares out exactly the full team's performance
            classical = shapley(pool, performance=performance, weighting=WEIGHTING_CLASSICAL, parallelism=3)
            self.assertSumsTo(classical.per_agent.values(), 1.0)
            self.assertEqual(classical.pipeline_runs, 2 ** num_agents - 1)

    def test_limits(self):
        def performance(subset):
            return 1.0

        self.assertRaises(ShapleyError, shapley, self.create_pool(["A"] * 9), performance=performance)
        self.assertRaises(ShapleyError, shapley, [], performance=performance)
        self.assertRaises(ShapleyError, shapley, self.create_pool(["A"]), performance=performance, weighting="fair")

        report = shapley(self.create_pool(["A"] * 8), performance=performance)
        self.assertEqual(report.evaluations, 8 * 128)

    def test_importance_tracks_shapley(self):
        """
        Three experts always answer correctly, two weak agents answer wrongly and then follow any majority they see.
        Only the experts ever change a team's accuracy, and the importance scores should lean the same way.
        """
        queries = make_queries(5, seed=8)
        tables = {i: {} for i in range(1, 6)}
        for query in queries:
            wrong = [letter for letter in LETTERS if letter != query.gold]
            for agent_id in (1, 2, 3):
                tables[agent_id][query.query_id] = {"*": {"*": query.gold}}
            for agent_id, answer in ((4, wrong[0]), (5, wrong[1])):
                follow = {letter: letter for letter in LETTERS}
                follow["*"] = answer
                tables[agent_id][query.query_id] = {"1": {"*": answer}, "*": follow}

        pool = [scripted_agent(i, tables[i]) for i in range(1, 6)]
        config = self.create_config()

        oracle = shapley(pool, queries, config)
        self.assertEqual(oracle.performance_fn_tag, "exact_match")
        self.assertEqual(oracle.pipeline_runs, 31)
        self.assertEqual(oracle.performances[frozenset([1, 4, 5])], 1.0)
        self.assertEqual(oracle.performances[frozenset([4, 5])], 0.0)
        self.assertEqual(oracle.per_agent[4], 0.0)
        self.assertEqual(oracle.per_agent[5], 0.0)
        self.assertGreater(oracle.per_agent[1], 0)

        reports = []
        for query in queries:
            result = run_inference(pool, query, config)
            self.assertEqual(result.output, query.gold)
            self.assertEqual(result.stop_step, 2)
            reports.append(compute_importance(result.graph, pool=pool))
        importance = average_reports(reports)

        self.assertEqual(select_team(importance, 3), [1, 2, 3])

        learned, _ = agreement_metrics(importance, oracle)
        uniform, _ = agreement_metrics(uniform_report(range(1, 6)), oracle)
        self.assertLess(learned, uniform)


class AgreementMetricsTest(BaseAgentNetTest):
    def test_listmle(self):
        for n in range(1, 6):
            self.assertAlmostEqual(listmle([0.2] * n, list(range(n))), math.log(math.factorial(n)), places=9)

        # ranking the best first is more likely
        self.assertLess(listmle([3.0, 1.0], [0, 1]), listmle([3.0, 1.0], [1, 0]))

    def test_agreement_metrics(self):
        oracle = ShapleyReport({1: 0.5, 2: 0.3, 3: 0.2}, 12, "injected")

        kl, loss = agreement_metrics(ImportanceReport(per_agent={1: 1.0, 2: 0.6, 3: 0.4}), oracle)
        self.assertAlmostEqual(kl, 0.0, places=12)

        kl, loss = agreement_metrics(uniform_report([1, 2, 3]), oracle)
        self.assertGreater(kl, 0.0)
        self.assertAlmostEqual(loss, math.log(6), places=9)

    def test_adjustments(self):
        shifted = agreement_metrics(
            ImportanceReport(per_agent={1: 1.0, 2: 1.0, 3: 1.0}), ShapleyReport({1: -0.1, 2: 0.2, 3: 0.3}, 12, "t")
        )
        self.assertEqual(shifted.flags, (FLAG_SHAPLEY_SHIFTED,))
        self.assertGreaterEqual(shifted.kl, 0.0)

        floored = agreement_metrics(
            ImportanceReport(per_agent={1: 2.0, 2: 0.0}), ShapleyReport({1: 0.5, 2: 0.5}, 4, "t")
        )
        self.assertEqual(floored.flags, (FLAG_IMPORTANCE_FLOORED,))
        self.assertGreater(floored.kl, 1.0)

        self.assertEqual(agreement_metrics(uniform_report([1, 2]), ShapleyReport({1: 0.5, 2: 0.5}, 4, "t")).flags, ())

    def test_errors(self):
        oracle = ShapleyReport({1: 0.5, 2: 0.5}, 4, "t")

        self.assertRaises(MetricError, agreement_metrics, uniform_report([1, 2, 3]), oracle)
        self.assertRaises(MetricError, agreement_metrics, uniform_report([1, 2]), ShapleyReport({1: 0, 2: 0}, 4, "t"))
        self.assertRaises(MetricError, agreement_metrics, ImportanceReport(per_agent={1: 0.0, 2: 0.0}), oracle)
