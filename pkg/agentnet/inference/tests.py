import os
import tempfile
from unittest import mock

from confmodel.errors import ConfigError
from django.core.exceptions import ImproperlyConfigured

from agentnet.agents.extraction import NO_ANSWER, TASK_ACTION, TASK_OPEN_ENDED
from agentnet.attribution.importance import compute_importance
from agentnet.gateway import LEDGER
from agentnet.network.models import AgentSpec, MessageRecord, NodeId, predecessors
from agentnet.network.transcripts import transcript_doc
from agentnet.test import (
    BaseAgentNetTest,
    consensus_prone_pool,
    fixed_answers,
    make_queries,
    planted_expert_pool,
    scripted_agent,
)
from agentnet.utils import json_encode

from .engine import FLAG_ALL_ACTIONS_REJECTED, InferenceError, counted_records, run_inference
from .models import PRESETS, RunConfig, TaskQuery, load_config
from .postprocess import filter_actions, postprocess_plurality, postprocess_top_tested_code

CORRECT_ADD = "def add(a, b):\n    return a + b"
WRONG_ADD = "def add(a, b):\n    return a - b"


class RunInferenceTest(BaseAgentNetTest):
    def assertCostAccounting(self, result, pool_size):
        records = result.graph.records.values()

        self.assertEqual(result.api_calls, sum(r.call_cost for r in records) + result.ranker_calls)
        self.assertEqual([r.call_cost for r in records if r.is_copy], [0 for r in records if r.is_copy])
        self.assertLessEqual(result.api_calls, pool_size * result.graph.max_steps + result.ranker_calls)

        # no records after the run stopped
        self.assertFalse([r for r in records if r.node.step > result.stop_step])

    def test_immediate_consensus(self):
        pool = self.create_pool(["A", "A", "A", "A"])
        result = run_inference(pool, self.create_query(), self.create_config())

        self.assertEqual(result.output, "A")
        self.assertEqual(result.stop_step, 1)
        self.assertEqual(result.api_calls, 4)
        self.assertEqual(result.attempts, 4)
        self.assertEqual(result.ranker_calls, 0)
        self.assertEqual(LEDGER.total_calls, 4)
        self.assertEqual(len(result.graph.records), 4)
        self.assertCostAccounting(result, 4)

        # unless early stopping is held off
        result = run_inference(pool, self.create_query(), self.create_config(consensus={"earliest_stop_step": 3}))
        self.assertEqual(result.stop_step, 3)
        self.assertEqual(result.api_calls, 12)

    def test_converges_at_second_step(self):
        pool = self.create_pool([["A", "A"], ["B", "A"], ["C", "A"], ["D", "B"]])
        result = run_inference(pool, self.create_query(), self.create_config())

        self.assertEqual(result.stop_step, 2)
        self.assertEqual(result.output, "A")
        self.assertEqual(result.api_calls, 8)
        self.assertEqual([r.answer for r in result.graph.layer_records(2)], ["A", "A", "A", "B"])
        self.assertCostAccounting(result, 4)

        # every step 2 agent rated all of step 1
        record = result.graph.records[NodeId(2, 4)]
        self.assertEqual([n for n, _ in record.normalized_weights], [NodeId(1, i) for i in range(1, 5)])
        self.assertAlmostEqual(sum(w for _, w in record.normalized_weights), 1.0, places=9)

    def test_no_consensus(self):
        pool = self.create_pool(["A", "B", "C"])
        result = run_inference(pool, self.create_query(), self.create_config())

        self.assertEqual(result.stop_step, 4)
        self.assertEqual(result.api_calls, 12)
        self.assertEqual(result.output, "A")  # tie goes to the lowest agent id
        self.assertCostAccounting(result, 3)

    def test_out_of_range_ratings(self):
        pool = self.create_pool(["A", "B", "C"], rating_policy="fixed", fixed_scores={"1": 7})
        result = run_inference(pool, self.create_query(), self.create_config())

        self.assertEqual(result.stop_step, 4)
        record = result.graph.records[NodeId(2, 2)]
        self.assertEqual(record.ratings, [(NodeId(1, 1), 5), (NodeId(1, 2), 3), (NodeId(1, 3), 3)])
        self.assertAlmostEqual(record.normalized_weights[0][1], 5.0 / 11, places=9)
        self.assertCostAccounting(result, 3)

    def test_reformation(self):
        pool = self.create_pool(["A", "B", "C", "D"])
        result = run_inference(pool, self.create_query(), self.create_config(), ranker=self.create_ranker())

        graph = result.graph
        self.assertEqual(result.stop_step, 4)
        self.assertEqual(result.ranker_calls, 1)
        self.assertEqual(result.api_calls, 4 + 0 + 2 + 2 + 1)
        self.assertEqual(result.attempts, 9)
        self.assertEqual(LEDGER.per_agent_calls[0], 1)

        self.assertEqual(graph.active_agents(1), [1, 2, 3, 4])
        self.assertEqual(graph.active_agents(2), [1, 2])
        self.assertEqual(graph.active_agents(4), [1, 2])
        self.assertEqual(graph.copy_forward, {2: frozenset({1, 2})})
        self.assertEqual(graph.records[NodeId(2, 1)].copied_from, NodeId(1, 1))
        self.assertEqual(graph.records[NodeId(2, 2)].call_cost, 0)
        self.assertNotIn(NodeId(2, 3), graph.records)

        # later layers only hear from survivors
        self.assertEqual(predecessors(graph, NodeId(3, 2)), [NodeId(2, 1), NodeId(2, 2)])
        for step in (3, 4):
            for record in graph.layer_records(step):
                self.assertEqual({n.agent_id for n, _ in record.normalized_weights}, {1, 2})

        self.assertEqual(result.output, "A")
        self.assertCostAccounting(result, 4)

    def test_tools_are_not_ranked(self):
        checker = AgentSpec(1, "Checker", backend=AgentSpec.BACKEND_TOOL, backend_params={"tool": "syntax-check"})
        pool = [checker] + [scripted_agent(i, fixed_answers(a)) for i, a in zip(range(2, 6), "ABCD")]

        result = run_inference(pool, self.create_query(), self.create_config(), ranker=self.create_ranker())

        self.assertEqual(result.ranker_calls, 1)
        self.assertEqual(result.graph.active_agents(2), [2, 3])
        self.assertEqual(result.output, "A")

    def test_reformation_skipped(self):
        # a ranker can't narrow a team that is already small enough
        pool = self.create_pool(["A", "B"])
        result = run_inference(pool, self.create_query(), self.create_config(), ranker=self.create_ranker())

        self.assertEqual(result.ranker_calls, 0)
        self.assertEqual(result.api_calls, 8)
        self.assertEqual(result.graph.copy_forward, {})

    def test_role_schedule(self):
        pool = [
            scripted_agent(1, fixed_answers("A"), role="writer"),
            scripted_agent(2, fixed_answers("B"), role="writer"),
            scripted_agent(3, fixed_answers("C"), role="reviewer"),
        ]
        config = self.create_config(
            max_steps=3,
            reformation_steps=[],
            role_schedule={"1": ["writer"], "2": ["reviewer"], "3": ["writer"]},
            answer_roles=["writer"],
        )
        result = run_inference(pool, self.create_query(), config)
        records = result.graph.records

        self.assertEqual(result.stop_step, 3)
        self.assertEqual(result.api_calls, 2 + 1 + 2)

        self.assertTrue(records[NodeId(1, 3)].idle)
        self.assertEqual(records[NodeId(1, 3)].call_cost, 0)
        self.assertEqual(records[NodeId(2, 1)].copied_from, NodeId(1, 1))
        self.assertEqual(records[NodeId(2, 3)].call_cost, 1)
        self.assertEqual(records[NodeId(3, 3)].copied_from, NodeId(2, 3))

        # the reviewer only rated the writers that produced a message
        self.assertEqual([n for n, _ in records[NodeId(2, 3)].normalized_weights], [NodeId(1, 1), NodeId(1, 2)])

        # only writers count
        pool_by_id = {a.agent_id: a for a in pool}
        self.assertEqual([r.answer for r in counted_records(result.graph, 3, pool_by_id, {"writer"})], ["A", "B"])
        self.assertEqual(result.output, "A")
        self.assertCostAccounting(result, 3)

    def test_agent_failure(self):
        pool = self.create_pool(["A", "B", "A"])
        pool[2].backend_params["fail_steps"] = [1]
        config = self.create_config(max_steps=3, reformation_steps=[])

        result = run_inference(pool, self.create_query(), config)
        graph = result.graph

        self.assertTrue(graph.records[NodeId(1, 3)].failed)
        self.assertEqual(graph.records[NodeId(1, 3)].call_cost, 0)
        self.assertEqual(graph.active_agents(2), [1, 2])
        self.assertEqual(predecessors(graph, NodeId(2, 1)), [NodeId(1, 1), NodeId(1, 2)])

        self.assertEqual(result.stop_step, 3)
        self.assertEqual(result.api_calls, 6)
        self.assertEqual(result.attempts, 7)
        self.assertEqual(LEDGER.logical_calls, 6)
        self.assertCostAccounting(result, 3)

    def test_agent_failure_at_last_step(self):
        pool = self.create_pool(["A", "B"])
        pool[1].backend_params["fail_steps"] = [2]

        result = run_inference(pool, self.create_query(), self.create_config(max_steps=2))

        self.assertTrue(result.graph.records[NodeId(2, 2)].failed)
        self.assertEqual(result.graph.active_agents(2), [1, 2])
        self.assertEqual(result.stop_step, 2)
        self.assertEqual(result.output, "A")

    def test_every_agent_fails(self):
        pool = self.create_pool(["A", "B"], fail_steps=[1])

        with self.assertRaises(InferenceError) as context:
            run_inference(pool, self.create_query(), self.create_config())

        graph = context.exception.graph
        self.assertEqual(len(graph.records), 2)
        self.assertTrue(all(r.failed for r in graph.records.values()))

    def test_parallel_layers(self):
        pool = self.create_pool([["A", "B", "A"], ["B", "B", "C"], ["C", "A", "B"], ["D", "D", "D"]], delay=0.01)
        query = self.create_query()

        sequential = run_inference(pool, query, self.create_config(max_steps=3))
        parallel = run_inference(pool, query, self.create_config(max_steps=3, parallelism=4))

        self.assertEqual(json_encode(parallel.graph, pretty=True), json_encode(sequential.graph, pretty=True))
        self.assertEqual(parallel.api_calls, sequential.api_calls)

    def test_determinism(self):
        queries = make_queries(5, seed=3)
        pool = planted_expert_pool(queries, seed=3)
        ranker = self.create_ranker()
        config = self.create_config(preset="reasoning", shuffle_seed=11)

        for query in queries:
            first = run_inference(pool, query, config, ranker=ranker)
            second = run_inference(pool, query, config, ranker=ranker)

            self.assertEqual(
                json_encode(transcript_doc(first, pool, ranker, config, query), pretty=True),
                json_encode(transcript_doc(second, pool, ranker, config, query), pretty=True),
            )
            self.assertCostAccounting(first, len(pool))

    def test_shuffle_seed_invariance(self):
        queries = make_queries(10, seed=4)
        pool = planted_expert_pool(queries, seed=4)
        for agent in pool:
            agent.backend_params["noise"] = 0.3
        ranker = self.create_ranker()

        for query in queries:
            reports = []
            for shuffle_seed in (0, 1, 2):
                config = self.create_config(preset="reasoning", shuffle_seed=shuffle_seed)
                result = run_inference(pool, query, config, ranker=ranker)
                reports.append(compute_importance(result.graph, pool=pool).to_json())

            self.assertEqual(reports[0], reports[1])
            self.assertEqual(reports[0], reports[2])

    def test_early_stopping_savings(self):
        queries = make_queries(100, seed=5)
        pool = consensus_prone_pool(queries, seed=5)

        with_stopping = self.create_config(preset="reasoning")
        without_stopping = self.create_config(preset="reasoning", consensus={"enabled": False})

        calls = []
        for config in (with_stopping, without_stopping):
            results = [run_inference(pool, q, config) for q in queries]
            for result in results:
                self.assertCostAccounting(result, len(pool))
            calls.append(sum(r.api_calls for r in results) / float(len(results)))

        self.assertEqual(calls[1], 16.0)
        self.assertLessEqual(calls[0], 0.7 * calls[1])

    def test_reasoning_preset_cost_bracket(self):
        queries = make_queries(50, seed=6)
        pool = consensus_prone_pool(queries, seed=6)
        config = self.create_config(preset="reasoning")

        results = [run_inference(pool, q, config, ranker=self.create_ranker()) for q in queries]
        mean_calls = sum(r.api_calls for r in results) / float(len(results))

        self.assertGreater(mean_calls, 4)
        self.assertLess(mean_calls, 13)
        for result in results:
            self.assertEqual(result.ranker_calls, 1)
            self.assertCostAccounting(result, len(pool))

    def test_code_preset(self):
        pool = [
            scripted_agent(1, fixed_answers(CORRECT_ADD), role="writer", fence="python"),
            scripted_agent(2, fixed_answers(WRONG_ADD), role="writer", fence="python"),
            scripted_agent(
                3,
                fixed_answers("assert add(1, 2) == 3"),
                role="reviewer",
                fence="python",
                tool_bindings=("unit-tester",),
            ),
            AgentSpec(
                4, "Checker", backend=AgentSpec.BACKEND_TOOL, backend_params={"tool": "syntax-check"}, role="reviewer"
            ),
        ]

        query = self.create_query("add", "Write add(a, b)", task_kind=TASK_OPEN_ENDED)
        config = self.create_config(preset="code")
        result = run_inference(pool, query, config)
        records = result.graph.records

        self.assertEqual(result.stop_step, 6)
        self.assertEqual(result.api_calls, 2 + 1 + 2 + 2 + 1 + 2)
        self.assertEqual(records[NodeId(2, 3)].unit_tests, ("assert add(1, 2) == 3",))
        self.assertEqual(records[NodeId(2, 4)].answer, NO_ANSWER)
        self.assertIn("no syntax errors", records[NodeId(2, 4)].raw_text)
        self.assertEqual(records[NodeId(3, 4)].copied_from, NodeId(2, 4))
        self.assertEqual(result.output, CORRECT_ADD)
        self.assertCostAccounting(result, 4)

    def test_action_filter(self):
        pool = self.create_pool(["click[Buy Now]", "click[Buy Now]", "search[red shoes]"])
        query = self.create_query("shop", "Buy red shoes", task_kind=TASK_ACTION)

        result = run_inference(pool, query, self.create_config())
        self.assertEqual(result.output, "click[Buy Now]")

        result = run_inference(pool, query, self.create_config(), action_filter=lambda a: a.startswith("search"))
        self.assertEqual(result.output, "search[red shoes]")
        self.assertEqual(result.flags, [])

        result = run_inference(pool, query, self.create_config(), action_filter=lambda a: False)
        self.assertEqual(result.output, NO_ANSWER)
        self.assertEqual(result.flags, [FLAG_ALL_ACTIONS_REJECTED])

    def test_invalid_pool(self):
        self.assertRaises(ImproperlyConfigured, run_inference, [], self.create_query(), self.create_config())


class PostprocessTest(BaseAgentNetTest):
    def records(self, answers, step=1):
        return [MessageRecord(NodeId(step, i), a, a) for i, a in enumerate(answers, start=1)]

    def test_plurality(self):
        self.assertEqual(postprocess_plurality(self.records(["A", "B", "A"])), "A")
        self.assertEqual(postprocess_plurality(self.records(["B", "A"])), "B")
        self.assertEqual(postprocess_plurality(self.records(["C", "B", "B", "C"])), "C")
        self.assertEqual(postprocess_plurality(self.records([NO_ANSWER, NO_ANSWER, "B"])), "B")
        self.assertEqual(postprocess_plurality(self.records([NO_ANSWER, NO_ANSWER])), NO_ANSWER)
        self.assertEqual(postprocess_plurality([]), NO_ANSWER)

    def test_plurality_bleu(self):
        policy = RunConfig.for_preset("code").consensus_policy
        base = "def total(items):\n    result = 0\n    for item in items:\n        result += item\n    return result"
        answers = [
            "def total(values):\n    return sum(values)",
            base,
            base + "\n",
            base.replace("result += item", "result += item  # add"),
        ]
        self.assertEqual(postprocess_plurality(self.records(answers), policy=policy), base)

    def test_top_tested_code(self):
        candidates = self.records([WRONG_ADD, CORRECT_ADD, WRONG_ADD], step=3)
        tests = ["assert add(1, 2) == 3", "assert add(0, 0) == 0"]

        for seed in range(3):
            self.assertEqual(postprocess_top_tested_code(candidates, tests, seed), CORRECT_ADD)

        # ties are broken by a seeded choice
        twins = [CORRECT_ADD, "def add(a, b):\n    return b + a", WRONG_ADD]
        candidates = self.records(twins)
        picks = {postprocess_top_tested_code(candidates, tests, s) for s in range(20)}
        self.assertEqual(picks, set(twins[:2]))
        self.assertEqual(
            postprocess_top_tested_code(candidates, tests, 7), postprocess_top_tested_code(candidates, tests, 7)
        )
        self.assertEqual(postprocess_top_tested_code(candidates, tests, 7, top=1), CORRECT_ADD)

        # no tests means plurality of the final layer
        final = self.records([WRONG_ADD, WRONG_ADD, CORRECT_ADD], step=3)
        self.assertEqual(postprocess_top_tested_code(candidates, [], 7, final_records=final), WRONG_ADD)

    def test_top_tested_code_without_interpreter(self):
        candidates = self.records([CORRECT_ADD, WRONG_ADD, WRONG_ADD], step=2)
        tests = ["assert add(1, 2) == 3"]

        with mock.patch("agentnet.agents.backends.tools.subprocess.run", side_effect=OSError("no interpreter")):
            with self.assertLogs("agentnet.inference.postprocess", "WARNING") as logs:
                output = postprocess_top_tested_code(candidates, tests, 7, final_records=candidates)

        self.assertEqual(output, WRONG_ADD)
        self.assertIn("no interpreter", logs.output[0])

    def test_filter_actions(self):
        records = self.records(["click[Buy]", NO_ANSWER, "search[x]"])
        self.assertEqual(filter_actions(records, None), records)
        self.assertEqual([r.answer for r in filter_actions(records, lambda a: True)], ["click[Buy]", "search[x]"])


class RunConfigTest(BaseAgentNetTest):
    def test_defaults(self):
        config = RunConfig({})

        self.assertEqual(config.max_steps, 4)
        self.assertEqual(config.keep_k, 2)
        self.assertEqual(config.reformation_schedule, [2])
        self.assertIsNone(config.roles_at(1))
        self.assertEqual(config.max_tokens_for("multiple-choice"), 2048)
        self.assertEqual(config.max_tokens_for(TASK_ACTION), 1024)
        self.assertEqual(config.consensus_policy.mode, "exact")
        self.assertTrue(config.rate_self)

        self.assertEqual(RunConfig({"max_steps": 6}).reformation_schedule, [3])
        self.assertEqual(RunConfig({"max_steps": 2}).reformation_schedule, [])
        self.assertEqual(RunConfig({"max_steps": 1}).reformation_schedule, [])
        self.assertEqual(RunConfig({"reformation_steps": []}).reformation_schedule, [])
        self.assertEqual(RunConfig({"max_tokens": 300}).max_tokens_for(TASK_ACTION), 300)

    def test_presets(self):
        self.assertEqual(sorted(PRESETS), ["code", "reasoning"])

        reasoning = RunConfig.for_preset("reasoning")
        self.assertEqual(reasoning.max_steps, 4)
        self.assertEqual(reasoning.reformation_schedule, [2])
        self.assertEqual(reasoning.temperature, 0.2)

        code = RunConfig.for_preset("code", shuffle_seed=3, consensus={"bleu_threshold": 0.95})
        self.assertEqual(code.max_steps, 6)
        self.assertEqual(code.reformation_schedule, [4])
        self.assertEqual(code.roles_at(1), {"writer"})
        self.assertEqual(code.roles_at(5), {"reviewer"})
        self.assertEqual(code.answer_roles, ["writer"])
        self.assertEqual(code.max_tokens_for(TASK_OPEN_ENDED), 1024)
        self.assertEqual(code.consensus_policy.mode, "bleu")
        self.assertEqual(code.consensus_policy.bleu_threshold, 0.95)
        self.assertEqual(code.consensus_policy.earliest_stop_step, 3)
        self.assertEqual(code.shuffle_seed, 3)

        self.assertEqual(code.with_overrides(keep_k=3).keep_k, 3)
        self.assertEqual(code.with_overrides(keep_k=3).reformation_schedule, [4])

        self.assertRaises(ImproperlyConfigured, RunConfig.for_preset, "poetry")

    def test_validation(self):
        self.assertRaises(ConfigError, RunConfig, {"keep_k": 0})
        self.assertRaises(ConfigError, RunConfig, {"max_steps": 0})
        self.assertRaises(ConfigError, RunConfig, {"reformation_steps": [1]})
        self.assertRaises(ConfigError, RunConfig, {"reformation_steps": [4]})
        self.assertRaises(ConfigError, RunConfig, {"role_schedule": {"5": ["writer"]}})
        self.assertRaises(ConfigError, RunConfig, {"postprocess": "vote"})
        self.assertRaises(ConfigError, RunConfig, {"ranking": "bogo"})
        self.assertRaises(ConfigError, RunConfig, {"temperature": 3})
        self.assertRaises(ConfigError, RunConfig, {"consensus": {"quorum": "5/3"}})

    def test_load_config(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, "config.json")
            with open(path, "w", encoding="utf-8") as f:
                f.write(json_encode({"preset": "reasoning", "keep_k": 3, "consensus": {"earliest_stop_step": 2}}))

            config = load_config(path, shuffle_seed=9)
            self.assertEqual(config.keep_k, 3)
            self.assertEqual(config.shuffle_seed, 9)
            self.assertEqual(config.consensus_policy.earliest_stop_step, 2)
            self.assertEqual(config.consensus_policy.mode, "exact")

            config = load_config(path, preset="code")
            self.assertEqual(config.max_steps, 6)
            self.assertEqual(config.keep_k, 3)

        self.assertEqual(load_config().max_steps, 4)


class TaskQueryTest(BaseAgentNetTest):
    def test_from_json(self):
        query = TaskQuery.from_json(
            {"query_id": 7, "prompt": "Which?", "gold": "C", "group": "physics", "difficulty": "hard"}
        )

        self.assertEqual(query.query_id, "7")
        self.assertEqual(query.task_kind, "multiple-choice")
        self.assertEqual(query.tag("group"), "physics")
        self.assertEqual(query.tag("difficulty"), "hard")
        self.assertIsNone(query.tag("source"))
        self.assertEqual(TaskQuery.from_json(query.to_json()).to_json(), query.to_json())

        self.assertRaises(ImproperlyConfigured, TaskQuery, "q1", "Which?", "essay")
