from unittest import mock

from django.core.exceptions import ImproperlyConfigured

from agentnet.gateway import LEDGER, CallLedger, GatewayError
from agentnet.network.models import AgentSpec, MessageRecord, NodeId
from agentnet.test import BaseAgentNetTest, fixed_answers, scripted_agent

from ..backends import AgentFailure, Decoding, get_backend
from ..backends.scripted import UNSURE_TEXT, ScriptedBehavior, format_answer, observed_majority
from ..backends.tools import ToolBackend, check_syntax, run_unit_tests, syntax_check_tool
from ..extraction import NO_ANSWER, TASK_ACTION, TASK_MULTIPLE_CHOICE, TASK_OPEN_ENDED
from ..prompts import assemble_prompt
from ..runtime import ExecutionContext, execute_agent

DECODING = Decoding(0.0, 2048)


class ScriptedBehaviorTest(BaseAgentNetTest):
    def test_lookup(self):
        behavior = ScriptedBehavior(
            answer_table={
                "q1": {"1": {"*": "A"}, "*": {"B": "B", "*": "C"}},
                "*": {"*": {"*": "D"}},
            },
            default_answer="A",
        )

        self.assertEqual(behavior.lookup("q1", 1, None), "A")
        self.assertEqual(behavior.lookup("q1", 1, "B"), "A")
        self.assertEqual(behavior.lookup("q1", 2, "B"), "B")
        self.assertEqual(behavior.lookup("q1", 2, "A"), "C")
        self.assertEqual(behavior.lookup("q1", 3, None), "C")
        self.assertEqual(behavior.lookup("q2", 1, None), "D")

        self.assertEqual(ScriptedBehavior(default_answer="B").lookup("q1", 1, None), "B")
        self.assertIsNone(ScriptedBehavior().lookup("q1", 1, None))

        self.assertRaises(ValueError, ScriptedBehavior, rating_policy="vibes")

    def test_observed_majority(self):
        self.assertEqual(observed_majority(["A", "A", "B"]), "A")
        self.assertIsNone(observed_majority(["A", "B"]))
        self.assertIsNone(observed_majority(["A", "A", "B", "B"]))
        self.assertIsNone(observed_majority([NO_ANSWER, NO_ANSWER, "A"]))
        self.assertIsNone(observed_majority([]))

    def test_format_answer(self):
        self.assertEqual(format_answer(None, TASK_MULTIPLE_CHOICE), UNSURE_TEXT)
        self.assertEqual(format_answer("B", TASK_MULTIPLE_CHOICE), "Having considered the options, the answer is (B).")
        self.assertTrue(format_answer("click[Buy]", TASK_ACTION).endswith("\nAction: click[Buy]"))
        self.assertEqual(format_answer("x = 1", TASK_OPEN_ENDED, "python"), "Here is my answer:\n```python\nx = 1\n```")


class ExecuteAgentTest(BaseAgentNetTest):
    def setUp(self):
        super(ExecuteAgentTest, self).setUp()

        self.peers = [
            MessageRecord(NodeId(1, 1), "Surely (A).", "A"),
            MessageRecord(NodeId(1, 2), "Surely (B).", "B"),
            MessageRecord(NodeId(1, 3), "Surely (A).", "A"),
        ]

    def execute(self, spec, peers=(), step=2, rate_self=True, task_kind=TASK_MULTIPLE_CHOICE, ledger=None, **kwargs):
        bundle = assemble_prompt(spec, "Which?", peers, 11, task_kind, rate_self)
        context = ExecutionContext("q1", task_kind, NodeId(step, spec.agent_id), ledger=ledger, **kwargs)
        return execute_agent(spec, bundle, DECODING, context)

    def test_scripted(self):
        record = self.execute(self.create_agent(2, "A"), self.peers)

        self.assertEqual(record.node, NodeId(2, 2))
        self.assertEqual(record.answer, "A")
        self.assertEqual(record.call_cost, 1)
        self.assertEqual(record.ratings, [(NodeId(1, 1), 5), (NodeId(1, 2), 1), (NodeId(1, 3), 5)])
        self.assertEqual(
            record.normalized_weights, [(NodeId(1, 1), 5 / 11.0), (NodeId(1, 2), 1 / 11.0), (NodeId(1, 3), 5 / 11.0)]
        )
        self.assertFalse(record.rating_parse_failed)
        self.assertEqual(LEDGER.total_calls, 1)
        self.assertEqual(LEDGER.per_agent_calls[2], 1)

        # first step has nothing to rate
        record = self.execute(self.create_agent(2, "C"), step=1)
        self.assertEqual(record.answer, "C")
        self.assertIsNone(record.ratings)
        self.assertIsNone(record.normalized_weights)

    def test_rate_self(self):
        record = self.execute(self.create_agent(2, "B"), self.peers, rate_self=False)

        self.assertEqual(record.ratings, [(NodeId(1, 1), 1), (NodeId(1, 3), 1)])
        self.assertEqual(record.normalized_weights, [(NodeId(1, 1), 0.5), (NodeId(1, 2), 0.0), (NodeId(1, 3), 0.5)])

    def test_rating_policies(self):
        fixed = self.create_agent(2, "A", rating_policy="fixed", fixed_scores={"1": 2, "2": 4})
        record = self.execute(fixed, self.peers)
        self.assertEqual(record.ratings, [(NodeId(1, 1), 2), (NodeId(1, 2), 4), (NodeId(1, 3), 3)])

        uniform = self.create_agent(2, "A", rating_policy="uniform")
        record = self.execute(uniform, self.peers)
        self.assertEqual([w for _, w in record.normalized_weights], [1 / 3.0] * 3)

        noisy = self.create_agent(2, "A", rating_policy="random", seed=5)
        first = self.execute(noisy, self.peers)
        second = self.execute(noisy, list(reversed(self.peers)))
        self.assertEqual(first.ratings, second.ratings)
        for _, score in first.ratings:
            self.assertIn(score, range(1, 6))

    def test_scripted_failure(self):
        spec = self.create_agent(3, "A", fail_steps=[2])

        with self.assertRaises(AgentFailure) as context:
            self.execute(spec, self.peers)

        self.assertEqual(context.exception.agent_id, 3)
        self.assertEqual(LEDGER.total_calls, 1)
        self.assertEqual(LEDGER.logical_calls, 0)

    def test_scoped_ledger(self):
        ledger = CallLedger(parent=LEDGER)
        self.execute(self.create_agent(1, "A"), step=1, ledger=ledger)

        self.assertEqual(ledger.total_calls, 1)
        self.assertEqual(LEDGER.total_calls, 1)

    def test_llm(self):
        spec = AgentSpec(2, "Physicist", "You are a physicist.")
        gateway = mock.Mock()
        gateway.chat.return_value = "It has to be (C).\n[[5, 5]]"

        record = self.execute(spec, self.peers, gateway=gateway)

        self.assertEqual(record.answer, "C")
        self.assertEqual(record.call_cost, 1)
        self.assertTrue(record.rating_parse_failed)  # three scores were requested
        self.assertEqual(record.ratings, [(NodeId(1, 1), 3), (NodeId(1, 2), 3), (NodeId(1, 3), 3)])
        self.assertEqual([w for _, w in record.normalized_weights], [1 / 3.0] * 3)

        args, kwargs = gateway.chat.call_args
        self.assertEqual(args[0], "You are a physicist.")
        self.assertIn("These are the recent responses from other agents", args[1])
        self.assertEqual(kwargs["agent_id"], 2)
        self.assertEqual(kwargs["query_id"], "q1")

        gateway.chat.side_effect = GatewayError("Request failed after 4 attempts", 503)
        self.assertRaises(AgentFailure, self.execute, spec, self.peers, gateway=gateway)

    def test_unit_tester(self):
        spec = scripted_agent(
            1, fixed_answers("assert add(1, 2) == 3"), tool_bindings=("unit-tester",), fence="python", rater=False
        )
        record = self.execute(spec, step=1, task_kind=TASK_OPEN_ENDED)

        self.assertEqual(record.answer, "assert add(1, 2) == 3")
        self.assertEqual(record.unit_tests, ("assert add(1, 2) == 3",))

    def test_get_backend(self):
        self.assertIsInstance(get_backend("tool"), ToolBackend)
        self.assertIs(get_backend("tool"), get_backend("tool"))
        self.assertRaises(ImproperlyConfigured, get_backend, "carrier-pigeon")


class ToolsTest(BaseAgentNetTest):
    def setUp(self):
        super(ToolsTest, self).setUp()

        self.peers = [
            MessageRecord(NodeId(1, 1), "```python\ndef add(a, b):\n    return a + b\n```", "def add(a, b): ..."),
            MessageRecord(NodeId(1, 2), "```python\ndef add(a, b)\n    return a + b\n```", "def add(a, b) ..."),
        ]

    def test_check_syntax(self):
        self.assertIsNone(check_syntax("x = 1"))
        self.assertIn("SyntaxError", check_syntax("def f(:\n  pass"))
        self.assertIn("(line 1)", check_syntax("x = = 1"))

    def test_syntax_check_tool(self):
        spec = AgentSpec(3, "Checker", backend=AgentSpec.BACKEND_TOOL, backend_params={"tool": "syntax-check"})
        bundle = assemble_prompt(spec, "Write add", self.peers, 0, TASK_OPEN_ENDED)

        verdicts = syntax_check_tool(bundle).split("\n")
        self.assertEqual(len(verdicts), 2)
        self.assertEqual(sum(1 for v in verdicts if v.endswith("no syntax errors")), 1)

        context = ExecutionContext("q1", TASK_OPEN_ENDED, NodeId(2, 3))
        record = execute_agent(spec, bundle, DECODING, context)
        self.assertEqual(record.answer, NO_ANSWER)
        self.assertEqual(record.call_cost, 0)
        self.assertIsNone(record.ratings)
        self.assertFalse(record.degenerate)
        self.assertEqual(LEDGER.total_calls, 0)

        # counted tools cost a call
        spec.backend_params["count_calls"] = True
        record = execute_agent(spec, bundle, DECODING, context)
        self.assertEqual(record.call_cost, 1)
        self.assertEqual(LEDGER.total_calls, 1)

        # nothing to check gives a degenerate record
        bundle = assemble_prompt(spec, "Write add", [MessageRecord(NodeId(1, 1), "no code", "no code")], 0)
        record = execute_agent(spec, bundle, DECODING, context)
        self.assertTrue(record.degenerate)
        self.assertEqual(record.call_cost, 0)

        unknown = AgentSpec(3, "Oracle", backend=AgentSpec.BACKEND_TOOL, backend_params={"tool": "oracle"})
        self.assertRaises(AgentFailure, execute_agent, unknown, bundle, DECODING, context)

    def test_run_unit_tests(self):
        code = "def add(a, b):\n    return a + b"

        self.assertEqual(run_unit_tests(code, ["assert add(1, 2) == 3", "assert add(2, 2) == 4"]), 2)
        self.assertEqual(run_unit_tests(code, ["assert add(1, 2) == 3", "assert add(1, 1) == 3"]), 1)
        self.assertEqual(run_unit_tests("def add(a, b)", ["assert add(1, 2) == 3"]), 0)
        self.assertEqual(run_unit_tests("while True:\n    pass", ["assert True"], timeout=1), 0)
        self.assertEqual(run_unit_tests(code, []), 0)
