import os
import tempfile

from django.core.exceptions import ImproperlyConfigured

from agentnet.inference.models import RunConfig, TaskResult
from agentnet.test import BaseAgentNetTest, scripted_agent, scripted_ranker

from .models import (
    AgentSpec,
    MessageRecord,
    NodeId,
    NodeLookupError,
    PreconditionError,
    ReformationError,
    TffnGraph,
    apply_reformation,
    build_initial_graph,
    predecessors,
    successors,
    validate_pool,
)
from .transcripts import SchemaVersionError, list_transcripts, read_transcript, write_transcript


class AgentSpecTest(BaseAgentNetTest):
    def test_from_json(self):
        spec = AgentSpec.from_json({"agent_id": 3, "role_prompt": "You are a physicist.", "expertise": ["physics"]})
        self.assertEqual(spec.agent_id, 3)
        self.assertEqual(spec.display_name, "Agent 3")
        self.assertEqual(spec.backend, AgentSpec.BACKEND_LLM)
        self.assertTrue(spec.rater)
        self.assertEqual(spec.expertise, ("physics",))
        self.assertEqual(AgentSpec.from_json(spec.to_json()), spec)

        # tools never rate
        tool = AgentSpec.from_json({"agent_id": 1, "backend": "tool", "rater": True})
        self.assertTrue(tool.is_tool)
        self.assertFalse(tool.rater)

        self.assertRaises(ImproperlyConfigured, AgentSpec.from_json, {"agent_id": 1, "backend": "carrier-pigeon"})

    def test_renumbered(self):
        spec = scripted_agent(5, role="writer", expertise=("math",))
        copy = spec.renumbered(1)
        self.assertEqual(copy.agent_id, 1)
        self.assertEqual(copy.role, "writer")
        self.assertEqual(copy.expertise, ("math",))
        self.assertEqual(spec.agent_id, 5)

    def test_validate_pool(self):
        validate_pool([scripted_agent(2), scripted_agent(1)])

        self.assertRaises(ImproperlyConfigured, validate_pool, [])
        self.assertRaises(ImproperlyConfigured, validate_pool, [scripted_agent(1), scripted_agent(3)])
        self.assertRaises(ImproperlyConfigured, validate_pool, [scripted_agent(1), scripted_agent(1)])


class GraphTest(BaseAgentNetTest):
    def setUp(self):
        super(GraphTest, self).setUp()

        self.pool = [scripted_agent(i) for i in range(1, 5)]

    def test_build_initial_graph(self):
        graph = build_initial_graph(self.pool, 3)

        self.assertEqual(graph.agent_ids, (1, 2, 3, 4))
        self.assertEqual(len(graph.layers), 3)
        self.assertEqual(graph.layer(2), [(NodeId(2, i), True) for i in range(1, 5)])
        self.assertNotIn(1, graph.edges)
        self.assertEqual(graph.edge_count(2), 16)
        self.assertEqual(graph.edge_count(3), 16)
        self.assertEqual(graph.terminal_step, 3)

        self.assertEqual(predecessors(graph, NodeId(1, 1)), [])
        self.assertEqual(predecessors(graph, NodeId(2, 3)), [NodeId(1, i) for i in range(1, 5)])
        self.assertEqual(successors(graph, NodeId(3, 1)), [])
        self.assertEqual(successors(graph, NodeId(1, 2)), [NodeId(2, i) for i in range(1, 5)])

        self.assertRaises(NodeLookupError, predecessors, graph, NodeId(4, 1))
        self.assertRaises(NodeLookupError, successors, graph, NodeId(1, 5))
        self.assertRaises(ImproperlyConfigured, build_initial_graph, [], 3)
        self.assertRaises(ImproperlyConfigured, build_initial_graph, self.pool, 0)

    def test_larger_pool(self):
        graph = build_initial_graph([scripted_agent(i) for i in range(1, 8)], 4)

        self.assertEqual(sum(len(layer) for layer in graph.layers), 28)
        self.assertEqual(sum(graph.edge_count(t) for t in range(1, 5)), 3 * 49)
        self.assertEqual(len(successors(graph, NodeId(2, 7))), 7)

    def test_reformation_is_idempotent(self):
        graph = build_initial_graph(self.pool, 4)
        reformed = apply_reformation(graph, 1, {2, 3})

        self.assertEqual(apply_reformation(reformed, 1, {2, 3}).to_json(), reformed.to_json())

    def test_single_step(self):
        graph = build_initial_graph(self.pool[:1], 1)
        self.assertEqual(graph.edges, {})
        self.assertEqual(graph.layer(1), [(NodeId(1, 1), True)])

    def test_apply_reformation(self):
        graph = build_initial_graph(self.pool, 4)
        reformed = apply_reformation(graph, 1, {2, 3})

        # original is untouched
        self.assertEqual(graph.active_agents(2), [1, 2, 3, 4])
        self.assertEqual(graph.edge_count(2), 16)

        self.assertEqual(reformed.active_agents(1), [1, 2, 3, 4])
        self.assertEqual(reformed.active_agents(2), [2, 3])
        self.assertEqual(reformed.active_agents(4), [2, 3])
        self.assertEqual([active for _, active in reformed.layer(2)], [False, True, True, False])
        self.assertEqual(reformed.deactivated_from, {1: 2, 4: 2})
        self.assertEqual(reformed.copy_forward, {2: frozenset({2, 3})})

        # nodes stay but lose every edge
        self.assertEqual(reformed.edge_count(2), 4)
        self.assertEqual(reformed.edge_count(3), 4)
        self.assertEqual(predecessors(reformed, NodeId(2, 2)), [NodeId(1, 2), NodeId(1, 3)])
        self.assertEqual(successors(reformed, NodeId(1, 1)), [])
        self.assertEqual(predecessors(reformed, NodeId(2, 1)), [])

        # a second reformation can only narrow the team
        again = apply_reformation(reformed, 2, {3}, copy_forward=False)
        self.assertEqual(again.active_agents(3), [3])
        self.assertEqual(again.edge_count(3), 1)
        self.assertEqual(again.edge_count(4), 1)
        self.assertEqual(again.copy_forward, {2: frozenset({2, 3})})

        self.assertRaises(ReformationError, apply_reformation, graph, 1, set())
        self.assertRaises(PreconditionError, apply_reformation, reformed, 2, {1, 2})
        self.assertRaises(PreconditionError, apply_reformation, graph, 4, {1})
        self.assertRaises(PreconditionError, apply_reformation, graph, 0, {1})

    def test_layer_records(self):
        graph = build_initial_graph(self.pool[:3], 2)
        graph.add_record(MessageRecord(NodeId(1, 1), "(A)", "A", call_cost=1))
        graph.add_record(MessageRecord.idle_record(NodeId(1, 2), "<no-answer>"))
        graph.add_record(MessageRecord.failure_record(NodeId(1, 3), "timeout", "<no-answer>"))

        self.assertEqual([r.node.agent_id for r in graph.layer_records(1)], [1, 2, 3])
        self.assertEqual([r.node.agent_id for r in graph.layer_records(1, answering_only=True)], [1])
        self.assertEqual(graph.layer_records(2), [])

        self.assertRaises(NodeLookupError, graph.add_record, MessageRecord(NodeId(3, 1), "", "A"))

    def test_message_record(self):
        record = MessageRecord(NodeId(1, 2), "I say (B).", "B", call_cost=1)
        copy = record.copy_forward(NodeId(2, 2))

        self.assertEqual(copy.node, NodeId(2, 2))
        self.assertEqual(copy.answer, "B")
        self.assertEqual(copy.call_cost, 0)
        self.assertEqual(copy.copied_from, NodeId(1, 2))
        self.assertTrue(copy.is_copy)
        self.assertTrue(copy.is_answering)
        self.assertFalse(record.is_copy)

        failed = MessageRecord.failure_record(NodeId(1, 1), "boom", "<no-answer>")
        self.assertFalse(failed.is_answering)
        self.assertEqual(failed.raw_text, "boom")

    def test_to_json(self):
        graph = self.create_rated_graph([["A", "B", "A"], ["A", "A", "B"]])
        graph = apply_reformation(graph, 1, {1, 3})

        restored = TffnGraph.from_json(graph.to_json())
        self.assertEqual(restored.to_json(), graph.to_json())
        self.assertEqual(restored.active_agents(2), [1, 3])
        self.assertEqual(restored.records[NodeId(2, 1)], graph.records[NodeId(2, 1)])
        self.assertEqual(restored.records[NodeId(2, 1)].normalized_weights[0], (NodeId(1, 1), 1.0 / 3))


class TranscriptsTest(BaseAgentNetTest):
    def test_write_and_read(self):
        pool = [scripted_agent(1), scripted_agent(2)]
        ranker = scripted_ranker()
        config = RunConfig({"max_steps": 2})
        query = self.create_query("q/1", gold="A")
        graph = self.create_rated_graph([["A", "B"], ["A", "A"]])
        result = TaskResult("q/1", "A", 2, 4, graph)

        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, "q1.json")
            write_transcript(path, result, pool, ranker, config, query, {"correct": True})

            doc = read_transcript(path)
            self.assertEqual(doc["schema_version"], 1)
            self.assertEqual(doc["pool"], pool)
            self.assertEqual(doc["ranker"], ranker)
            self.assertEqual(doc["config"]["max_steps"], 2)
            self.assertEqual(doc["query"]["query_id"], "q/1")
            self.assertEqual(doc["result"]["api_calls"], 4)
            self.assertTrue(doc["correct"])
            self.assertEqual(doc["graph"].to_json(), graph.to_json())

            self.assertEqual(list_transcripts(directory), [path])
            self.assertEqual(list_transcripts(os.path.join(directory, "nope")), [])

            with open(path, "r", encoding="utf-8") as f:
                text = f.read()
            with open(path, "w", encoding="utf-8") as f:
                f.write(text.replace('"schema_version": 1', '"schema_version": 99'))

            with self.assertRaises(SchemaVersionError) as context:
                read_transcript(path)

            self.assertIn("transcript/99", str(context.exception))
            self.assertIn("re-running", str(context.exception))
