from agentnet.network.models import MessageRecord, NodeId
from agentnet.test import BaseAgentNetTest, scripted_agent

from ..extraction import TASK_ACTION, TASK_MULTIPLE_CHOICE
from ..prompts import PEERS_HEADER, assemble_prompt, rating_clause


class AssemblePromptTest(BaseAgentNetTest):
    def setUp(self):
        super(AssemblePromptTest, self).setUp()

        self.peers = [MessageRecord(NodeId(1, i), "Agent %d says (%s)." % (i, a), a) for i, a in enumerate("ABAC", 1)]

    def test_first_step(self):
        bundle = assemble_prompt(scripted_agent(2), "What is 2 + 2?", [], 7)

        self.assertEqual(bundle.system_text, "You are agent 2.")
        self.assertEqual(bundle.peer_messages, [])
        self.assertEqual(bundle.slot_map, [])
        self.assertEqual(bundle.rating_targets, [])
        self.assertIsNone(bundle.rating_clause)
        self.assertEqual(bundle.user_text, bundle.instruction_text)
        self.assertIn("What is 2 + 2?", bundle.user_text)
        self.assertIn("in the form (X)", bundle.user_text)

    def test_peers_shuffled(self):
        bundle = assemble_prompt(scripted_agent(2), "Which?", self.peers, 7)

        self.assertEqual(sorted(bundle.slot_map), [NodeId(1, i) for i in range(1, 5)])
        self.assertEqual([s for s, _ in bundle.peer_messages], [1, 2, 3, 4])
        for (_, text), node in zip(bundle.peer_messages, bundle.slot_map):
            self.assertTrue(text.startswith("Agent %d says" % node.agent_id))

        self.assertEqual(bundle.rating_targets, bundle.slot_map)
        self.assertIn("each of the above responses", bundle.rating_clause)
        self.assertIn("Put all 4 scores", bundle.rating_clause)
        self.assertIn(PEERS_HEADER, bundle.user_text)
        self.assertTrue(bundle.user_text.endswith(bundle.rating_clause))

        # same seed gives the same order whatever order the peers come in
        again = assemble_prompt(scripted_agent(2), "Which?", list(reversed(self.peers)), 7)
        self.assertEqual(again.slot_map, bundle.slot_map)

        orders = {tuple(assemble_prompt(scripted_agent(2), "Which?", self.peers, s).slot_map) for s in range(20)}
        self.assertGreater(len(orders), 1)

    def test_rate_self(self):
        bundle = assemble_prompt(scripted_agent(2), "Which?", self.peers, 7, rate_self=False)

        self.assertEqual(len(bundle.slot_map), 4)
        self.assertEqual(sorted(bundle.rating_targets), [NodeId(1, 1), NodeId(1, 3), NodeId(1, 4)])
        self.assertEqual(bundle.rating_targets, [n for n in bundle.slot_map if n.agent_id != 2])

        own_slot = bundle.slot_map.index(NodeId(1, 2)) + 1
        others = [str(s + 1) for s, n in enumerate(bundle.slot_map) if n.agent_id != 2]
        self.assertIn("the responses (%s) in that order" % "), (".join(others), bundle.rating_clause)
        self.assertNotIn("(%d)" % own_slot, bundle.rating_clause)
        self.assertIn("Put all 3 scores", bundle.rating_clause)

    def test_non_rater(self):
        bundle = assemble_prompt(scripted_agent(1, rater=False), "Which?", self.peers, 7)

        self.assertEqual(len(bundle.peer_messages), 4)
        self.assertEqual(bundle.rating_targets, [])
        self.assertIsNone(bundle.rating_clause)

    def test_tools_and_task_kinds(self):
        spec = scripted_agent(1, tool_bindings=("syntax-check",))
        bundle = assemble_prompt(spec, "Buy red shoes", [], 0, task_kind=TASK_ACTION)

        self.assertIn("syntax-check", bundle.system_text)
        self.assertIn("Action: verb[argument]", bundle.user_text)

        bundle = assemble_prompt(spec, "Which?", [], 0, task_kind=TASK_MULTIPLE_CHOICE)
        self.assertIn("Here is the question", bundle.user_text)

    def test_rating_clause(self):
        self.assertIn("each of the above responses", rating_clause([1, 2], 2))
        self.assertIn("Put all 2 scores", rating_clause([1, 2], 2))
        self.assertIn("the responses (1), (3) in that order", rating_clause([1, 3], 3))
        self.assertIn("Put all 2 scores", rating_clause([1, 3], 3))
