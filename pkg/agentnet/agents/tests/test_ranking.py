from agentnet.gateway import LEDGER
from agentnet.network.models import MessageRecord, NodeId, PreconditionError
from agentnet.test import BaseAgentNetTest

from ..extraction import TASK_MULTIPLE_CHOICE
from ..ranking import (
    METHOD_IDENTITY,
    METHOD_LISTWISE,
    METHOD_SLIDING_WINDOW,
    RankingError,
    parse_ranking,
    parse_ranking_pair,
    rank_listwise,
)


class ParseRankingTest(BaseAgentNetTest):
    def test_parse_ranking(self):
        self.assertEqual(parse_ranking("[2] > [1] > [3]", 3), [1, 0, 2])
        self.assertEqual(parse_ranking("[3] > [3] > [1] > [7] > [2]", 3), [2, 0, 1])
        self.assertEqual(parse_ranking("The best is 2, then 3, then 1.", 3), [1, 2, 0])

        self.assertRaises(RankingError, parse_ranking, "[2] > [1]", 3)
        self.assertRaises(RankingError, parse_ranking, "I can't decide", 2)
        self.assertRaises(RankingError, parse_ranking, None, 2)

    def test_parse_ranking_pair(self):
        self.assertFalse(parse_ranking_pair("[1]"))
        self.assertTrue(parse_ranking_pair("Response [2] is better"))
        self.assertTrue(parse_ranking_pair("[3] is invalid, so [2]"))
        self.assertRaises(RankingError, parse_ranking_pair, "neither")


class RankListwiseTest(BaseAgentNetTest):
    def setUp(self):
        super(RankListwiseTest, self).setUp()

        self.candidates = [MessageRecord(NodeId(1, i), "I think (%s)." % a, a) for i, a in zip(range(1, 5), "ABAC")]

    def rank(self, ranker, k=2, seed=3, method=METHOD_LISTWISE):
        return rank_listwise(ranker, "Which?", self.candidates, k, seed, TASK_MULTIPLE_CHOICE, "q1", method=method)

    def test_majority_ranker(self):
        for seed in range(10):
            outcome = self.rank(self.create_ranker(), seed=seed)

            self.assertEqual(outcome.survivors, [1, 3])
            self.assertEqual(outcome.order, [1, 3, 2, 4])
            self.assertEqual(outcome.method, METHOD_LISTWISE)
            self.assertEqual(outcome.ranker_calls, 1)
            self.assertEqual(sorted(outcome.slot_map), [NodeId(1, i) for i in range(1, 5)])

        self.assertEqual(LEDGER.total_calls, 10)
        self.assertEqual(LEDGER.per_agent_calls[0], 10)

    def test_reply_refers_to_display_slots(self):
        outcome = self.rank(self.create_ranker("reply", "[3] > [1] > [4] > [2]"))

        shown = [n.agent_id for n in outcome.slot_map]
        self.assertEqual(outcome.survivors, [shown[2], shown[0]])
        self.assertEqual(outcome.order, [shown[2], shown[0], shown[3], shown[1]])

    def test_sliding_window(self):
        # the ranker always prefers the first response shown, so nothing moves
        outcome = self.rank(self.create_ranker("reply", "[1]"), method=METHOD_SLIDING_WINDOW)

        shown = [n.agent_id for n in outcome.slot_map]
        self.assertEqual(outcome.method, METHOD_SLIDING_WINDOW)
        self.assertEqual(outcome.survivors, shown[:2])
        self.assertEqual(outcome.ranker_calls, 5)  # 3 comparisons to bubble up the first, 2 for the second

        # and when it always prefers the second the bottom response rises to the top
        outcome = self.rank(self.create_ranker("reply", "[2]"), k=1, method=METHOD_SLIDING_WINDOW)
        self.assertEqual(outcome.survivors, [outcome.slot_map[-1].agent_id])
        self.assertEqual(outcome.ranker_calls, 3)

    def test_fallbacks(self):
        # the listwise reply is unusable, and so is every pairwise reply
        outcome = self.rank(self.create_ranker("reply", "They are all great"))

        self.assertEqual(outcome.method, METHOD_IDENTITY)
        self.assertEqual(outcome.survivors, [1, 2])
        self.assertEqual(outcome.order, [1, 2, 3, 4])
        self.assertEqual(outcome.ranker_calls, 2)
        self.assertEqual(LEDGER.total_calls, 2)

        # only the listwise reply is unusable: [2] parses as a pairwise preference
        outcome = self.rank(self.create_ranker("reply", "[2]"), k=1)
        self.assertEqual(outcome.method, METHOD_SLIDING_WINDOW)
        self.assertEqual(outcome.survivors, [outcome.slot_map[-1].agent_id])
        self.assertEqual(outcome.ranker_calls, 4)

    def test_preconditions(self):
        self.assertRaises(PreconditionError, self.rank, self.create_ranker(), k=5)
        self.assertRaises(PreconditionError, self.rank, self.create_ranker(), k=0)
        self.assertEqual(LEDGER.total_calls, 0)

        outcome = self.rank(self.create_ranker(), k=4)
        self.assertEqual(sorted(outcome.survivors), [1, 2, 3, 4])
