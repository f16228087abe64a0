import os
from fractions import Fraction

from confmodel.errors import ConfigError
from django.conf import settings

from agentnet.agents.extraction import NO_ANSWER
from agentnet.test import BaseAgentNetTest
from agentnet.utils import json_decode

from .bleu import ConsistencyClass, bleu, consistency_classes, largest_class, quorum_size, should_stop
from .models import ConsensusPolicy


def partitions(n, largest=None):
    """
    Yields every partition of n into class sizes, largest first
    """
    largest = largest or n
    if n == 0:
        yield []
        return
    for size in range(min(n, largest), 0, -1):
        for rest in partitions(n - size, size):
            yield [size] + rest


def classes_of(sizes):
    classes, next_id = [], 1
    for n, size in enumerate(sizes):
        classes.append(ConsistencyClass("answer-%d" % n, tuple(range(next_id, next_id + size))))
        next_id += size
    return classes


class BleuTest(BaseAgentNetTest):
    def test_bleu(self):
        self.assertEqual(bleu("a b c d e", "a b c d f"), 0.6687)
        self.assertEqual(bleu("same words here", "same words here"), 1.0)
        self.assertEqual(bleu("", ""), 1.0)
        self.assertEqual(bleu("", "a b"), 0.0)
        self.assertEqual(bleu("a b", ""), 0.0)

        # the brevity penalty makes it asymmetric
        self.assertEqual(bleu("a b c d e", "a b c d e f"), 0.8187)
        self.assertEqual(bleu("a b c d e f", "a b c d e"), 0.7598)

    def test_golden_scores(self):
        with open(os.path.join(settings.TESTFILES_DIR, "bleu_golden.jsonl"), "r", encoding="utf-8") as f:
            golden = [json_decode(line) for line in f if line.strip()]

        self.assertEqual(len(golden), 50)
        for case in golden:
            self.assertAlmostEqual(
                bleu(case["candidate"], case["reference"]),
                case["score"],
                delta=0.00011,
                msg="for %r vs %r" % (case["candidate"], case["reference"]),
            )


class ConsistencyClassesTest(BaseAgentNetTest):
    def test_exact(self):
        answers = [(3, "A"), (1, "A"), (5, NO_ANSWER), (2, "B"), (4, NO_ANSWER)]
        classes = consistency_classes(answers)

        self.assertEqual(
            classes,
            [
                ConsistencyClass("A", (1, 3)),
                ConsistencyClass("B", (2,)),
                ConsistencyClass(NO_ANSWER, (4,)),
                ConsistencyClass(NO_ANSWER, (5,)),
            ],
        )
        self.assertEqual([c.size for c in classes], [2, 1, 1, 1])
        self.assertEqual(consistency_classes(list(reversed(answers))), classes)
        self.assertEqual(consistency_classes([]), [])

        # exact means exact
        self.assertEqual(len(consistency_classes([(1, "x = 1"), (2, "x=1")])), 2)

    def test_bleu(self):
        close = ConsensusPolicy({"mode": "bleu", "bleu_threshold": 0.8})
        strict = ConsensusPolicy({"mode": "bleu", "bleu_threshold": 0.85})
        answers = [(1, "a b c d e f"), (2, "a b c d e"), (3, "x y z")]

        # either direction counts
        self.assertEqual([c.members for c in consistency_classes(answers, close)], [(1, 2), (3,)])
        self.assertEqual([c.members for c in consistency_classes(answers, strict)], [(1,), (2,), (3,)])

        # answers are compared against the founder of each class, not every member
        chain = [(1, "a b c d e f g h"), (2, "a b c d e f g"), (3, "a b c d e f")]
        policy = ConsensusPolicy({"mode": "bleu", "bleu_threshold": 0.84})
        self.assertEqual(bleu("a b c d e f g", "a b c d e f g h"), 0.8669)
        self.assertEqual(bleu("a b c d e f", "a b c d e f g"), 0.8465)
        self.assertEqual([c.members for c in consistency_classes(chain, policy)], [(1, 2), (3,)])

        self.assertEqual(len(consistency_classes([(1, NO_ANSWER), (2, NO_ANSWER)], close)), 2)

    def test_largest_class(self):
        classes = [ConsistencyClass("B", (2, 4)), ConsistencyClass("A", (1, 3)), ConsistencyClass("C", (5,))]
        self.assertEqual(largest_class(classes).answer, "A")
        self.assertEqual(largest_class(classes[1:]).answer, "A")
        self.assertEqual(largest_class([ConsistencyClass("C", (5,)), ConsistencyClass("D", (6, 7))]).answer, "D")
        self.assertIsNone(largest_class([]))


class QuorumTest(BaseAgentNetTest):
    def test_quorum_size(self):
        two_thirds = Fraction(2, 3)
        expected = {1: 1, 2: 2, 3: 2, 4: 3, 5: 4, 6: 4, 7: 5, 8: 6, 9: 6, 10: 7}
        for active, size in expected.items():
            self.assertEqual(quorum_size(active, two_thirds), size, "for %d active agents" % active)

        self.assertEqual(quorum_size(4, Fraction(1, 2)), 2)
        self.assertEqual(quorum_size(5, Fraction(1, 2)), 3)
        self.assertEqual(quorum_size(3, Fraction(1)), 3)

    def test_should_stop_over_every_partition(self):
        policy = ConsensusPolicy({})

        for active in range(1, 11):
            quorum = quorum_size(active, Fraction(2, 3))
            for sizes in partitions(active):
                self.assertEqual(
                    should_stop(classes_of(sizes), active, 1, policy),
                    sizes[0] >= quorum,
                    "for classes %s of %d active agents" % (sizes, active),
                )

    def test_should_stop(self):
        classes = classes_of([3, 1])
        self.assertTrue(should_stop(classes, 4, 1))
        self.assertFalse(should_stop(classes_of([2, 2]), 4, 1))

        late = ConsensusPolicy({"earliest_stop_step": 3})
        self.assertFalse(should_stop(classes, 4, 2, late))
        self.assertTrue(should_stop(classes, 4, 3, late))

        self.assertFalse(should_stop(classes, 4, 4, ConsensusPolicy({"enabled": False})))
        self.assertFalse(should_stop([], 0, 2))

        unanimous = ConsensusPolicy({"quorum": "1"})
        self.assertFalse(should_stop(classes, 4, 1, unanimous))
        self.assertTrue(should_stop(classes_of([4]), 4, 1, unanimous))


class ConsensusPolicyTest(BaseAgentNetTest):
    def test_policy(self):
        policy = ConsensusPolicy({})
        self.assertEqual(policy.mode, "exact")
        self.assertEqual(policy.quorum_fraction, Fraction(2, 3))
        self.assertEqual(
            policy.to_json(),
            {"mode": "exact", "bleu_threshold": 0.9, "quorum": "2/3", "earliest_stop_step": 1, "enabled": True},
        )

        self.assertEqual(ConsensusPolicy({"quorum": "0.5"}).quorum_fraction, Fraction(1, 2))

        self.assertRaises(ConfigError, ConsensusPolicy, {"mode": "vibes"})
        self.assertRaises(ConfigError, ConsensusPolicy, {"quorum": "3/2"})
        self.assertRaises(ConfigError, ConsensusPolicy, {"quorum": "most"})
        self.assertRaises(ConfigError, ConsensusPolicy, {"quorum": "1/0"})
        self.assertRaises(ConfigError, ConsensusPolicy, {"bleu_threshold": 0})
        self.assertRaises(ConfigError, ConsensusPolicy, {"earliest_stop_step": 0})
