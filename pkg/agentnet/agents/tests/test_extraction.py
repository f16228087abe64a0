from agentnet.network.models import NodeId
from agentnet.test import BaseAgentNetTest

from ..extraction import (
    NO_ANSWER,
    TASK_ACTION,
    TASK_MULTIPLE_CHOICE,
    TASK_OPEN_ENDED,
    RatingParseError,
    extract_answer,
    extract_ratings,
    fenced_blocks,
)


class ExtractAnswerTest(BaseAgentNetTest):
    def test_multiple_choice(self):
        self.assertEqual(extract_answer("The answer is (B).", TASK_MULTIPLE_CHOICE), "B")
        self.assertEqual(extract_answer("Not (A), I'd say (C", TASK_MULTIPLE_CHOICE), "C")  # last wins
        self.assertEqual(extract_answer("(Because it's faster", TASK_MULTIPLE_CHOICE), NO_ANSWER)
        self.assertEqual(extract_answer("(D2) is a part number", TASK_MULTIPLE_CHOICE), NO_ANSWER)
        self.assertEqual(extract_answer("(E)", TASK_MULTIPLE_CHOICE), NO_ANSWER)
        self.assertEqual(extract_answer("", TASK_MULTIPLE_CHOICE), NO_ANSWER)
        self.assertEqual(extract_answer(None, TASK_MULTIPLE_CHOICE), NO_ANSWER)

    def test_open_ended(self):
        text = "Let me write it.\n```python\ndef add(a, b):\n    return a + b\n```\nDone."
        self.assertEqual(extract_answer(text, TASK_OPEN_ENDED), "def add(a, b):\n    return a + b")
        self.assertEqual(extract_answer("```\n1\n```\n```\n  42  \n```", TASK_OPEN_ENDED), "42")
        self.assertEqual(extract_answer("  The total is \\boxed{12}. ", TASK_OPEN_ENDED), "The total is \\boxed{12}.")

    def test_action(self):
        text = "Thought: the shoes are on the first page.\nAction: click[Buy Now]"
        self.assertEqual(extract_answer(text, TASK_ACTION), "click[Buy Now]")
        self.assertEqual(extract_answer("search[red shoes]\nclick[Item 3]", TASK_ACTION), "click[Item 3]")
        self.assertEqual(extract_answer("I would click buy now", TASK_ACTION), NO_ANSWER)

        self.assertRaises(ValueError, extract_answer, "(A)", "essay")

    def test_fenced_blocks(self):
        text = "```python\nx = 1\n```\n```json\n{}\n```\n```Python\ny = 2\n```"
        self.assertEqual(fenced_blocks(text), ["x = 1", "{}", "y = 2"])
        self.assertEqual(fenced_blocks(text, "python"), ["x = 1", "y = 2"])
        self.assertEqual(fenced_blocks("no code here"), [])
        self.assertEqual(fenced_blocks(None), [])


class ExtractRatingsTest(BaseAgentNetTest):
    def test_extract_ratings(self):
        slots = [NodeId(1, 3), NodeId(1, 1), NodeId(1, 2)]

        self.assertEqual(
            extract_ratings("I pick (A).\n[[1, 5, 2]]", 3, slots),
            [(NodeId(1, 1), 5), (NodeId(1, 2), 2), (NodeId(1, 3), 1)],
        )

        # last group wins, scores are clamped
        self.assertEqual(
            extract_ratings("Like [[1, 1, 1]] but rather [[0, 7, 2.5]]", 3, slots),
            [(NodeId(1, 1), 5), (NodeId(1, 2), 2.5), (NodeId(1, 3), 1)],
        )

        self.assertEqual(
            extract_ratings("[[7, 0]]", 2, [NodeId(1, 1), NodeId(1, 2)]), [(NodeId(1, 1), 5), (NodeId(1, 2), 1)]
        )
        self.assertEqual(extract_ratings("[[9.5]]", 1, [NodeId(1, 1)]), [(NodeId(1, 1), 5)])

        self.assertRaises(RatingParseError, extract_ratings, "(A) [[1, 5]]", 3, slots)
        self.assertRaises(RatingParseError, extract_ratings, "(A) [[1, 5, 2, 4]]", 3, slots)
        self.assertRaises(RatingParseError, extract_ratings, "(A) 1, 5, 2", 3, slots)
        self.assertRaises(RatingParseError, extract_ratings, None, 3, slots)
        self.assertRaises(ValueError, extract_ratings, "[[]]", 0, [])
