import os
import tempfile
from enum import Enum
from fractions import Fraction

from agentnet.network.models import NodeId
from agentnet.test import BaseAgentNetTest

from . import atomic_write, derive_seed, json_decode, json_encode, normalize, read_json, truncate


class UtilsTest(BaseAgentNetTest):
    def test_json_encode(self):
        class Mode(Enum):
            exact = 1

        self.assertEqual(json_encode({"mode": Mode.exact}), '{"mode": "exact"}')
        self.assertEqual(json_encode({"quorum": Fraction(2, 3)}), '{"quorum": "2/3"}')
        self.assertEqual(json_encode({"ids": {3, 1}}), '{"ids": [1, 3]}')
        self.assertEqual(json_encode(NodeId(2, 1)), "[2, 1]")
        self.assertEqual(json_encode({"b": 1, "a": 2}, pretty=True), '{\n  "a": 2,\n  "b": 1\n}')

        self.assertEqual(json_decode(b'{"a": [1, 2]}'), {"a": [1, 2]})

    def test_normalize(self):
        self.assertEqual(normalize("Mary  had\ta little lamb"), "mary had a little lamb")
        self.assertEqual(normalize("Gar\u00e7on"), "garc\u0327on")  # decomposed

    def test_truncate(self):
        self.assertEqual(truncate("Hello World", 8), "Hello...")
        self.assertEqual(truncate("Hello World", 8, suffix="_"), "Hello W_")
        self.assertEqual(truncate("Hello World", 98), "Hello World")

    def test_derive_seed(self):
        seed = derive_seed(7, "q1", 2, 3)
        self.assertEqual(seed, derive_seed(7, "q1", 2, 3))
        self.assertNotEqual(seed, derive_seed(7, "q1", 3, 2))
        self.assertNotEqual(seed, derive_seed(8, "q1", 2, 3))
        self.assertTrue(0 <= seed < 2 ** 64)

    def test_atomic_write(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, "nested", "doc.json")
            atomic_write(path, json_encode({"a": 1}))
            atomic_write(path, json_encode({"a": 2}))

            self.assertEqual(read_json(path), {"a": 2})
            self.assertEqual(os.listdir(os.path.dirname(path)), ["doc.json"])
