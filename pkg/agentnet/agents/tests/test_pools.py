import os
import tempfile

from django.conf import settings
from django.core.exceptions import ImproperlyConfigured

from agentnet.network.models import AgentSpec
from agentnet.test import BaseAgentNetTest
from agentnet.utils import json_encode, read_json

from ..pools import load_pool, write_team


class PoolsTest(BaseAgentNetTest):
    def setUp(self):
        super(PoolsTest, self).setUp()

        self.directory = tempfile.TemporaryDirectory()
        self.addCleanup(self.directory.cleanup)

    def write(self, name, content):
        path = os.path.join(self.directory.name, name)
        with open(path, "w", encoding="utf-8") as f:
            f.write(content if isinstance(content, str) else json_encode(content))
        return path

    def test_load_pool(self):
        pool, ranker = load_pool(os.path.join(settings.TESTFILES_DIR, "pool.json"))

        self.assertEqual([a.agent_id for a in pool], [1, 2, 3, 4])
        self.assertEqual(pool[0].display_name, "Economist")
        self.assertEqual(pool[0].expertise, ("economics",))
        self.assertEqual(ranker.agent_id, AgentSpec.RANKER_ID)
        self.assertFalse(ranker.rater)

    def test_role_prompt_file(self):
        self.write("physicist.txt", "You are a physicist.\n")
        path = self.write(
            "pool.json",
            {
                "agents": [
                    {"agent_id": 1, "role_prompt_file": "physicist.txt"},
                    {"agent_id": 2, "role_prompt": "You are a chemist.", "backend": "scripted"},
                ],
                "ranker": {"agent_id": 9, "role_prompt": "You rank.", "rater": False},
            },
        )
        pool, ranker = load_pool(path)

        self.assertEqual(pool[0].role_prompt, "You are a physicist.")
        self.assertEqual(pool[1].backend, "scripted")
        self.assertEqual(ranker.agent_id, 0)

        # plain lists of agents are pools without a ranker
        pool, ranker = load_pool(self.write("list.json", [{"agent_id": 1}]))
        self.assertEqual(len(pool), 1)
        self.assertIsNone(ranker)

    def test_invalid_pools(self):
        self.assertRaises(ImproperlyConfigured, load_pool, self.write("gap.json", [{"agent_id": 1}, {"agent_id": 3}]))
        self.assertRaises(ImproperlyConfigured, load_pool, self.write("empty.json", {"agents": []}))
        self.assertRaises(ValueError, load_pool, self.write("broken.json", "{not json"))
        self.assertRaises(OSError, load_pool, os.path.join(self.directory.name, "missing.json"))

    def test_write_team(self):
        pool = [self.create_agent(i, expertise=("e%d" % i,)) for i in range(1, 6)]
        path = os.path.join(self.directory.name, "teams", "team-all.json")

        team = write_team(path, pool, self.create_ranker(), "all", [4, 2], {2: 0.75, 4: 1.25})
        self.assertEqual([a.agent_id for a in team], [1, 2])
        self.assertEqual([a.expertise for a in team], [("e4",), ("e2",)])

        doc = read_json(path)
        self.assertEqual(doc["schema_version"], 1)
        self.assertEqual(doc["kind"], "team")
        self.assertEqual(doc["source_agent_ids"], [4, 2])
        self.assertEqual(doc["importance"], {"2": 0.75, "4": 1.25})

        loaded, ranker = load_pool(path)
        self.assertEqual(loaded, team)
        self.assertEqual(ranker.agent_id, 0)

        self.assertRaises(ImproperlyConfigured, write_team, path, pool, None, "all", [6])
