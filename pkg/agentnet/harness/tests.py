import os
import tempfile
from io import StringIO
from unittest import mock

from django.conf import settings
from django.core.exceptions import ImproperlyConfigured
from django.core.management import call_command
from django.core.management.base import CommandError

from agentnet.agents.backends.scripted import ScriptedBackend
from agentnet.agents.extraction import NO_ANSWER, TASK_ACTION, TASK_OPEN_ENDED
from agentnet.agents.pools import load_pool
from agentnet.attribution.models import ShapleyError
from agentnet.attribution.shapley import team_of
from agentnet.gateway import LEDGER
from agentnet.inference.engine import run_inference
from agentnet.inference.models import RunConfig
from agentnet.network.transcripts import SchemaVersionError, read_transcript, write_transcript
from agentnet.test import LETTERS, BaseAgentNetTest, make_queries, planted_expert_pool, scripted_agent
from agentnet.utils import json_decode, json_encode, read_json

from .datasets import Dataset, load_dataset
from .grading import accuracy_grader, grade, normalize_final_answer
from .models import RunReport
from .pipeline import attribution_eval, optimize, report, solve

CORRECT_ADD = "def add(a, b):\n    return a + b"
WRONG_ADD = "def add(a, b):\n    return a - b"


class HarnessTest(BaseAgentNetTest):
    def setUp(self):
        super(HarnessTest, self).setUp()

        self.directory = tempfile.TemporaryDirectory()
        self.addCleanup(self.directory.cleanup)

        self.pool_file = os.path.join(settings.TESTFILES_DIR, "pool.json")
        self.dataset_file = os.path.join(settings.TESTFILES_DIR, "dataset.jsonl")

    def path(self, *parts):
        return os.path.join(self.directory.name, *parts)

    def write_dataset(self, name, lines):
        path = self.path(name)
        with open(path, "w", encoding="utf-8") as f:
            for line in lines:
                f.write((line if isinstance(line, str) else json_encode(line)) + "\n")
        return path


class DatasetsTest(HarnessTest):
    def test_load_dataset(self):
        dataset = load_dataset(self.dataset_file)

        self.assertEqual(len(dataset), 6)
        self.assertEqual([q.query_id for q in dataset][:2], ["econ-1", "econ-2"])
        self.assertEqual(dataset.entries[3].gold, "C")
        self.assertIsNone(dataset.sample_fraction)

        groups = dataset.groups("group")
        self.assertEqual(list(groups.keys()), ["economics", "physics"])
        self.assertEqual([q.query_id for q in groups["physics"]], ["phys-1", "phys-2", "phys-3"])

        # unknown tags group everything under None
        self.assertEqual(list(dataset.groups("source").keys()), [None])

    def test_extra_fields_are_tags(self):
        path = self.write_dataset(
            "tagged.jsonl",
            [
                {"query_id": "a", "prompt": "1 + 1?", "task_kind": TASK_OPEN_ENDED, "gold": "2", "source": "gsm"},
                "",
                {"query_id": "b", "prompt": "2 + 2?", "task_kind": TASK_OPEN_ENDED, "gold": "4", "source": "math"},
            ],
        )
        dataset = load_dataset(path)

        self.assertEqual(len(dataset), 2)
        self.assertEqual(dataset.entries[0].tag("source"), "gsm")
        self.assertEqual(list(dataset.groups("source").keys()), ["gsm", "math"])

    def test_sampling(self):
        queries = make_queries(40, seed=3)
        path = self.write_dataset("many.jsonl", [q.to_json() for q in queries])

        half = load_dataset(path, 0.5, seed=1)
        self.assertEqual(len(half), 20)
        self.assertEqual(half.sample_fraction, 0.5)

        # a sample keeps file order and is the same for the same seed
        order = [q.query_id for q in queries]
        self.assertEqual([q.query_id for q in half], sorted(q.query_id for q in half))
        self.assertTrue(all(q.query_id in order for q in half))
        self.assertEqual([q.query_id for q in load_dataset(path, 0.5, seed=1)], [q.query_id for q in half])

        # never sampled down to nothing
        self.assertEqual(len(load_dataset(path, 0.001)), 1)
        self.assertEqual(len(load_dataset(path, 1.0)), 40)

    def test_invalid_datasets(self):
        valid = {"query_id": "a", "prompt": "Which?"}

        self.assertRaises(ImproperlyConfigured, load_dataset, self.write_dataset("dupes.jsonl", [valid, valid]))
        self.assertRaises(ImproperlyConfigured, load_dataset, self.write_dataset("empty.jsonl", []))
        self.assertRaises(ImproperlyConfigured, load_dataset, self.write_dataset("broken.jsonl", ["{not json"]))
        self.assertRaises(ImproperlyConfigured, load_dataset, self.write_dataset("partial.jsonl", [{"query_id": "a"}]))
        self.assertRaises(
            ImproperlyConfigured, load_dataset, self.write_dataset("kind.jsonl", [dict(valid, task_kind="essay")])
        )
        self.assertRaises(ImproperlyConfigured, load_dataset, self.dataset_file, 0)
        self.assertRaises(ImproperlyConfigured, load_dataset, self.dataset_file, 1.5)
        self.assertRaises(OSError, load_dataset, self.path("missing.jsonl"))


class GradingTest(HarnessTest):
    def test_multiple_choice(self):
        query = self.create_query(gold="B")

        self.assertTrue(grade(query, "B"))
        self.assertTrue(grade(query, " b "))
        self.assertFalse(grade(query, "C"))
        self.assertFalse(grade(query, NO_ANSWER))
        self.assertIsNone(grade(self.create_query(), "B"))

    def test_arithmetic(self):
        query = self.create_query(task_kind=TASK_OPEN_ENDED, gold="\\frac{1}{2}")

        self.assertTrue(grade(query, "So the answer is \\boxed{\\frac{1}{2}}"))
        self.assertTrue(grade(query, "$\\frac{1}{2}$."))
        self.assertFalse(grade(query, "\\boxed{\\frac{1}{3}}"))
        self.assertFalse(grade(query, NO_ANSWER))

        self.assertEqual(normalize_final_answer("$42$."), "42")
        self.assertEqual(normalize_final_answer("\\boxed{1} then \\boxed{ 2 }"), "2")
        self.assertEqual(normalize_final_answer(None), "")

    def test_action(self):
        query = self.create_query(task_kind=TASK_ACTION, gold="click[Buy Now]")

        self.assertTrue(grade(query, "click[Buy Now]"))
        self.assertFalse(grade(query, "click[buy now]"))
        self.assertFalse(grade(query, "search[shoes]"))

    def test_unit_tests(self):
        tests = ("assert add(1, 2) == 3", "assert add(0, 0) == 0")
        query = self.create_query(task_kind=TASK_OPEN_ENDED, prompt="Write add(a, b)", tests=tests)

        self.assertTrue(grade(query, CORRECT_ADD))
        self.assertFalse(grade(query, WRONG_ADD))
        self.assertFalse(grade(query, NO_ANSWER))
        self.assertFalse(grade(query, ""))

        self.assertEqual(accuracy_grader(query, CORRECT_ADD), 1.0)
        self.assertEqual(accuracy_grader(query, WRONG_ADD), 0.0)


class RunReportTest(HarnessTest):
    def test_aggregates(self):
        rows = [
            {"query_id": "b", "output": "A", "stop_step": 2, "api_calls": 6, "attempts": 7, "correct": True},
            {"query_id": "a", "output": "B", "stop_step": 1, "api_calls": 4, "attempts": 4, "correct": False},
            {"query_id": "c", "output": "C", "stop_step": 1, "api_calls": 2, "attempts": 2, "correct": None},
            {"query_id": "d", "error": "no answers", "correct": None},
        ]
        run_report = RunReport("solve", rows, {"all": [1, 2]})

        self.assertEqual([r["query_id"] for r in run_report.rows], ["a", "b", "c", "d"])
        self.assertEqual(run_report.accuracy, 0.5)
        self.assertEqual(run_report.mean_api_calls, 4.0)
        self.assertAlmostEqual(run_report.mean_attempts, 13 / 3.0)
        self.assertEqual(run_report.stop_steps, {1: 2, 2: 1})

        doc = run_report.to_json()
        self.assertEqual(doc["kind"], "run-report")
        self.assertEqual(doc["stop_steps"], {"1": 2, "2": 1})
        self.assertEqual(doc["errors"], 1)

        restored = RunReport.from_json(json_decode(json_encode(run_report)))
        self.assertEqual(restored.rows, run_report.rows)
        self.assertEqual(restored.selected_team, {"all": [1, 2]})

        empty = RunReport("report", [])
        self.assertIsNone(empty.accuracy)
        self.assertIsNone(empty.mean_api_calls)


class OptimizeTest(HarnessTest):
    def test_group_teams(self):
        pool, ranker = load_pool(self.pool_file)
        dataset = load_dataset(self.dataset_file)
        out_dir = self.path("optimize")

        selections, run_report = optimize(
            pool, ranker, dataset, self.create_config(), 1, group_by="group", out_dir=out_dir
        )

        self.assertEqual({g: s.team for g, s in selections.items()}, {"economics": [1], "physics": [2]})
        self.assertEqual(selections["economics"].queries, ["econ-1", "econ-2", "econ-3"])
        self.assertAlmostEqual(selections["economics"].importance.per_agent[1], 1 / 3.0)
        self.assertAlmostEqual(selections["physics"].importance.per_agent[2], 2 / 3.0)

        self.assertAlmostEqual(run_report.accuracy, 5 / 6.0)
        self.assertAlmostEqual(run_report.mean_api_calls, 26 / 6.0)
        self.assertEqual(run_report.stop_steps, {1: 4, 2: 2})
        self.assertEqual(run_report.selected_team, {"economics": [1], "physics": [2]})

        self.assertEqual(len(os.listdir(os.path.join(out_dir, "transcripts"))), 6)
        self.assertEqual(len(os.listdir(os.path.join(out_dir, "importance"))), 6)
        teams = sorted(os.listdir(os.path.join(out_dir, "teams")))
        self.assertEqual(teams, ["team-economics.json", "team-physics.json"])

        team, team_ranker = load_pool(os.path.join(out_dir, "teams", "team-physics.json"))
        self.assertEqual([(a.agent_id, a.display_name) for a in team], [(1, "Physicist")])
        self.assertEqual(team_ranker.display_name, "Ranker")

        doc = read_json(os.path.join(out_dir, "report.json"))
        self.assertEqual(doc["stage"], "optimize")
        self.assertEqual(len(doc["rows"]), 6)

    def test_single_team(self):
        pool, ranker = load_pool(self.pool_file)
        dataset = load_dataset(self.dataset_file)

        selections, _ = optimize(pool, ranker, dataset, self.create_config(), 2)
        self.assertEqual(list(selections.keys()), ["all"])
        self.assertEqual(selections["all"].team, [2, 1])

        # asking for the whole pool gives the whole pool by importance
        selections, _ = optimize(pool, ranker, dataset, self.create_config(), 4, parallelism=3)
        self.assertEqual(selections["all"].team, [2, 1, 3, 4])
        self.assertAlmostEqual(selections["all"].importance.per_agent[4], 1 / 6.0)

    def test_reproducible(self):
        pool, ranker = load_pool(self.pool_file)
        dataset = load_dataset(self.dataset_file)
        config = self.create_config(shuffle_seed=7)

        optimize(pool, ranker, dataset, config, 2, group_by="group", out_dir=self.path("first"), parallelism=4)
        optimize(pool, ranker, dataset, config, 2, group_by="group", out_dir=self.path("second"))

        for sub_dir in ("transcripts", "importance", "teams"):
            names = sorted(os.listdir(self.path("first", sub_dir)))
            self.assertEqual(names, sorted(os.listdir(self.path("second", sub_dir))))

            for name in names:
                with open(self.path("first", sub_dir, name), "rb") as first:
                    with open(self.path("second", sub_dir, name), "rb") as second:
                        self.assertEqual(first.read(), second.read(), "for %s/%s" % (sub_dir, name))

    def test_recovers_planted_experts(self):
        config = RunConfig.for_preset("reasoning")
        recovered, stable = 0, 0
        team_correct, pool_correct, solved = 0, 0, 0

        for seed in range(20):
            queries = make_queries(50, seed=seed, group="physics")
            held_out = make_queries(50, seed=seed + 100, group="physics", prefix="s")
            pool = planted_expert_pool(queries + held_out, seed)

            selections, _ = optimize(pool, None, Dataset(None, queries), config, 3)
            team = selections["all"].team
            if sorted(team) == [2, 5, 7]:
                recovered += 1

            path = self.write_dataset("planted-%d.jsonl" % seed, [q.to_json() for q in queries])
            sampled, _ = optimize(pool, None, load_dataset(path, 0.5, seed=seed), config, 3)
            if sorted(sampled["all"].team) == sorted(team):
                stable += 1

            if seed < 3:
                held_out_dataset = Dataset(None, held_out)
                team_report = solve(team_of(pool, team), None, held_out_dataset, config)
                pool_report = solve(pool, None, held_out_dataset, config)

                team_correct += sum(1 for r in team_report.rows if r["correct"])
                pool_correct += sum(1 for r in pool_report.rows if r["correct"])
                solved += len(held_out)

        self.assertGreaterEqual(recovered, 18)
        self.assertGreaterEqual(stable, 18)
        self.assertEqual(solved, 150)
        self.assertGreater(team_correct, pool_correct)


class SolveTest(HarnessTest):
    def test_solve(self):
        pool, ranker = load_pool(self.pool_file)
        dataset = load_dataset(self.dataset_file)
        out_dir = self.path("solve")

        run_report = solve(pool, ranker, dataset, self.create_config(), out_dir=out_dir, parallelism=2)

        self.assertEqual(run_report.stage, "solve")
        self.assertAlmostEqual(run_report.accuracy, 5 / 6.0)
        self.assertEqual([r["correct"] for r in run_report.rows], [True, True, True, True, True, False])
        self.assertEqual(run_report.rows[3]["output"], "C")
        self.assertEqual(run_report.rows[3]["ranker_calls"], 1)
        self.assertEqual(LEDGER.total_calls, 26)

        # a second run reuses the saved transcripts without calling any agent
        again = solve(pool, ranker, dataset, self.create_config(), out_dir=out_dir)
        self.assertEqual(again.rows, run_report.rows)
        self.assertEqual(LEDGER.total_calls, 26)

    def test_unanimous_team(self):
        queries = make_queries(10, seed=2)
        run_report = solve(self.create_pool(["B"] * 4), None, Dataset(None, queries), self.create_config())

        self.assertEqual(run_report.mean_api_calls, 4.0)
        self.assertEqual(run_report.stop_steps, {1: 10})
        self.assertEqual(run_report.accuracy, sum(1 for q in queries if q.gold == "B") / 10.0)

    def test_errors_are_reported(self):
        pool = self.create_pool(["A", "B"], fail_steps=[1])
        queries = make_queries(3)

        run_report = solve(pool, None, Dataset(None, queries), self.create_config())

        self.assertEqual(len(run_report.rows), 3)
        self.assertTrue(all(r["error"] for r in run_report.rows))
        self.assertIsNone(run_report.accuracy)
        self.assertEqual(run_report.to_json()["errors"], 3)

    def test_crash_is_reported(self):
        pool = self.create_pool(["A", "A", "B"])
        dataset = Dataset(None, make_queries(3))
        execute = ScriptedBackend.execute

        def crashing_execute(backend, spec, bundle, decoding, context):
            if context.query_id == "q002":
                raise RuntimeError("backend exploded")
            return execute(backend, spec, bundle, decoding, context)

        with mock.patch.object(ScriptedBackend, "execute", autospec=True, side_effect=crashing_execute):
            run_report = solve(pool, None, dataset, self.create_config(), out_dir=self.path("solve"), parallelism=2)
            selections, trial_report = optimize(pool, None, dataset, self.create_config(), 2)

        self.assertEqual([r["query_id"] for r in run_report.rows], ["q001", "q002", "q003"])
        self.assertEqual(run_report.rows[1]["error"], "backend exploded")
        self.assertIsNone(run_report.rows[1]["correct"])
        self.assertEqual([r.get("output") for r in run_report.rows], ["A", None, "A"])
        self.assertEqual(run_report.to_json()["errors"], 1)
        self.assertFalse(os.path.exists(self.path("solve", "transcripts", "q002.json")))

        self.assertEqual(trial_report.to_json()["errors"], 1)
        self.assertEqual(selections["all"].queries, ["q001", "q002", "q003"])
        self.assertEqual(selections["all"].team, [1, 2])


class ReportTest(HarnessTest):
    def test_empty_directory(self):
        run_report, selections = report(self.directory.name)

        self.assertEqual(run_report.rows, [])
        self.assertIsNone(run_report.accuracy)
        self.assertEqual(selections, {})

    def test_report(self):
        pool = self.create_pool(["A", "A", "B"])
        config = self.create_config()

        for n, query in enumerate(make_queries(10, seed=5)):
            result = run_inference(pool, query, config)
            path = self.path("%s.json" % query.query_id)
            write_transcript(path, result, pool, None, config, query, {"correct": n < 6})

        run_report, selections = report(self.directory.name)

        self.assertEqual(len(run_report.rows), 10)
        self.assertEqual(run_report.accuracy, 0.6)
        self.assertEqual(run_report.mean_api_calls, 3.0)
        self.assertEqual(sum(run_report.stop_steps.values()), 10)
        self.assertEqual(selections, {})

        with open(self.path("zz.json"), "w", encoding="utf-8") as f:
            f.write(json_encode({"schema_version": 99, "kind": "transcript"}))

        self.assertRaises(SchemaVersionError, report, self.directory.name)


class AttributionEvalTest(HarnessTest):
    def decider_pool(self, queries):
        """
        Agent 1 always answers correctly. The others answer a fixed wrong letter each and rate agent 1's responses
        above everyone else's, so the output of any team is decided by agent 1 when it is in the team.
        """
        tables = {i: {} for i in range(1, 5)}
        for query in queries:
            wrong = [letter for letter in LETTERS if letter != query.gold]
            tables[1][query.query_id] = {"*": {"*": query.gold}}
            for i in range(2, 5):
                tables[i][query.query_id] = {"*": {"*": wrong[i - 2]}}

        pool = [scripted_agent(1, tables[1], expertise=("physics",))]
        for i in range(2, 5):
            pool.append(scripted_agent(i, tables[i], rating_policy="fixed", fixed_scores={"1": 5}))
        return pool

    def test_decider_tops_both_rankings(self):
        queries = make_queries(4, seed=11, group="physics")
        pool = self.decider_pool(queries)
        config = RunConfig.for_preset("reasoning")

        dataset = Dataset(None, queries)
        doc = attribution_eval(pool, None, dataset, config, subset_size=3, num_subsets=4, out_dir=self.path())

        self.assertEqual(doc["kind"], "agreement")
        self.assertEqual(doc["weighting"], "combination")

        # the subset without agent 1 has all zero Shapley values so has no row
        self.assertEqual([r["subset"] for r in doc["rows"]], [[1, 2, 3], [1, 2, 4], [1, 3, 4]])

        for row in doc["rows"]:
            self.assertEqual(row["scenario"], "in-domain")
            self.assertEqual(row["queries"], 4)
            self.assertGreater(row["shapley"]["1"], 0.0)
            self.assertEqual([v for k, v in row["shapley"].items() if k != "1"], [0.0, 0.0])

            scores = row["importance_scores"]
            self.assertEqual(max(scores, key=scores.get), "1")
            self.assertLess(row["importance"]["kl"], row["uniform"]["kl"])

        means = doc["means"]["in-domain"]
        self.assertLess(means["importance"]["kl"], means["uniform"]["kl"])
        self.assertNotIn("off-domain", doc["means"])

        self.assertEqual(read_json(self.path("agreement.json"))["rows"], json_decode(json_encode(doc["rows"])))

    def test_identical_agents(self):
        queries = [self.create_query("q%d" % n, gold="A") for n in range(1, 4)]
        pool = self.create_pool(["A"] * 3)

        doc = attribution_eval(pool, None, Dataset(None, queries), self.create_config(), num_subsets=1)

        row = doc["rows"][0]
        self.assertEqual(row["scenario"], "off-domain")
        self.assertEqual(len(set(row["shapley"].values())), 1)
        self.assertAlmostEqual(row["importance"]["kl"], row["uniform"]["kl"])
        self.assertAlmostEqual(row["importance"]["kl"], 0.0)

    def test_limits(self):
        queries = make_queries(2)
        dataset = Dataset(None, queries)
        config = self.create_config()

        large = self.create_pool(["A"] * 9)
        self.assertRaises(ShapleyError, attribution_eval, large, None, dataset, config)
        self.assertRaises(ShapleyError, attribution_eval, self.create_pool(["A"] * 3), None, dataset, config, 3, 21)


class CommandsTest(HarnessTest):
    def call(self, name, *args, **options):
        out = StringIO()
        call_command(name, *args, stdout=out, **options)
        return out.getvalue()

    def test_optimize_then_solve(self):
        out_dir = self.path("optimize")
        output = self.call(
            "optimize", pool=self.pool_file, dataset=self.dataset_file, k=1, group_by="group", out=out_dir, parallel=1
        )

        self.assertIn("Optimizing a team of 1 from 4 agents over 6 queries", output)
        self.assertIn("1:Economist", output)
        self.assertIn("2:Physicist", output)
        self.assertIn("0.833", output)

        team_file = os.path.join(out_dir, "teams", "team-economics.json")
        with open(team_file, "rb") as team:
            team_bytes = team.read()

        output = self.call("solve", team=team_file, dataset=self.dataset_file, out=self.path("solve"), verbosity=2)

        self.assertIn("Solving 6 queries with a team of 1 agents", output)
        self.assertIn("0.667", output)
        self.assertIn("0 errors", output)

        # solving never touches the team it was given
        with open(team_file, "rb") as team:
            self.assertEqual(team.read(), team_bytes)

        output = self.call("report", out_dir, json=True)
        doc = json_decode(output)
        self.assertAlmostEqual(doc["accuracy"], 5 / 6.0)
        self.assertEqual(doc["selections"], {"1": 1, "2": 1})
        self.assertEqual(len(doc["rows"]), 6)

        output = self.call("report", out_dir)
        self.assertIn(" > 1: 4", output)
        self.assertIn(" > agent 2: 1", output)

    def test_optimize_sampled(self):
        output = self.call("optimize", pool=self.pool_file, dataset=self.dataset_file, k=2, sample_fraction=0.5)
        self.assertIn("over 3 queries", output)

    def test_seed_from_config(self):
        config_file = self.path("config.json")
        with open(config_file, "w", encoding="utf-8") as f:
            f.write(json_encode({"shuffle_seed": 7}))

        self.call("solve", pool=self.pool_file, dataset=self.dataset_file, config=config_file, out=self.path("a"))
        doc = read_transcript(self.path("a", "transcripts", "econ-1.json"))
        self.assertEqual(doc["config"]["shuffle_seed"], 7)

        # unless a seed is given explicitly
        self.call(
            "solve", pool=self.pool_file, dataset=self.dataset_file, config=config_file, seed=3, out=self.path("b")
        )
        doc = read_transcript(self.path("b", "transcripts", "econ-1.json"))
        self.assertEqual(doc["config"]["shuffle_seed"], 3)

    def test_attribution_eval(self):
        output = self.call(
            "attribution_eval", pool=self.pool_file, dataset=self.dataset_file, subsets=2, out=self.directory.name
        )

        self.assertIn("subset/scenario rows evaluated", output)
        self.assertEqual(read_json(self.path("agreement.json"))["kind"], "agreement")

    def test_errors(self):
        with self.assertRaisesMessage(CommandError, "A pool file is required (--pool or --team)"):
            self.call("solve", dataset=self.dataset_file)

        self.assertRaises(CommandError, self.call, "solve", pool=self.pool_file, dataset=self.path("missing.jsonl"))
        self.assertRaises(
            CommandError, self.call, "optimize", pool=self.pool_file, dataset=self.dataset_file, k=1, sample_fraction=2
        )

        with open(self.path("bad.json"), "w", encoding="utf-8") as f:
            f.write(json_encode({"schema_version": 2, "kind": "transcript"}))
        self.assertRaises(CommandError, self.call, "report", self.directory.name)
