"""
The stages of the harness: team optimization (trial runs, importance, selection), task solving, agreement between
importance and Shapley values, and reporting over saved transcripts
"""
import itertools
import logging
import os
import random
from collections import Counter
from concurrent.futures import ThreadPoolExecutor

import regex
from django.conf import settings

from agentnet.agents.pools import KIND_TEAM, POOL_SCHEMA_VERSION, write_team
from agentnet.attribution.importance import average_reports, compute_importance, select_team
from agentnet.attribution.metrics import agreement_metrics, uniform_report
from agentnet.attribution.models import MetricError, ShapleyError
from agentnet.attribution.shapley import shapley, team_of
from agentnet.inference.engine import InferenceError, run_inference
from agentnet.network.transcripts import check_schema, list_transcripts, read_transcript, write_transcript
from agentnet.utils import atomic_write, derive_seed, json_encode, read_json

from .grading import accuracy_grader, grade
from .models import STAGE_OPTIMIZE, STAGE_SOLVE, RunReport

logger = logging.getLogger(__name__)

TRANSCRIPTS_DIR = "transcripts"
IMPORTANCE_DIR = "importance"
TEAMS_DIR = "teams"
REPORT_FILE = "report.json"
AGREEMENT_FILE = "agreement.json"

AGREEMENT_SCHEMA_VERSION = 1
KIND_AGREEMENT = "agreement"

SCENARIO_IN_DOMAIN = "in-domain"
SCENARIO_OFF_DOMAIN = "off-domain"

UNSAFE_FILENAME_REGEX = regex.compile(r"[^\w.-]")


def safe_filename(name):
    return UNSAFE_FILENAME_REGEX.sub("_", str(name))


def transcript_path(out_dir, query_id):
    return os.path.join(out_dir, TRANSCRIPTS_DIR, "%s.json" % safe_filename(query_id))


def map_queries(func, queries, parallelism=1):
    """
    Applies func to every query, concurrently if allowed, returning results in query order
    """
    if parallelism > 1 and len(queries) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as executor:
            return list(executor.map(func, queries))
    return [func(q) for q in queries]


def result_row(result, correct):
    row = result.summary()
    row["correct"] = correct
    return row


def error_row(query, error):
    return {"query_id": query.query_id, "error": str(error), "correct": None}


class TeamSelection(object):
    def __init__(self, group, team, importance, queries):
        self.group = group
        self.team = team
        self.importance = importance
        self.queries = queries

    def __repr__(self):
        return "TeamSelection(%r, %r)" % (self.group, self.team)


def optimize(pool, ranker, dataset, config, k, group_by=None, out_dir=None, parallelism=1, gateway=None):
    """
    Runs a trial on every query, averages the Agent Importance Scores per group and selects the top k agents of each
    group. Gold labels are only used to grade the report rows, never for selection.

    :return: tuple of the TeamSelections by group and the RunReport of the trials
    """

    def run_trial(query):
        result = run_inference(pool, query, config, ranker=ranker, gateway=gateway)
        importance = compute_importance(
            result.graph, config.importance_init, config.consensus_policy, pool, config.answer_roles
        )
        importance.query_id = query.query_id

        if out_dir:
            path = transcript_path(out_dir, query.query_id)
            write_transcript(path, result, pool, ranker, config, query, {"correct": grade(query, result.output)})

            path = os.path.join(out_dir, IMPORTANCE_DIR, "%s.json" % safe_filename(query.query_id))
            atomic_write(path, json_encode(importance, pretty=True))

        return query, result, importance

    def trial(query):
        try:
            return run_trial(query)
        except InferenceError as e:
            logger.warning("Trial on query %s failed: %s" % (query.query_id, e))
        except Exception:
            logger.exception("Trial on query %s crashed" % query.query_id)
        return query, None, None

    trials = {q.query_id: t for q, t in zip(dataset.entries, map_queries(trial, dataset.entries, parallelism))}

    if group_by:
        groups = dataset.groups(group_by)
    else:
        groups = {"all": dataset.entries}

    selections = {}
    for group, queries in groups.items():
        group = "ungrouped" if group is None else str(group)
        reports = [trials[q.query_id][2] for q in queries if trials[q.query_id][2] is not None]
        if not reports:
            logger.warning("No completed trials for group %s, skipping it" % group)
            continue

        importance = average_reports(reports)
        importance.selected_team = select_team(importance, k)
        selections[group] = TeamSelection(group, importance.selected_team, importance, [q.query_id for q in queries])

        if out_dir:
            path = os.path.join(out_dir, TEAMS_DIR, "team-%s.json" % safe_filename(group))
            write_team(path, pool, ranker, group, importance.selected_team, importance.per_agent)

    rows = []
    for query, result, _ in trials.values():
        if result is None:
            rows.append(error_row(query, "trial failed"))
        else:
            rows.append(result_row(result, grade(query, result.output)))

    report = RunReport(STAGE_OPTIMIZE, rows, {g: s.team for g, s in selections.items()})
    if out_dir:
        atomic_write(os.path.join(out_dir, REPORT_FILE), json_encode(report, pretty=True))

    return selections, report


def solve(pool, ranker, dataset, config, out_dir=None, parallelism=1, gateway=None, action_filter=None):
    """
    Runs the team on every query and grades the outputs. Queries which already have a transcript in the output
    directory are not run again.
    """

    def attempt(query):
        path = transcript_path(out_dir, query.query_id) if out_dir else None

        if path and os.path.exists(path):
            logger.info("Query %s already solved, reusing its transcript" % query.query_id)
            doc = read_transcript(path)
            return dict(doc["result"], correct=doc.get("correct"))

        try:
            result = run_inference(pool, query, config, ranker=ranker, gateway=gateway, action_filter=action_filter)
            correct = grade(query, result.output)
            if path:
                write_transcript(path, result, pool, ranker, config, query, {"correct": correct})
        except InferenceError as e:
            logger.warning("Query %s failed: %s" % (query.query_id, e))
            return error_row(query, e)
        except Exception as e:
            logger.exception("Query %s crashed" % query.query_id)
            return error_row(query, e)

        return result_row(result, correct)

    report = RunReport(STAGE_SOLVE, map_queries(attempt, dataset.entries, parallelism))
    if out_dir:
        atomic_write(os.path.join(out_dir, REPORT_FILE), json_encode(report, pretty=True))
    return report


def is_in_domain(team, query):
    return query.group is not None and any(query.group in agent.expertise for agent in team)


def sample_subsets(pool, subset_size, num_subsets, seed):
    agent_ids = sorted(a.agent_id for a in pool)
    combinations = list(itertools.combinations(agent_ids, min(subset_size, len(agent_ids))))
    rng = random.Random(derive_seed(seed, "subsets"))
    return sorted(rng.sample(combinations, min(num_subsets, len(combinations))))


def attribution_eval(
    pool,
    ranker,
    dataset,
    config,
    subset_size=3,
    num_subsets=3,
    seed=0,
    out_dir=None,
    gateway=None,
    weighting="combination",
    parallelism=1,
):
    """
    Compares Agent Importance Scores and uniform scores against Shapley values on sampled subsets of the pool, split
    into queries inside and outside the subset's expertise

    :return: the agreement document with a row per (subset, scenario) and means per scenario
    """
    max_agents = settings.AGENTNET_MAX_SHAPLEY_AGENTS
    if len(pool) > max_agents:
        raise ShapleyError("Agreement needs pools of at most %d agents, got %d" % (max_agents, len(pool)))

    max_subsets = settings.AGENTNET_MAX_SHAPLEY_SUBSETS
    if num_subsets > max_subsets:
        raise ShapleyError("At most %d subsets can be evaluated, got %d" % (max_subsets, num_subsets))

    rows = []
    for subset in sample_subsets(pool, subset_size, num_subsets, seed):
        team = team_of(pool, subset)
        original_ids = dict(zip(range(1, len(subset) + 1), subset))

        scenarios = {SCENARIO_IN_DOMAIN: [], SCENARIO_OFF_DOMAIN: []}
        for query in dataset.entries:
            scenarios[SCENARIO_IN_DOMAIN if is_in_domain(team, query) else SCENARIO_OFF_DOMAIN].append(query)

        for scenario, queries in scenarios.items():
            if not queries:
                continue

            reports = []
            for query in queries:
                try:
                    result = run_inference(team, query, config, ranker=ranker, gateway=gateway)
                except InferenceError as e:
                    logger.warning("Subset %s failed on query %s: %s" % (list(subset), query.query_id, e))
                    continue
                except Exception:
                    logger.exception("Subset %s crashed on query %s" % (list(subset), query.query_id))
                    continue
                reports.append(
                    compute_importance(
                        result.graph, config.importance_init, config.consensus_policy, team, config.answer_roles
                    )
                )
            if not reports:
                continue

            importance = average_reports(reports)
            for agent in team:
                importance.per_agent.setdefault(agent.agent_id, 0.0)

            values = shapley(
                team,
                queries,
                config,
                grader=accuracy_grader,
                weighting=weighting,
                ranker=ranker,
                gateway=gateway,
                parallelism=parallelism,
            )

            try:
                by_importance = agreement_metrics(importance, values)
                by_uniform = agreement_metrics(uniform_report(values.per_agent), values)
            except MetricError as e:
                logger.warning("Skipping subset %s on %s queries: %s" % (list(subset), scenario, e))
                continue

            rows.append(
                {
                    "subset": list(subset),
                    "scenario": scenario,
                    "queries": len(queries),
                    "importance": {"kl": by_importance.kl, "listmle": by_importance.listmle},
                    "uniform": {"kl": by_uniform.kl, "listmle": by_uniform.listmle},
                    "shapley": {str(original_ids[i]): v for i, v in sorted(values.per_agent.items())},
                    "importance_scores": {str(original_ids[i]): v for i, v in sorted(importance.per_agent.items())},
                    "flags": sorted(set(by_importance.flags) | set(by_uniform.flags)),
                }
            )

    doc = {
        "schema_version": AGREEMENT_SCHEMA_VERSION,
        "kind": KIND_AGREEMENT,
        "weighting": weighting,
        "rows": rows,
        "means": agreement_means(rows),
    }
    if out_dir:
        atomic_write(os.path.join(out_dir, AGREEMENT_FILE), json_encode(doc, pretty=True))
    return doc


def agreement_means(rows):
    means = {}
    for scenario in (SCENARIO_IN_DOMAIN, SCENARIO_OFF_DOMAIN):
        scenario_rows = [r for r in rows if r["scenario"] == scenario]
        if not scenario_rows:
            continue
        means[scenario] = {
            method: {
                metric: sum(r[method][metric] for r in scenario_rows) / len(scenario_rows)
                for metric in ("kl", "listmle")
            }
            for method in ("importance", "uniform")
        }
    return means


def report(directory):
    """
    Summarizes the transcripts of an output directory (or a directory of transcripts) and the teams selected in it

    :return: tuple of the RunReport and a Counter of how often each agent was selected
    """
    transcripts_dir = os.path.join(directory, TRANSCRIPTS_DIR)
    if not os.path.isdir(transcripts_dir):
        transcripts_dir = directory

    rows = []
    for path in list_transcripts(transcripts_dir):
        doc = read_transcript(path)
        rows.append(dict(doc["result"], correct=doc.get("correct")))

    selections = Counter()
    teams_dir = os.path.join(directory, TEAMS_DIR)
    if os.path.isdir(teams_dir):
        for filename in sorted(os.listdir(teams_dir)):
            if filename.endswith(".json"):
                path = os.path.join(teams_dir, filename)
                doc = read_json(path)
                check_schema(doc, path, KIND_TEAM, POOL_SCHEMA_VERSION)
                selections.update(doc.get("source_agent_ids", []))

    return RunReport("report", rows), selections
