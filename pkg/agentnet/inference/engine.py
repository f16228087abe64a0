"""
Forward message passing over the network: layer by layer execution with agent team reformation and early stopping
"""
import logging
from concurrent.futures import ThreadPoolExecutor

from agentnet.agents.backends import AgentFailure, Decoding
from agentnet.agents.extraction import NO_ANSWER
from agentnet.agents.prompts import assemble_prompt
from agentnet.agents.ranking import rank_listwise
from agentnet.agents.runtime import ExecutionContext, execute_agent
from agentnet.consensus.bleu import consistency_classes, should_stop
from agentnet.gateway import LEDGER, CallLedger
from agentnet.network.models import (
    MessageRecord,
    NodeId,
    apply_reformation,
    build_initial_graph,
    predecessors,
    validate_pool,
)
from agentnet.utils import derive_seed

from .models import POSTPROCESS_TOP_TESTED_CODE, TaskResult
from .postprocess import filter_actions, postprocess_plurality, postprocess_top_tested_code

logger = logging.getLogger(__name__)

FLAG_ALL_ACTIONS_REJECTED = "all-actions-rejected"


class InferenceError(Exception):
    def __init__(self, message, graph=None):
        super(InferenceError, self).__init__(message)
        self.graph = graph


def counted_records(graph, step, pool_by_id, answer_roles=None):
    """
    Gets the records of a layer whose answers count for consensus and the output: answering, not from a tool, and
    from an agent with one of the answer roles when those are given
    """
    records = []
    for record in graph.layer_records(step, answering_only=True):
        spec = pool_by_id[record.node.agent_id]
        if spec.is_tool:
            continue
        if answer_roles and spec.role not in answer_roles:
            continue
        records.append(record)
    return records


class InferenceRun(object):
    """
    A single run of the network on a query
    """

    def __init__(self, pool, query, config, ranker=None, gateway=None, ledger=None, action_filter=None):
        validate_pool(pool)

        self.pool = pool
        self.pool_by_id = {a.agent_id: a for a in pool}
        self.query = query
        self.config = config
        self.ranker = ranker
        self.gateway = gateway
        self.ledger = CallLedger(parent=ledger or LEDGER)
        self.action_filter = action_filter
        self.policy = config.consensus_policy
        self.answer_roles = set(config.answer_roles) if config.answer_roles else None
        self.decoding = Decoding(config.temperature, config.max_tokens_for(query.task_kind))
        self.ranker_calls = 0
        self.flags = []

        self.graph = build_initial_graph(pool, config.max_steps, query.prompt)

    def run(self):
        reformation_steps = set(self.config.reformation_schedule)
        max_steps = self.config.max_steps

        for step in range(1, max_steps + 1):
            if not (step in reformation_steps and self.reform(step)):
                self.execute_layer(step)

            records = counted_records(self.graph, step, self.pool_by_id, self.answer_roles)
            classes = consistency_classes([(r.node.agent_id, r.answer) for r in records], self.policy)

            if should_stop(classes, len(records), step, self.policy):
                logger.info(
                    "Query %s reached consensus at step %d (%s)"
                    % (self.query.query_id, step, "/".join(str(c.size) for c in classes))
                )
                self.graph.stop_step = step
                break
        else:
            self.graph.stop_step = max_steps

        output = self.postprocess()
        api_calls = sum(r.call_cost for r in self.graph.records.values()) + self.ranker_calls

        return TaskResult(
            self.query.query_id,
            output,
            self.graph.stop_step,
            api_calls,
            self.graph,
            ranker_calls=self.ranker_calls,
            attempts=self.ledger.total_calls,
            flags=self.flags,
        )

    def reform(self, step):
        """
        Ranks the responses of the previous layer and keeps the top agents, whose messages are carried into this step.
        Returns whether a reformation happened.
        """
        candidates = counted_records(self.graph, step - 1, self.pool_by_id)

        if not self.ranker:
            logger.info("No ranker configured, skipping reformation at step %d" % step)
            return False
        if len(candidates) <= self.config.keep_k:
            logger.info("Only %d agents responded, skipping reformation at step %d" % (len(candidates), step))
            return False

        outcome = rank_listwise(
            self.ranker,
            self.query.prompt,
            candidates,
            self.config.keep_k,
            derive_seed(self.config.shuffle_seed, self.query.query_id, step, "rank"),
            self.query.task_kind,
            query_id=self.query.query_id,
            gateway=self.gateway,
            ledger=self.ledger,
            method=self.config.ranking,
        )
        self.ranker_calls += outcome.ranker_calls

        logger.info("Query %s keeps agents %s at step %d" % (self.query.query_id, outcome.survivors, step))

        self.graph = apply_reformation(self.graph, step - 1, outcome.survivors)
        for agent_id in sorted(outcome.survivors):
            previous = self.graph.records[NodeId(step - 1, agent_id)]
            self.graph.add_record(previous.copy_forward(NodeId(step, agent_id)))

        return True

    def execute_layer(self, step):
        roles = self.config.roles_at(step)
        active = self.graph.active_agents(step)
        pending = []

        for agent_id in active:
            node = NodeId(step, agent_id)
            spec = self.pool_by_id[agent_id]

            if roles is not None and spec.role not in roles:
                previous = self.graph.records.get(NodeId(step - 1, agent_id))
                if previous and previous.is_answering:
                    self.graph.add_record(previous.copy_forward(node))
                else:
                    self.graph.add_record(MessageRecord.idle_record(node, NO_ANSWER))
            else:
                pending.append((spec, node))

        if self.config.parallelism > 1 and len(pending) > 1:
            with ThreadPoolExecutor(max_workers=self.config.parallelism) as executor:
                records = list(executor.map(lambda p: self.execute_node(*p), pending))
        else:
            records = [self.execute_node(spec, node) for spec, node in pending]

        failed = set()
        for record in records:
            self.graph.add_record(record)
            if record.failed:
                failed.add(record.node.agent_id)

        if not self.graph.layer_records(step, answering_only=True):
            raise InferenceError("Every agent failed or idled at step %d" % step, self.graph)

        if failed and step < self.config.max_steps:
            logger.warning("Retiring failed agents %s after step %d" % (sorted(failed), step))
            self.graph = apply_reformation(self.graph, step, set(active) - failed, copy_forward=False)

    def execute_node(self, spec, node):
        peers = []
        for predecessor in predecessors(self.graph, node):
            record = self.graph.records.get(predecessor)
            if record and record.is_answering:
                peers.append(record)

        seed = derive_seed(self.config.shuffle_seed, self.query.query_id, node.step, node.agent_id)
        bundle = assemble_prompt(spec, self.query.prompt, peers, seed, self.query.task_kind, self.config.rate_self)
        context = ExecutionContext(self.query.query_id, self.query.task_kind, node, self.gateway, self.ledger)

        try:
            return execute_agent(spec, bundle, self.decoding, context)
        except AgentFailure as e:
            logger.warning("Agent %d failed at %s on query %s: %s" % (spec.agent_id, node, self.query.query_id, e))
            return MessageRecord.failure_record(node, e, NO_ANSWER)

    def postprocess(self):
        final_records = counted_records(self.graph, self.graph.terminal_step, self.pool_by_id, self.answer_roles)

        if self.action_filter:
            final_records = filter_actions(final_records, self.action_filter)
            if not final_records:
                self.flags.append(FLAG_ALL_ACTIONS_REJECTED)
                return NO_ANSWER

        if self.config.postprocess == POSTPROCESS_TOP_TESTED_CODE:
            candidates = []
            unit_tests = []
            for step in range(1, self.graph.terminal_step + 1):
                for record in self.graph.layer_records(step, answering_only=True):
                    unit_tests.extend(t for t in record.unit_tests if t not in unit_tests)
                candidates.extend(r for r in counted_records(self.graph, step, self.pool_by_id, self.answer_roles))

            seed = derive_seed(self.config.shuffle_seed, self.query.query_id, "output")
            return postprocess_top_tested_code(
                [r for r in candidates if not r.is_copy],
                unit_tests,
                seed,
                final_records=final_records,
                policy=self.policy,
                top=self.config.top_code_candidates,
            )

        return postprocess_plurality(final_records, policy=self.policy)


def run_inference(pool, query, config, ranker=None, gateway=None, ledger=None, action_filter=None):
    """
    Runs the network of the given pool on a query

    :param pool: the agents, numbered 1..N
    :param query: the TaskQuery
    :param config: the RunConfig
    :param ranker: the ranker agent used by reformations, if any
    :param gateway: the gateway used by LLM agents
    :param ledger: ledger receiving every call of the run, defaults to the process-wide one
    :param action_filter: callable rejecting invalid actions before the output is chosen
    :return: the TaskResult
    """
    return InferenceRun(pool, query, config, ranker, gateway, ledger, action_filter).run()
