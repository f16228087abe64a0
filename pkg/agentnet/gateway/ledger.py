import threading
from collections import Counter

UNATTRIBUTED = "-"


class CallLedger(object):
    """
    Counts backend calls. Every attempt counts towards total_calls and the per-agent and per-query counters, while
    logical_calls only counts attempts that succeeded (the figure comparable to a reported number of API calls).

    A ledger scoped to a single run can be given a parent, which then receives every update as well.
    """

    def __init__(self, parent=None):
        self.parent = parent
        self._lock = threading.Lock()
        self.total_calls = 0
        self.logical_calls = 0
        self.per_agent_calls = Counter()
        self.per_query_calls = Counter()

    def record(self, agent_id=None, query_id=None, success=True):
        agent_key = UNATTRIBUTED if agent_id is None else agent_id
        query_key = UNATTRIBUTED if query_id is None else query_id

        with self._lock:
            self.total_calls += 1
            if success:
                self.logical_calls += 1
            self.per_agent_calls[agent_key] += 1
            self.per_query_calls[query_key] += 1

        if self.parent is not None:
            self.parent.record(agent_id, query_id, success)

    def snapshot(self):
        """
        Gets a consistent point-in-time copy (without parent)
        """
        copy = CallLedger()
        with self._lock:
            copy.total_calls = self.total_calls
            copy.logical_calls = self.logical_calls
            copy.per_agent_calls = Counter(self.per_agent_calls)
            copy.per_query_calls = Counter(self.per_query_calls)
        return copy

    def reset(self):
        with self._lock:
            self.total_calls = 0
            self.logical_calls = 0
            self.per_agent_calls.clear()
            self.per_query_calls.clear()

    def is_conserved(self):
        return self.total_calls == sum(self.per_agent_calls.values()) == sum(self.per_query_calls.values())

    def to_json(self):
        return {
            "total_calls": self.total_calls,
            "logical_calls": self.logical_calls,
            "per_agent_calls": {str(k): v for k, v in sorted(self.per_agent_calls.items(), key=lambda i: str(i[0]))},
            "per_query_calls": {str(k): v for k, v in sorted(self.per_query_calls.items(), key=lambda i: str(i[0]))},
        }


LEDGER = CallLedger()


def ledger_snapshot():
    return LEDGER.snapshot()


def reset_ledger():
    LEDGER.reset()
