from collections import Counter

REPORT_SCHEMA_VERSION = 1

KIND_RUN_REPORT = "run-report"

STAGE_OPTIMIZE = "optimize"
STAGE_SOLVE = "solve"


class RunReport(object):
    """
    Per-query result rows of a stage with the aggregates computed from them
    """

    def __init__(self, stage, rows, selected_team=None):
        self.stage = stage
        self.rows = sorted(rows, key=lambda r: r["query_id"])
        self.selected_team = selected_team

    @property
    def graded_rows(self):
        return [r for r in self.rows if r.get("correct") is not None]

    @property
    def completed_rows(self):
        return [r for r in self.rows if not r.get("error")]

    @property
    def accuracy(self):
        graded = self.graded_rows
        return sum(1 for r in graded if r["correct"]) / float(len(graded)) if graded else None

    @property
    def mean_api_calls(self):
        completed = self.completed_rows
        return sum(r["api_calls"] for r in completed) / float(len(completed)) if completed else None

    @property
    def mean_attempts(self):
        completed = self.completed_rows
        return sum(r.get("attempts", 0) for r in completed) / float(len(completed)) if completed else None

    @property
    def stop_steps(self):
        return Counter(r["stop_step"] for r in self.completed_rows)

    def to_json(self):
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "kind": KIND_RUN_REPORT,
            "stage": self.stage,
            "accuracy": self.accuracy,
            "mean_api_calls": self.mean_api_calls,
            "mean_attempts": self.mean_attempts,
            "stop_steps": {str(s): c for s, c in sorted(self.stop_steps.items())},
            "errors": len(self.rows) - len(self.completed_rows),
            "selected_team": self.selected_team,
            "rows": self.rows,
        }

    @classmethod
    def from_json(cls, json_obj):
        return cls(json_obj["stage"], json_obj["rows"], json_obj.get("selected_team"))
