from django.core.management.base import CommandError

from agentnet.agents.extraction import NO_ANSWER
from agentnet.harness.cli import ACCURACY_LIMITS, DOMAIN_ERRORS, HarnessCommand, colorcoded, format_number
from agentnet.harness.pipeline import solve
from agentnet.utils import truncate


class Command(HarnessCommand):
    help = "Runs a team over every query of a dataset and grades the outputs"

    def add_arguments(self, parser):
        self.add_run_arguments(parser, team=True)

    def handle(self, *args, **options):
        pool, ranker, config, dataset = self.load_inputs(options)
        gateway = self.get_gateway(options)

        self.stdout.write("Solving %d queries with a team of %d agents..." % (len(dataset), len(pool)))

        try:
            report = solve(
                pool,
                ranker,
                dataset,
                config,
                out_dir=options["out"],
                parallelism=options["parallel"],
                gateway=gateway,
            )
        except DOMAIN_ERRORS as e:
            raise CommandError(str(e))

        if options["verbosity"] >= 2:
            header = (("Query", 20), ("Output", 30), ("Correct", 10), ("Stop", 6), ("Calls", 6))
            rows = []
            for row in report.rows:
                if row.get("error"):
                    rows.append(((row["query_id"], 20), ("error: " + truncate(row["error"], 23), 30)))
                    continue
                output = truncate((row["output"] or NO_ANSWER).replace("\n", " "), 28)
                correct = "-" if row["correct"] is None else ("yes" if row["correct"] else "no")
                rows.append(
                    (
                        (row["query_id"], 20),
                        (output, 30),
                        (correct, 10),
                        (row["stop_step"], 6),
                        (row["api_calls"], 6),
                    )
                )
            self.write_table(header, rows)

        self.stdout.write(
            "Accuracy %s, mean API calls %s (%s attempts), %d errors"
            % (
                colorcoded(report.accuracy, ACCURACY_LIMITS),
                format_number(report.mean_api_calls),
                format_number(report.mean_attempts),
                len(report.rows) - len(report.completed_rows),
            )
        )
