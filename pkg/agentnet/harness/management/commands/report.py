from django.core.management.base import BaseCommand, CommandError

from agentnet.harness.cli import ACCURACY_LIMITS, DOMAIN_ERRORS, colorcoded, format_number, row_to_str, row_width
from agentnet.harness.pipeline import report
from agentnet.utils import json_encode


class Command(BaseCommand):
    help = "Summarizes the transcripts and teams saved in an output directory"

    def add_arguments(self, parser):
        parser.add_argument("directory", help="An output directory or a directory of transcripts")
        parser.add_argument("--json", action="store_true", help="Print machine readable rows instead of a table")

    def handle(self, *args, **options):
        try:
            run_report, selections = report(options["directory"])
        except DOMAIN_ERRORS as e:
            raise CommandError(str(e))

        if options["json"]:
            doc = run_report.to_json()
            doc["selections"] = {str(i): c for i, c in sorted(selections.items())}
            self.stdout.write(json_encode(doc, pretty=True))
            return

        header = (("Transcripts", 14), ("Accuracy", 10), ("API calls", 12), ("Attempts", 10))
        self.stdout.write(row_to_str(header))
        self.stdout.write("=" * row_width(header))
        self.stdout.write(
            row_to_str(
                (
                    (len(run_report.rows), 14),
                    (format_number(run_report.accuracy, 3), 10),
                    (format_number(run_report.mean_api_calls), 12),
                    (format_number(run_report.mean_attempts), 10),
                )
            )
        )

        if run_report.stop_steps:
            self.stdout.write("\nStop steps:")
            for step, count in sorted(run_report.stop_steps.items()):
                self.stdout.write(" > %d: %d" % (step, count))

        if selections:
            self.stdout.write("\nSelections:")
            for agent_id, count in sorted(selections.items()):
                self.stdout.write(" > agent %d: %d" % (agent_id, count))

        if run_report.accuracy is not None:
            self.stdout.write("\nAccuracy %s" % colorcoded(run_report.accuracy, ACCURACY_LIMITS))
