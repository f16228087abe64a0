from django.core.management.base import CommandError

from agentnet.harness.cli import ACCURACY_LIMITS, DOMAIN_ERRORS, HarnessCommand, colorcoded, format_number
from agentnet.harness.pipeline import optimize


class Command(HarnessCommand):
    help = "Runs trials of a pool over a dataset and selects the k most important agents as a team"

    def add_arguments(self, parser):
        self.add_run_arguments(parser)
        parser.add_argument("--k", type=int, required=True, help="Number of agents to select")
        parser.add_argument("--group-by", help="Query tag to select a team per group of, e.g. group")
        parser.add_argument("--sample-fraction", type=float, help="Fraction of the dataset to optimize on")

    def handle(self, *args, **options):
        pool, ranker, config, dataset = self.load_inputs(options, options["sample_fraction"])
        gateway = self.get_gateway(options)

        self.stdout.write(
            "Optimizing a team of %d from %d agents over %d queries..." % (options["k"], len(pool), len(dataset))
        )

        try:
            selections, report = optimize(
                pool,
                ranker,
                dataset,
                config,
                options["k"],
                group_by=options["group_by"],
                out_dir=options["out"],
                parallelism=options["parallel"],
                gateway=gateway,
            )
        except DOMAIN_ERRORS as e:
            raise CommandError(str(e))

        names = {a.agent_id: a.display_name for a in pool}
        header = (("Group", 16), ("Queries", 10), ("Team", 40), ("Importance", 40))
        rows = []
        for group, selection in sorted(selections.items()):
            scores = ", ".join(format_number(selection.importance.per_agent[i]) for i in selection.team)
            team = ", ".join("%d:%s" % (i, names[i]) for i in selection.team)
            rows.append(((group, 16), (len(selection.queries), 10), (team, 40), (scores, 40)))

        self.stdout.write("")
        self.write_table(header, rows)
        self.stdout.write(
            "\nTrial accuracy %s, mean API calls %s"
            % (colorcoded(report.accuracy, ACCURACY_LIMITS), format_number(report.mean_api_calls))
        )
