from django.core.management.base import CommandError

from agentnet.harness.cli import DOMAIN_ERRORS, HarnessCommand, format_number
from agentnet.harness.pipeline import SCENARIO_IN_DOMAIN, SCENARIO_OFF_DOMAIN, attribution_eval


class Command(HarnessCommand):
    help = "Compares Agent Importance Scores with Shapley values on sampled subsets of a pool"

    def add_arguments(self, parser):
        self.add_run_arguments(parser)
        parser.add_argument("--subset-size", type=int, default=3, help="Agents per sampled subset")
        parser.add_argument("--subsets", type=int, default=3, help="Number of subsets to sample")
        parser.add_argument(
            "--weighting",
            choices=("combination", "classical"),
            default="combination",
            help="How marginal contributions are weighted",
        )

    def handle(self, *args, **options):
        pool, ranker, config, dataset = self.load_inputs(options)
        gateway = self.get_gateway(options)

        try:
            doc = attribution_eval(
                pool,
                ranker,
                dataset,
                config,
                subset_size=options["subset_size"],
                num_subsets=options["subsets"],
                seed=config.shuffle_seed,
                out_dir=options["out"],
                gateway=gateway,
                weighting=options["weighting"],
                parallelism=options["parallel"],
            )
        except DOMAIN_ERRORS as e:
            raise CommandError(str(e))

        header = (("Scenario", 14), ("Scores", 14), ("KL", 14), ("ListMLE", 14))
        rows = []
        for scenario in (SCENARIO_IN_DOMAIN, SCENARIO_OFF_DOMAIN):
            means = doc["means"].get(scenario)
            if not means:
                continue
            for method in ("importance", "uniform"):
                rows.append(
                    (
                        (scenario, 14),
                        (method, 14),
                        (format_number(means[method]["kl"], 6), 14),
                        (format_number(means[method]["listmle"], 4), 14),
                    )
                )

        self.write_table(header, rows)
        self.stdout.write("\n%d subset/scenario rows evaluated" % len(doc["rows"]))
