from core.management.suite import SuiteCommand


class Command(SuiteCommand):
    help = "Check the curvature identities at seeded points, analytically and under step halving."

    suite = "identities"
    suite_options = ("points", "step", "identity")

    def add_suite_arguments(self, parser):
        parser.add_argument("--points", type=int, help="Number of seeded evaluation points")
        parser.add_argument("--step", type=float, help="Coarse finite-difference step")
        parser.add_argument("--identity", type=str, help="Restrict to one identity")
