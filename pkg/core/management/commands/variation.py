from core.management.suite import SuiteCommand


class Command(SuiteCommand):
    help = "Compare first and second variations of the soliton tensor with finite differences in t."

    suite = "variation"
    suite_options = ("direction", "amplitude", "step", "samples")

    def add_suite_arguments(self, parser):
        parser.add_argument("--direction", type=str, help="jacobi:<K element>, gauge:W=grad(<K element>) or block:dx<i>dx<j>")
        parser.add_argument("--amplitude", type=float, help="Scale of the direction")
        parser.add_argument("--step", type=float, help="Finite-difference step in t")
        parser.add_argument("--samples", type=int, help="Random elements of K to test")
