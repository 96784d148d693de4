from core.management.suite import SuiteCommand


class Command(SuiteCommand):
    help = (
        "Run the iterative gauge fix on a grid, from pure-gauge data or a field file. "
        "Invoked as gauge_fix; Django names commands after their module, so gauge-fix is not accepted."
    )

    suite = "gauge_fix"
    suite_options = ("input", "input_k", "R", "iters", "grid_points", "half_width", "epsilon")

    def add_suite_arguments(self, parser):
        parser.add_argument("--input", type=str, help="Field file holding h on a grid")
        parser.add_argument("--input-k", dest="input_k", type=str, help="Field file holding k on the same grid")
        parser.add_argument("--R", dest="R", type=float, help="Cutoff radius")
        parser.add_argument("--iters", type=int, help="Maximum number of iterations")
        parser.add_argument("--grid-points", dest="grid_points", type=int, help="Grid points per axis")
        parser.add_argument("--half-width", dest="half_width", type=float, help="Half width of the grid box")
        parser.add_argument("--epsilon", type=float, help="Size of the quadratic pure-gauge generator")
