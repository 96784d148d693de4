from core.management.suite import SuiteCommand


class Command(SuiteCommand):
    help = "Fit growth exponents of level-set averages for Killing fields and eigenfields of P."

    suite = "growth"
    suite_options = ("degree", "sphere_degree", "samples", "window_lo", "window_hi")

    def add_suite_arguments(self, parser):
        parser.add_argument("--degree", type=int, help="Vector basis degree (capped at 4)")
        parser.add_argument("--sphere-degree", dest="sphere_degree", type=int, help="Sphere polynomial degree")
        parser.add_argument("--samples", type=int, help="Number of eigenfields to test")
        parser.add_argument("--window-lo", dest="window_lo", type=float, help="Lower end of the fit window")
        parser.add_argument("--window-hi", dest="window_hi", type=float, help="Upper end of the fit window")
