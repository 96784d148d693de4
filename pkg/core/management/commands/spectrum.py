from core.management.suite import SuiteCommand


class Command(SuiteCommand):
    help = "Assemble a weighted operator on the polynomial basis and check its spectrum."

    suite = "spectrum"
    suite_options = ("degree", "sphere_degree", "op", "rank", "k", "samples", "amplitude")

    def add_suite_arguments(self, parser):
        parser.add_argument("--degree", type=int, help="Polynomial degree of the Euclidean factor")
        parser.add_argument("--sphere-degree", dest="sphere_degree", type=int, help="Sphere polynomial degree")
        parser.add_argument("--op", type=str, help="drift, P or L")
        parser.add_argument("--rank", type=str, help="scalar, vector or sym2")
        parser.add_argument("--k", type=int, help="Number of eigenpairs to report")
        parser.add_argument("--samples", type=int, help="Random Poisson right-hand sides")
        parser.add_argument("--amplitude", type=float, help="Perturbation amplitude for the cylinder gap probe")
