"""Experiment suites behind the management commands.

Each suite takes a cleaned configuration dictionary and returns a Report;
unset keys fall back to settings.WORKBENCH.
"""
from __future__ import annotations

import logging
import math
import time
from math import comb

import jax.numpy as jnp
import numpy as np
from django.core.exceptions import ValidationError

from .bases import CONFORMAL_BLOCK, EUCLIDEAN_BLOCK, build_basis
from .calculus import adjointness_gap, geometry
from .charts import Chart
from .conf import option
from .differentiation import JetMode
from .fields import SCALAR, SYM2, VECTOR, TensorField, read_field
from .gauge import (
    cb_derivative_gap,
    discretization_floor,
    divf_quadratic_gap,
    gauge_grid,
    gauge_iterate,
    linearization_gap,
    pure_gauge,
    quadratic_generator,
    round_trip,
)
from .identities import IDENTITIES, IDENTITY_IDS, IdentityRunner, TestFields
from .model_spaces import CYLINDER, GAUSSIAN, KBasis, ModelGeometry, k_basis, parse_model
from .reports import Check, Report
from .spectral import (
    DRIFT,
    L,
    P,
    assemble,
    block_coupling,
    check_mu_lambda,
    commutator_gap,
    concentration_checks,
    conformal_perturbation,
    default_radii,
    eigenfield_growth,
    eigenfields,
    eigenpairs,
    interpolation_checks,
    killing_growth,
    poisson_growth,
    relation_gaps,
    solve_P,
    spectral_gap_probe,
    splitting_check,
    z_decompose,
)
from .variation import (
    PerturbationPath,
    SOLITON,
    GENERAL,
    first_variation_gap,
    jacobi_approx_probe,
    jacobi_decompose,
    jacobi_field_defects,
    jacobi_orthogonality,
    jacobi_tensor,
    k_constant_sample,
    kfield_identities,
    moment_bound,
    nonintegrability_pairing,
    parse_direction,
    phi_of_t,
    phi_second_variation,
    project_K,
    second_variation_gap,
    stability_probe,
)

logger = logging.getLogger(__name__)

DEFAULT_RANK = {DRIFT: SCALAR, P: VECTOR, L: SYM2}
FLOOR = 1e-10


def _model(config, default: str) -> ModelGeometry:
    text = config.get("model") or default
    if text.startswith("torus"):
        raise ValidationError(f"The {config['command']} suite runs on gaussian or cylinder models, not {text}.")
    return parse_model(text)


def _seed(config) -> int:
    return int(option("seed", config.get("seed")))


def _timed(report: Report, started: float) -> Report:
    report.timing["seconds"] = time.perf_counter() - started
    return report


# ---------------------------------------------------------------------------
# Curvature identities
# ---------------------------------------------------------------------------


def _identity_target(config, seed: int, count: int) -> tuple[Chart, bool, np.ndarray]:
    text = config.get("model") or "torus:3"
    rng = np.random.default_rng(seed)
    if text.startswith("torus"):
        dim = int(text.split(":")[1])
        chart = Chart.random_torus(dim, seed, option("trig_amplitude"), option("trig_modes"))
        return chart, False, rng.uniform(0.0, 2.0 * np.pi, size=(count, dim))
    model = parse_model(text)
    return model.chart, True, rng.uniform(-1.5, 1.5, size=(count, model.n))


def identities(config) -> Report:
    started = time.perf_counter()
    report = Report("identities", config)
    seed = _seed(config)
    chart, soliton, points = _identity_target(config, seed, int(config.get("points", 20)))
    fields = TestFields.random(chart.dim, seed)
    step = float(option("identity_step", config.get("step")))
    tol_analytic = option("identity_tol_analytic")
    min_order = option("identity_min_order")
    coarse_chart = chart.with_jet_mode(JetMode.finite_difference(step))
    fine_chart = coarse_chart.with_jet_mode(coarse_chart.jet_mode.halved())

    if soliton:
        model = parse_model(config["model"])
        report.add(
            Check.at_most("soliton_defect", "the model is a normalised gradient shrinker", model.soliton_defect(), 0.0, FLOOR)
        )

    names = [config["identity"]] if config.get("identity") else list(IDENTITY_IDS)
    names = [name for name in names if soliton or not IDENTITIES[name].soliton_only]
    rows = []
    for name in names:
        claim = IDENTITIES[name].claim
        runners = [IdentityRunner(c, name, fields) for c in (chart, coarse_chart, fine_chart)]
        analytic, orders, fine_values = [], [], []
        for x in points:
            exact, coarse, fine = (runner.residual(x) for runner in runners)
            order = math.log2(coarse / fine) if coarse > 0 and fine > 0 else math.nan
            analytic.append(exact)
            fine_values.append(fine)
            orders.append(order)
            rows.append({"identity": name, "point": list(map(float, x)), "analytic": exact, "coarse": coarse,
                         "fine": fine, "order": order})
        converged = [o >= min_order or f <= FLOOR for o, f in zip(orders, fine_values)]
        finite = [o for o in orders if math.isfinite(o)]
        report.add(
            Check.at_most(f"{name}.analytic", claim, max(analytic), 0.0, tol_analytic),
            Check.verdict(f"{name}.fd_order", claim, min(finite) if finite else math.nan, min_order, 0.0, all(converged)),
            Check.info(f"{name}.fd_residual", claim, max(fine_values)),
        )
    report.add_series("residuals", rows)
    return _timed(report, started)


# ---------------------------------------------------------------------------
# Spectra and the Poisson solve
# ---------------------------------------------------------------------------


def harmonic_multiplicity(ambient: int, k: int) -> int:
    """Dimension of degree-k spherical harmonics on the sphere in R^ambient."""
    if k == 0:
        return 1
    if k == 1:
        return ambient
    return comb(k + ambient - 1, ambient - 1) - comb(k + ambient - 3, ambient - 1)


def expected_drift_spectrum(model: ModelGeometry, rank: str, degree: int, sphere_degree: int) -> np.ndarray | None:
    """Closed-form -drift spectrum on the polynomial span, or None where none is known here."""
    components = {SCALAR: 1, VECTOR: model.n, SYM2: model.n * (model.n + 1) // 2}[rank]
    euclid = [(j / 2.0, comb(j + model.m - 1, model.m - 1)) for j in range(degree + 1)]
    if model.variant == GAUSSIAN:
        pieces = euclid
    elif rank == SCALAR:
        r2 = model.sphere_radius**2
        sphere = [(k * (k + model.ell - 1) / r2, harmonic_multiplicity(model.ell + 1, k)) for k in range(sphere_degree + 1)]
        pieces = [(a + b, ma * mb) for a, ma in sphere for b, mb in euclid]
    else:
        return None
    values = [value for value, mult in pieces for _ in range(mult * components)]
    return np.sort(np.asarray(values))


def expected_block_spectrum(model: ModelGeometry, tag: str, block: str, degree: int, sphere_degree: int) -> np.ndarray:
    """Closed-form spectrum of -drift or -L on a parallel cylinder sym2 block.

    Both frames are parallel, so the operators act on the scalar coefficient;
    on u g^1 the curvature term adds 2 kappa u = u to L.
    """
    scalar = expected_drift_spectrum(model, SCALAR, degree, sphere_degree)
    if block == EUCLIDEAN_BLOCK:
        return np.sort(np.repeat(scalar, model.m * (model.m + 1) // 2))
    if block == CONFORMAL_BLOCK:
        return scalar - 1.0 if tag == L else scalar
    raise ValueError(f"No closed form on the {block!r} block.")


def _pure_gauge_rhs(basis, rng) -> tuple[np.ndarray, TensorField]:
    geo = geometry(basis.chart)
    coeffs = rng.standard_normal(basis.size)
    star = geo.divf_star(basis.combine(coeffs))
    return coeffs, TensorField.closed_form(SYM2, basis.chart, lambda x: -2.0 * star(x))


def spectrum(config) -> Report:
    started = time.perf_counter()
    report = Report("spectrum", config)
    model = _model(config, "gaussian:2")
    op = config.get("op") or DRIFT
    rank = config.get("rank") or DEFAULT_RANK[op]
    degree = int(option("degree", config.get("degree")))
    sphere_degree = int(option("sphere_degree", config.get("sphere_degree")))
    tol = option("spectral_tol")
    threshold = option("kernel_threshold")
    rng = np.random.default_rng(_seed(config))

    basis = build_basis(model, rank, degree, sphere_degree)
    operator = assemble(basis, op)
    pairs = eigenpairs(operator, config.get("k"))
    report.add_series(
        "eigenpairs",
        (
            {"index": i, "eigenvalue": pair.eigenvalue, "residual": pair.residual, "divf_norm": pair.divf_norm}
            for i, pair in enumerate(pairs)
        ),
    )
    report.add(
        Check.at_most("symmetry", f"the {op} matrix is symmetric for the weighted pairing", operator.symmetry_gap, 0.0, tol),
        Check.info("quadrature_gram_drift", "Gram matrix drift under a finer quadrature", basis.gram_drift),
    )

    if op in (DRIFT, L):
        expected = expected_drift_spectrum(model, rank, degree, sphere_degree)
        if expected is not None:
            computed = np.sort(operator.sign * np.linalg.eigvalsh(operator.symmetric()))
            gap = float(np.abs(computed - expected).max()) if computed.shape == expected.shape else math.inf
            report.add(Check.at_most("closed_form_spectrum", "eigenvalues are k/2 with polynomial multiplicities "
                                     "(plus sphere eigenvalues on cylinders)", gap, 0.0, tol))

    if op in (DRIFT, L) and model.variant == CYLINDER and rank == SYM2:
        report.add(Check.at_most("block_coupling", f"{op} preserves the sphere, mixed and Euclidean sym2 blocks",
                                 block_coupling(model, op, degree, sphere_degree), 0.0, tol))
        for block in (CONFORMAL_BLOCK, EUCLIDEAN_BLOCK):
            part = assemble(build_basis(model, SYM2, degree, sphere_degree, block=block), op)
            computed = np.sort(part.sign * np.linalg.eigvalsh(part.symmetric()))
            expected = expected_block_spectrum(model, op, block, degree, sphere_degree)
            gap = float(np.abs(computed - expected).max()) if computed.shape == expected.shape else math.inf
            report.add(Check.at_most(f"closed_form_spectrum.{block}", f"the {block} block carries the scalar spectrum"
                                     + (" shifted by -1" if op == L and block == CONFORMAL_BLOCK else ""), gap, 0.0, tol))

    if op == P and model.variant == GAUSSIAN:
        _poisson_checks(report, basis, operator, rng, int(config.get("samples", 3)), tol, threshold)

    if op == DRIFT and model.variant == CYLINDER and rank == SCALAR:
        _cylinder_checks(report, model, degree, sphere_degree, config.get("amplitude"))

    if model.variant == GAUSSIAN and rank == VECTOR:
        for name, gap in relation_gaps(basis).items():
            report.add(Check.at_most(f"relation.{name}", "P intertwines with div_f, grad div_f and L div_f*", gap, 0.0,
                                     option("identity_tol_fd")))
        interp = interpolation_checks(basis)
        report.add(
            Check.at_most("interpolation", "||grad Y||^2 + ||div_f Y||^2 <= 2 ||Y|| ||(2P + kappa) Y||",
                          float((interp[:, 0] - interp[:, 1]).max()), 0.0, FLOOR),
        )
        conc = concentration_checks(basis)
        report.add(
            Check.at_most("concentration", "int |Y|^2 (f - n) e^{-f} <= 4 int |grad Y|^2 e^{-f}",
                          float((conc[:, 0] - conc[:, 1]).max()), 0.0, FLOOR),
            Check.at_most("splitting", "gradients are orthogonal to div_f-free eigenfields", splitting_check(basis), 0.0,
                          tol),
        )

    if model.variant == GAUSSIAN and op == P:
        sym = build_basis(model, SYM2, min(degree, 3), sphere_degree)
        vec = build_basis(model, VECTOR, min(degree, 3), sphere_degree)
        q = model.weighted_quadrature(2 * min(degree, 3) + 2)
        worst = max(
            adjointness_gap(sym.field(rng.standard_normal(sym.size)), vec.field(rng.standard_normal(vec.size)), q)
            for _ in range(int(config.get("samples", 3)))
        )
        report.add(Check.at_most("adjointness", "div_f* is the weighted adjoint of div_f", worst, 0.0, FLOOR))
    return _timed(report, started)


def _poisson_checks(report: Report, basis, operator, rng, samples: int, tol: float, threshold: float) -> None:
    model = basis.model
    values, vectors = np.linalg.eigh(operator.symmetric())
    kernel = values < threshold
    expected_kernel = model.n * (model.n + 1) // 2
    report.add(
        Check.close_to("kernel_dimension", "the kernel of P is spanned by translations and rotations",
                       int(kernel.sum()), expected_kernel, 0.0),
        Check.at_least("first_nonzero", "the first nonzero eigenvalue of P is at least 1/4",
                       float(values[~kernel].min()) if (~kernel).any() else math.inf, 0.25, tol),
        Check.at_most("commutator", "the drift Laplacian and P commute", commutator_gap(basis), 0.0, 1e-9),
    )
    mu_lambda = check_mu_lambda(basis)
    report.add(
        Check.at_most("mu_lambda", "mu - 2 lambda <= 1/2 on joint eigenfields", mu_lambda.max_gap, 0.5, tol),
        Check.at_most("mu_lambda_equality", "equality holds exactly for div_f-free eigenfields",
                      mu_lambda.inconsistencies, 0, 0.0),
    )
    report.add_series("mu_lambda", ({"mu": row.mu, "lambda": row.lam, "divf_norm": row.divf_norm}
                                    for row in mu_lambda.rows))
    kernel_vectors = vectors[:, kernel]
    residuals, mismatches = [], []
    for _ in range(samples):
        coeffs, h = _pure_gauge_rhs(basis, rng)
        solution = solve_P(h, basis)
        target = -(coeffs - kernel_vectors @ (kernel_vectors.T @ coeffs))
        residuals.append(solution.relative_residual)
        mismatches.append(float(np.linalg.norm(solution.Y.coeffs - target)) / max(float(np.linalg.norm(target)), 1e-300))
    report.add(
        Check.at_most("solve_P_residual", "2 P Y = div_f h is solved up to roundoff", max(residuals), 0.0, 1e-6),
        Check.at_most("solve_P_generator", "pure-gauge data recovers minus its generator modulo Killing fields",
                      max(mismatches), 0.0, 1e-6),
    )


def _cylinder_checks(report: Report, model: ModelGeometry, degree: int, sphere_degree: int, amplitude) -> None:
    probe = spectral_gap_probe(model, 0.0, degree=degree, sphere_degree=sphere_degree)
    low = [row for row in probe.rows if row.mu <= 1.0 + 1e-6]
    report.add(
        Check.close_to("half_multiplicity", "eigenvalue 1/2 has multiplicity n - l (the Euclidean coordinates)",
                       probe.half_multiplicity, model.m, 0.0),
        Check.at_most("hessian_norm", "||Hess v||^2 = (mu - 1/2) mu ||v||^2 for the lowest eigenfunctions",
                      max(abs(row.hess_norm2 - row.hess_target) for row in low), 0.0, 1e-6),
    )
    report.add_series("cylinder_rows", ({"mu": row.mu, "grad_norm2": row.grad_norm2, "hess_norm2": row.hess_norm2}
                                        for row in probe.rows))
    if amplitude:
        perturbed = spectral_gap_probe(model, float(amplitude), degree=degree, sphere_degree=sphere_degree)
        report.add_series("perturbed", ({"mu": mu, "baseline": base} for mu, base in
                                        zip(perturbed.eigenvalues, perturbed.baseline)))
        report.add(Check.info("perturbed_shift", "lowest eigenvalues move continuously with the metric",
                              max(abs(d) for d in perturbed.drift)))


# ---------------------------------------------------------------------------
# Growth
# ---------------------------------------------------------------------------


def _window(config):
    if "window_lo" in config:
        return (config["window_lo"], config["window_hi"])
    return None


def growth(config) -> Report:
    started = time.perf_counter()
    report = Report("growth", config)
    model = _model(config, "gaussian:2")
    window = _window(config)
    radii = default_radii(window)
    rigid = option("slope_tol_rigid")
    loose = option("slope_tol_bound")
    tol = option("spectral_tol")

    for profile in killing_growth(model, radii, window=window):
        target = 0.0 if profile.label.startswith("d") else 2.0
        report.add(Check.close_to(f"killing.{profile.label}", "Killing fields grow like r^2 (rotations) or r^0 "
                                  "(translations)", profile.slope, target, rigid))
        report.add_series("killing", ({"field": profile.label, "r": r, "I": v}
                                      for r, v in zip(profile.radii, profile.values)))

    degree = min(int(option("degree", config.get("degree"))), 4)
    basis = build_basis(model, VECTOR, degree, int(option("sphere_degree", config.get("sphere_degree"))))
    for index, (lam, Y) in enumerate(eigenfields(basis, int(config.get("samples", 6)))):
        grad_div, z = eigenfield_growth(Y, lam, model, radii, window=window)
        split = z_decompose(Y, lam, basis.quadrature)
        report.add(
            Check.verdict(f"eigen{index}.grad_divf", "I of grad div_f Y grows at most like r^(4 lambda)",
                          grad_div.slope, grad_div.bound, loose, grad_div.within(loose)),
            Check.verdict(f"eigen{index}.Z", "I of Z grows at most like r^(8 lambda + 2)", z.slope, z.bound, loose,
                          z.within(loose)),
            Check.at_most(f"eigen{index}.divf_Z", "Z is div_f-free", split.divf_Z, 0.0, tol),
            Check.at_most(f"eigen{index}.pythagoras", "||Y||^2 = ||Z||^2 + ||grad div_f Y||^2 / (lambda + kappa)^2",
                          split.pythagoras_gap, 0.0, tol),
        )
        report.add_series("eigenfields", [{"index": index, "lambda": lam, "grad_divf_slope": grad_div.slope,
                                           "z_slope": z.slope}])

    rng = np.random.default_rng(_seed(config))
    _, h = _pure_gauge_rhs(basis, rng)
    profile = poisson_growth(solve_P(h, basis), model, radii, window=window)
    report.add(Check.info("poisson_growth", "grad div_f Y grows at most like r^(4 beta) for P Y = V", profile.slope,
                          profile.bound))
    return _timed(report, started)


# ---------------------------------------------------------------------------
# Variations
# ---------------------------------------------------------------------------


def _directions(model: ModelGeometry, config) -> list[PerturbationPath]:
    amplitude = float(config.get("amplitude", 1.0))
    if config.get("direction"):
        return [parse_direction(model, config["direction"], amplitude)]
    texts = ["gauge:W=grad(x1^2-2)", "block:dx1dx1"]
    if model.variant == CYLINDER:
        texts.insert(0, "jacobi:x1^2-2")
    paths = [parse_direction(model, text, amplitude) for text in texts]
    if model.variant == CYLINDER:
        paths.append(PerturbationPath.along(conformal_perturbation(model, _seed(config)), label="conformal"))
    return paths


def variation(config) -> Report:
    started = time.perf_counter()
    report = Report("variation", config)
    model = _model(config, "cylinder:2,3")
    step = float(option("t_step", config.get("step")))
    tol = option("variation_tol")
    x = model.sample_points()[0]

    paths = _directions(model, config)
    background = float(np.abs(phi_of_t(paths[0], 0.0, x)).max())
    report.add(Check.at_most("background", "phi vanishes on the unperturbed soliton", background, 0.0,
                             option("identity_tol_analytic")))
    for path in paths:
        for formula in (SOLITON, GENERAL):
            gap = first_variation_gap(path, x, step, formula)
            name = f"first.{path.label}.{formula}"
            report.add(
                Check.at_most(name, "phi' = L h / 2 + Hess_w + div_f* div_f h along the path" if formula == SOLITON
                              else "phi' = kappa h - Ric' - Hess'_f along the path", gap.gap, 0.0, tol),
                Check.verdict(f"{name}.order", "centered differences converge at second order", gap.order, 2.0, 0.5,
                              abs(gap.order - 2.0) <= 0.5 or gap.gap <= FLOOR),
            )
            report.add_series("first_variation", [{"direction": path.label, "formula": formula, **gap.as_dict()}])

    rng = np.random.default_rng(_seed(config))
    if model.variant == CYLINDER:
        _cylinder_variation(report, model, step, rng)
    _k_checks(report, model.m, rng, int(config.get("samples", 4)))
    return _timed(report, started)


def _cylinder_variation(report: Report, model: ModelGeometry, step: float, rng) -> None:
    tol2 = option("second_variation_tol")
    x = model.sample_points()[0]
    basis = KBasis(model.m).on(model)
    for index, label in enumerate(basis.labels):
        gap = second_variation_gap(model, basis.element(index), x, step)
        report.add(Check.at_most(f"second.{label}", "phi'' = -|grad u|^2 g^1 - l u Hess_u - (l/2) du du along the "
                                 "Jacobi direction", gap.gap, 0.0, tol2))

    origin = np.zeros(model.n)
    spot = np.asarray(phi_second_variation(model.geometry, model.ell, basis.element(0))(jnp.asarray(origin)))
    target = np.zeros((model.n, model.n))
    target[model.ell, model.ell] = 4.0 * model.ell
    report.add(Check.at_most("second.spot_origin", "phi'' at the origin equals 4 l dx dx for u = x1^2 - 2",
                             float(np.abs(spot - target).max()), 0.0, tol2))

    coeffs = rng.standard_normal(basis.size)
    defects = jacobi_field_defects(model, coeffs)
    orth = jacobi_orthogonality(model, coeffs)
    pairing = nonintegrability_pairing(model, coeffs, step)
    report.add(
        Check.at_most("jacobi.divf", "v g^1 is div_f-free", defects["divf"], 0.0, FLOOR),
        Check.at_most("jacobi.L", "v g^1 lies in the kernel of L", defects["L"], 0.0, FLOOR),
        Check.at_most("jacobi.orthogonality", "v g^1 is orthogonal to Hessians and to the image of div_f*",
                      orth.worst, 0.0, FLOOR),
        Check.at_most("nonintegrability", "int <phi'', u g^1> e^{-f} = -l int u |grad v|^2 e^{-f}",
                      pairing.relative_gap, 0.0, 1e-3),
    )

    v = basis.evaluator(coeffs)
    h = jacobi_tensor(model, lambda y: 1e-3 * v(y))
    k = TensorField.closed_form(SCALAR, model.chart, lambda y: 0.5e-3 * model.ell * v(y))
    split = jacobi_decompose(model, h, k)
    projection = project_K(model, TensorField.closed_form(SCALAR, model.chart, v))
    report.add(
        Check.at_most("decomposition", "h splits into u g^1, a trace-free part and a remainder",
                      split.reconstruction_error, 0.0, FLOOR),
        Check.at_most("projection_idempotent", "projecting onto K twice changes nothing", projection.idempotence,
                      0.0, FLOOR),
    )
    exact = jacobi_approx_probe(model, jacobi_tensor(model, v))
    jf = jacobi_tensor(model, v).function
    metric = model.chart.metric_eval

    def mixed(y):
        return jf(y) + 0.1 * jnp.exp(-jnp.sum(model.euclidean(y) ** 2) / 8.0) * metric(y)

    approx = jacobi_approx_probe(model, TensorField.closed_form(SYM2, model.chart, mixed))
    report.add(
        Check.at_most("jacobi_approx.exact", "a Jacobi tensor is its own Jacobi approximation", exact.lhs, 0.0, 1e-8),
        Check.info("jacobi_approx.ratio", "||h - v g^1||_W22 / (||L h|| + ||div_f h||) off the Jacobi directions",
                   approx.ratio),
    )
    stability = stability_probe(model, h, k)
    report.add(
        Check.info("stability.first_constant", "Jacobi-corrected stability, first inequality", stability.first_constant),
        Check.info("stability.second_constant", "Jacobi-corrected stability, second inequality",
                   stability.second_constant),
    )
    report.add_series("stability", [stability.as_dict()])


def _k_checks(report: Report, m: int, rng, samples: int) -> None:
    size = k_basis(m).size
    worst = {"grad": 0.0, "hess": 0.0, "pairing": 0.0, "membership": 0.0}
    for _ in range(samples):
        gaps = kfield_identities(m, rng.standard_normal(size)).gaps
        worst = {key: max(worst[key], gaps[key]) for key in worst}
    claims = {
        "grad": "||grad v||^2 = ||v||^2 on K",
        "hess": "2 ||Hess v||^2 = ||v||^2 on K",
        "pairing": "int u |grad v|^2 e^{-f} = ||u||^2",
        "membership": "u = |grad v|^2 - Laplacian |grad v|^2 lies in K",
    }
    for key, value in worst.items():
        report.add(Check.at_most(f"K.{key}", claims[key], value, 0.0, FLOOR))
    constants = k_constant_sample(m, max(samples, 4), int(rng.integers(1 << 31)))
    report.add(Check.verdict("K.constant", "||u||^2 >= C ||v||^4 with C > 0 on the unit sphere of K",
                             float(constants.min()), 0.0, 0.0, bool(constants.min() > 0.0)))

    def eta(x):
        return 0.3 * (x[0] ** 2 - 2.0)

    bound = moment_bound(m, eta, p=2.0, q_exp=2.0, epsilon=0.1)
    report.add(Check.verdict("moment_bound", "int eta^2 |x|^p e^{-f} <= c ||eta||^(2 - eps) for "
                             "|eta| <= 1 + |x|^q", bound.lhs, bound.rhs, 0.0, bound.holds))


# ---------------------------------------------------------------------------
# Gauge fixing
# ---------------------------------------------------------------------------


def _bump_pair(model: ModelGeometry, amplitude: float = 5e-2):
    n = model.n
    shape = np.zeros((n, n))
    shape[0, n - 1] = shape[n - 1, 0] = 1.0
    shape[0, 0] = 0.5
    shape = jnp.asarray(shape)

    def h(x):
        return amplitude * jnp.exp(-(x @ x) / 8.0) * shape

    def k(x):
        return amplitude * x[0] * jnp.exp(-(x @ x) / 8.0)

    return h, k


def _load_input(config, model: ModelGeometry) -> tuple[TensorField, TensorField]:
    h0 = read_field(config["input"], model.chart)
    if h0.rank != SYM2 or not h0.is_grid:
        raise ValidationError("Gauge input must be a symmetric 2-tensor on a grid.")
    if config.get("input_k"):
        k0 = read_field(config["input_k"], model.chart)
    else:
        k0 = TensorField.on_grid(SCALAR, model.chart, h0.grid, np.zeros(h0.grid.shape))
    return h0, k0


def gauge_fix(config) -> Report:
    started = time.perf_counter()
    report = Report("gauge_fix", config)
    model = _model(config, "gaussian:2")
    if model.variant != GAUSSIAN:
        raise ValidationError("The gauge loop runs on Gaussian models.")
    radius = float(option("cutoff_radius", config.get("R")))
    generator = quadratic_generator(model, config.get("epsilon"))

    pure = not config.get("input")
    if pure:
        grid = gauge_grid(model, config.get("half_width"), config.get("grid_points"))
        start = pure_gauge(model, generator, grid, radius)
        h0, k0 = start.h, start.k
    else:
        h0, k0 = _load_input(config, model)
        grid = h0.grid

    states = gauge_iterate(model, h0, k0, radius, config.get("iters"))
    records = [state.record for state in states]
    report.add_series("iterations", (record.as_dict() for record in records))
    first, last = records[0], records[-1]
    factor = option("plateau_factor")
    quadratic = max(10.0 * first.h_sup**2, FLOOR)
    report.add(
        Check.at_most("balance", "balancing keeps the center of mass at quadratic size each iteration",
                      max(record.center for record in records[1:]) if len(records) > 1 else first.center, quadratic, 0.0),
        Check.info("iterations", "iterations until ||div_f h|| stops halving", len(records) - 1),
        Check.info("interpolation_error", "largest spline interpolation error in a pullback",
                   max(record.interpolation_error for record in records)),
    )

    if pure:
        floor = discretization_floor(model, h0, k0, generator, radius)
        live = [(a.divf_w12, b.divf_w12) for a, b in zip(records, records[1:]) if a.divf_w12 > 10.0 * floor.divf_w12]
        ratios = [a / b if b > 0 else math.inf for a, b in live]
        report.add(
            Check.info("floor", "||div_f h|| after one exact inverse step", floor.divf_w12),
            Check.verdict("halving", "||div_f h|| at least halves per iteration above ten times the floor",
                          min(ratios) if ratios else math.inf, factor, 0.0, all(r >= factor for r in ratios)),
            Check.at_most("plateau_at_floor", "the loop plateaus within ten times the floor", last.divf_w12,
                          10.0 * floor.divf_w12, 0.0),
            Check.at_most("sup_reduction", "pure-gauge input is fixed: sup |h| on {b <= R - 1} drops a hundredfold",
                          last.core_sup, 1e-2 * first.core_sup, 0.0),
        )
        back = round_trip(model, generator, grid, radius)
        report.add(Check.at_most("round_trip", "flowing by W then by -W returns the background metric up to "
                                 "interpolation error", back.residual, back.bound, FLOOR))

    _linearization_checks(report, model, generator)
    return _timed(report, started)


def _linearization_checks(report: Report, model: ModelGeometry, generator) -> None:
    h, k = _bump_pair(model)
    points = model.sample_points()
    sweeps = [
        linearization_gap(model.chart, generator, points, h, step=1e-1),
        divf_quadratic_gap(model, generator, h, amplitude=1e-1),
    ]
    center = cb_derivative_gap(model, generator, h, k, step=1e-1)
    sweeps.append(center.sweep)
    claims = {
        "linearization": "d/dt Phi_t^*(g + h) = -2 div_f* V + Lie-transport of h",
        "divf_quadratic": "div_f(Phi^*(g + h) - g) = div_f h - 2 P V up to quadratic terms",
        "center_derivative": "the center of mass moves by F(V) to first order",
    }
    for sweep in sweeps:
        report.add(Check.close_to(f"{sweep.label}.power", claims[sweep.label], sweep.power, 2.0, 0.2))
        report.add_series("amplitude_sweeps", ({"sweep": sweep.label, "amplitude": a, "residual": r}
                                               for a, r in zip(sweep.amplitudes, sweep.residuals)))
    report.add(Check.verdict("center_derivative.bound", "|F^i(V) - int <d_i, V> e^{-f}| is bounded by its integrand",
                             float(np.abs(center.formula - center.translation_part).max()), float(center.bound.max()),
                             0.0, center.bound_holds))


SUITES = {
    "identities": identities,
    "spectrum": spectrum,
    "growth": growth,
    "variation": variation,
    "gauge_fix": gauge_fix,
}
