"""
Verification module for the built-in invariant suites.

Each suite measures one family of invariants (closed forms, geometry,
diffeomorphism family, map step, projection) and reports PASS/FAIL with the
measured value. The level selects grid and sample sizes.
"""

import logging
from dataclasses import dataclass

import numpy as np

from geometry.collar import (
    CollarParams,
    dG_dell,
    dz2_norm_quadrature,
    dz2_norms,
    ell0,
    gauss_curvature,
    metric_G,
)
from geometry.moebius import CutoffPair, DiffeoParams, gram_orthogonality_report, h_map, tensor_quadrature
from runner.template_loader import render_template
from solver.hopf import MetricState, dl_dt_closed_form, energy_metric_derivative, flow_coefficients, project_hopf, reconstruct
from solver.plateau import StepOptions, boundary_gradient, isotonic_project, minimize_step, objective
from surface.curves import coaxial_circles, load_curve_preset
from surface.mesh import Grid, energy, initial_map, l2_norm, assemble_operators

LEVELS = {
    "quick": {"ells": (1.0,), "b_moduli": (0.6,), "grid": (16, 24), "steps": 10, "pava": 100, "theta": 384},
    "full": {"ells": (0.1, 1.0, 5.0), "b_moduli": (0.3, 0.6, 0.9), "grid": (64, 48), "steps": 100, "pava": 500, "theta": 512},
}


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    detail: str


def _suite_norms(level: dict) -> SuiteResult:
    worst = 0.0
    for ell in level["ells"]:
        params = CollarParams(eta=1.0, ell=ell)
        closed = dz2_norms(params)[1]
        worst = max(worst, abs(dz2_norm_quadrature(params) - closed) / closed)
    small = dz2_norms(CollarParams(1.0, 1e-3))[1] * 1e-9 / (32.0 * np.pi**5)
    large = dz2_norms(CollarParams(1.0, 1e3))[1] * 1e12 / (128.0 * np.pi**4)
    passed = worst < 1e-6 and abs(small - 1) < 0.01 and abs(large - 1) < 0.01
    return SuiteResult("norms", passed, f"quadrature rel {worst:.2e}, small {small:.4f}, large {large:.4f}")


def _suite_geometry(level: dict, rng: np.random.Generator) -> SuiteResult:
    x = np.linspace(-0.95, 0.95, 39)
    curvature = max(float(np.max(np.abs(gauss_curvature(CollarParams(1.0, ell), x) + 1.0))) for ell in level["ells"])
    worst = 0.0
    for _ in range(50):
        ell, xi = float(rng.uniform(0.05, 5.0)), float(rng.uniform(-1.0, 1.0))
        params = CollarParams(1.0, ell)
        d_xx, d_tt = dG_dell(params, xi)
        g_xx, g_tt = metric_G(params, xi)
        s_prime_sq = g_xx / g_tt
        # horizontal: ∂_ℓ G is proportional to s'^2 dx^2 - dθ^2
        worst = max(worst, abs(float(d_xx + d_tt * s_prime_sq)) / abs(float(d_xx)))
    passed = curvature < 1e-3 and worst < 1e-6
    return SuiteResult("geometry", passed, f"|K+1| {curvature:.2e}, horizontality {worst:.2e}")


def _suite_moebius(level: dict, cutoffs: CutoffPair, rng: np.random.Generator) -> SuiteResult:
    problems = cutoffs.violations()
    x = rng.uniform(-0.5, 0.5, 200)
    theta = rng.uniform(0.0, 2.0 * np.pi, 200)
    p = DiffeoParams(0.5 + 0.2j, -0.3j, 1.0, -2.0)
    _, image = h_map(p, cutoffs, x, theta)
    identity_error = float(np.max(np.abs(image - theta)))
    if identity_error > 0:
        problems.append(f"h not the identity on |x| <= 1/2 ({identity_error:.1e})")

    quadrature = tensor_quadrature(48, level["theta"])
    params = CollarParams(1.0, ell0(1.0))
    worst = 0.0
    for modulus in level["b_moduli"]:
        for psi in (0.0, 1.1):
            report = gram_orthogonality_report(
                DiffeoParams(modulus * np.exp(1j * psi), 0.5, 0.3, 0.0), params, cutoffs, quadrature
            )
            for first, second in (("abs_b_plus", "arg_b_plus"), ("abs_b_plus", "phi_plus"), ("arg_b_plus", "phi_plus")):
                worst = max(worst, abs(report.value(first, second)))
    if worst >= 1e-6:
        problems.append(f"orthogonality {worst:.2e}")

    norms = [
        gram_orthogonality_report(DiffeoParams(a, 0.5), params, cutoffs, quadrature).norms[0]
        for a in (0.5, 0.7, 0.9)
    ]
    if not (norms[0] < norms[1] < norms[2]):
        problems.append("‖L_Y|b|G‖ not increasing in |b|")
    detail = "; ".join(problems) if problems else f"orthogonality {worst:.2e}, norms {norms[0]:.3g}<{norms[1]:.3g}<{norms[2]:.3g}"
    return SuiteResult("moebius", not problems, detail)


def _brute_force_isotonic(y: np.ndarray) -> np.ndarray:
    """Best projection over all partitions into contiguous pooled blocks with nondecreasing means."""
    n = len(y)
    best, best_cost = None, np.inf
    for mask in range(1 << (n - 1)):
        cuts = [0] + [i + 1 for i in range(n - 1) if mask >> i & 1] + [n]
        fitted = np.concatenate([np.full(b - a, y[a:b].mean()) for a, b in zip(cuts, cuts[1:])])
        if np.all(np.diff(fitted) >= -1e-15):
            cost = float(np.sum((fitted - y) ** 2))
            if cost < best_cost:
                best, best_cost = fitted, cost
    return best


def _suite_minimizer(level: dict, rng: np.random.Generator) -> SuiteResult:
    pava = 0.0
    for _ in range(level["pava"]):
        y = rng.normal(size=int(rng.integers(1, 9)))
        pava = max(pava, float(np.max(np.abs(isotonic_project(y) - _brute_force_isotonic(y)))))

    n_x, n_theta = level["grid"]
    grid = Grid(n_x, n_theta)
    curves = coaxial_circles(1.0, 0.8)
    state = MetricState.initial(grid)
    g = state.metric
    v = initial_map(grid, curves)
    mass = assemble_operators(g, grid).mass
    violation = 0.0
    for _ in range(level["steps"]):
        values = v.values.copy()
        interior = grid.interior_nodes
        values[interior] += 0.05 * rng.normal(size=(len(interior), v.dim))
        noisy = v.with_values(values)
        h = float(rng.uniform(1e-3, 1e-1))
        w, _ = minimize_step(noisy, g, h, curves, StepOptions(max_inner=20))
        e_v = energy(noisy, g)
        lhs = energy(w, g) + 0.5 / h * l2_norm(w.values - noisy.values, mass) ** 2
        violation = max(violation, (lhs - e_v) / e_v)

    # finite-difference check of the boundary gradient on asymmetric data
    h = 0.05
    offset = load_curve_preset("offset-circles")
    start = initial_map(grid, offset)
    values = start.values.copy()
    values[grid.interior_nodes] += 0.03 * rng.normal(size=(len(grid.interior_nodes), start.dim))
    noisy = start.with_values(values)
    grad_plus, grad_minus = boundary_gradient(noisy, start, g, h, offset)
    direction_plus = rng.normal(size=n_theta)
    direction_minus = rng.normal(size=n_theta)
    eps = 1e-6

    def at(t):
        shifted = noisy.with_boundary(
            offset, noisy.boundary_plus + t * direction_plus, noisy.boundary_minus + t * direction_minus
        )
        return objective(start, shifted, g, h)

    numeric = (at(eps) - at(-eps)) / (2.0 * eps)
    analytic = float(grad_plus @ direction_plus + grad_minus @ direction_minus)
    scale = np.linalg.norm(np.concatenate([grad_plus, grad_minus])) * np.sqrt(2.0 * n_theta)
    fd = abs(numeric - analytic) / max(abs(analytic), 1e-3 * scale, 1e-300)
    passed = pava < 1e-10 and violation <= 1e-11 and fd < 1e-5
    return SuiteResult("minimizer", passed, f"pava {pava:.1e}, energy inequality {violation:.1e}, gradient fd {fd:.1e}")


def _suite_projection(level: dict, rng: np.random.Generator) -> SuiteResult:
    n_x, n_theta = level["grid"]
    grid = Grid(n_x, n_theta)
    curves = coaxial_circles(1.0, 0.8)
    state = MetricState.initial(grid)
    coeffs = rng.normal(size=7)
    recovered, _ = project_hopf(reconstruct(coeffs, state) * 4.0, state)
    idempotence = float(np.max(np.abs(recovered - coeffs)) / np.max(np.abs(coeffs)))

    u = initial_map(grid, curves)
    c, _ = flow_coefficients(u, state)
    closed = dl_dt_closed_form(u, state)
    consistency = abs(c[0] - closed) / max(abs(closed), 1e-300)

    velocity = reconstruct(c, state)
    predicted = energy_metric_derivative(u, state, velocity)
    speed_sq = float(c @ state.gram @ c)
    response = abs(predicted + speed_sq) / speed_sq

    errors = []
    for dt in (1e-3, 5e-4, 2.5e-4):
        moved = state.with_vector(state.as_vector() + dt * c)
        errors.append(abs(energy(u, moved.metric) - energy(u, state.metric) + dt * speed_sq))
    order = float(np.log2(errors[0] / errors[1])) if errors[1] > 0 else np.inf
    passed = idempotence <= 1e-10 and consistency < 0.01 and response < 1e-6 and order >= 1.9
    return SuiteResult(
        "projection",
        passed,
        f"idempotence {idempotence:.1e}, dl/dt {consistency:.2e}, response {response:.1e}, order {order:.2f}",
    )


def run_suites(level: str = "quick", cutoffs: CutoffPair | None = None, seed: int = 20240611) -> list[SuiteResult]:
    """Run every suite; cutoffs replaces the cut-off pair of the moebius suite."""
    params = LEVELS[level]
    rng = np.random.default_rng(seed)
    cutoffs = cutoffs or CutoffPair()
    suites = [
        ("norms", lambda: _suite_norms(params)),
        ("geometry", lambda: _suite_geometry(params, rng)),
        ("moebius", lambda: _suite_moebius(params, cutoffs, rng)),
        ("minimizer", lambda: _suite_minimizer(params, rng)),
        ("projection", lambda: _suite_projection(params, rng)),
    ]
    results = []
    for name, suite in suites:
        try:
            result = suite()
        except Exception as e:
            logging.exception(f"Verification suite crashed: {e}")
            result = SuiteResult(name, False, f"crashed: {e}")
        logging.info(f"{result.name}: {'PASS' if result.passed else 'FAIL'} ({result.detail})")
        results.append(result)
    return results


def render_report(results: list[SuiteResult], level: str) -> str:
    return render_template(
        "verify_report.txt.j2",
        level=level,
        suites=results,
        passed=sum(r.passed for r in results),
    )
