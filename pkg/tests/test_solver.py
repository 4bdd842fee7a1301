import numpy as np
import pytest

from mpsckit import solver
from mpsckit.numeric import Tolerances
from mpsckit.problem import (Bipartition, all_branches, branch, index_sets,
                             load_problem)

TOL = Tolerances()
CFG = SolveConfig = solver.SolveConfig(lhs_starts=4, max_inner=120)


class TestProjectBranch:
    def test_already_feasible_is_fixed(self):
        P = load_problem("vars x1 x2\nmin x1\nineq -x1\n", from_path=False)
        br = all_branches(P)[0]
        y = solver.project_branch(P, br, [0.3, 0.7], CFG, TOL)
        assert np.allclose(y, [0.3, 0.7], atol=1e-9)

    def test_orthogonal_projection_on_plane(self):
        P = load_problem("vars x1 x2\nmin x1\neq x1\n", from_path=False)
        br = all_branches(P)[0]
        y = solver.project_branch(P, br, [0.3, 0.7], CFG, TOL)
        assert np.allclose(y, [0.0, 0.7], atol=1e-6)

    def test_parabola_projection(self):
        P = load_problem("vars x1 x2\nmin x1\neq x2 - x1^2\n", from_path=False)
        br = all_branches(P)[0]
        y = solver.project_branch(P, br, [0.2, 0.1], CFG, TOL)
        assert float(br.residual(y)) <= 1e-8
        # grid oracle over the parabola arc
        t = np.linspace(-1.0, 1.0, 20001)
        arc = np.stack([t, t * t], axis=1)
        best = np.min(np.linalg.norm(arc - np.array([0.2, 0.1]), axis=1))
        assert np.linalg.norm(y - [0.2, 0.1]) <= best + 1e-4

    def test_ray2d_branch_collapses_to_origin(self, corpus):
        P = corpus["ray2d"]
        I = index_sets(P, [0.0, 0.0], TOL)
        br = branch(P, I, Bipartition((), (0,)))
        y = solver.project_branch(P, br, [0.2, 0.1], CFG, TOL)
        assert float(br.residual(y)) <= 1e-8
        # the tau_feas tube admits parabola points with x1 ~ sqrt(tau_feas)
        assert np.allclose(y, [0.0, 0.0], atol=2e-4)


class TestSolveBranch:
    def test_equality_pins_solution(self):
        P = load_problem("vars x\nmin x^2\neq x - 1\n", from_path=False)
        sol = solver.solve_branch(P, all_branches(P)[0], [3.0], CFG, TOL)
        assert sol.status == "feasible"
        assert sol.value == pytest.approx(1.0, abs=1e-6)
        assert sol.x[0] == pytest.approx(1.0, abs=1e-6)

    def test_wedge3d_g_branch(self, corpus):
        P = corpus["wedge3d"]
        I = index_sets(P, [0.0, 0.0, 0.0], TOL)
        br = branch(P, I, Bipartition((0,), ()))
        sol = solver.solve_branch(P, br, [0.5, 0.5, 0.5], CFG, TOL)
        assert sol.status == "feasible"
        assert sol.value == pytest.approx(0.0, abs=1e-6)
        assert sol.x[0] == pytest.approx(0.0, abs=1e-6)

    def test_contradictory_equalities_stall(self):
        P = load_problem("vars x\nmin x\neq x\neq x - 1\n", from_path=False)
        sol = solver.solve_branch(P, all_branches(P)[0], [0.0], CFG, TOL)
        assert sol.status == "infeasible-stall"


class TestSolveEnumerative:
    def test_axes2d_best_is_origin(self, corpus):
        sol = solver.solve_enumerative(corpus["axes2d"], [1.0, 1.0], CFG, TOL)
        assert sol.status == "feasible"
        assert sol.value == pytest.approx(0.0, abs=1e-6)
        assert np.allclose(sol.x, [0.0, 0.0], atol=1e-5)

    def test_unconstrained_quadratic(self):
        P = load_problem("vars x1 x2\nmin (x1 - 1)^2 + (x2 + 2)^2\n", from_path=False)
        sol = solver.solve_enumerative(P, [5.0, 5.0], CFG, TOL)
        assert np.allclose(sol.x, [1.0, -2.0], atol=1e-5)

    def test_ray2d(self, corpus):
        sol = solver.solve_enumerative(corpus["ray2d"], [0.4, 0.3], CFG, TOL)
        assert sol.status == "feasible"
        assert sol.value == pytest.approx(0.0, abs=1e-6)
        assert sol.x[0] == pytest.approx(0.0, abs=1e-5)


class TestSolvePenaltyDescent:
    def test_smooth_regime_matches_enumerative(self):
        P = load_problem("vars x1 x2\nmin (x1 - 1)^2 + (x2 + 2)^2\nineq x1 - 2\n",
                         from_path=False)
        ref = solver.solve_enumerative(P, [0.0, 0.0], CFG, TOL)
        sol = solver.solve_penalty_descent(P, [0.0, 0.0], CFG, TOL)
        assert sol.status == "feasible"
        assert sol.value == pytest.approx(ref.value, abs=1e-6)

    def test_axes2d_from_11(self, corpus):
        ref = solver.solve_enumerative(corpus["axes2d"], [1.0, 1.0], CFG, TOL)
        sol = solver.solve_penalty_descent(corpus["axes2d"], [1.0, 1.0], CFG, TOL)
        assert sol.status == "feasible"
        assert sol.value >= ref.value - 1e-6

    def test_empty_feasible_set_fails(self):
        P = load_problem("vars x\nmin x\neq x\neq x - 1\n", from_path=False)
        sol = solver.solve_penalty_descent(P, [0.3], CFG, TOL)
        assert sol.status in ("failure", "infeasible-stall")


def random_instance(rng):
    n = int(rng.integers(1, 4))
    names = [f"x{j+1}" for j in range(n)]
    lines = [f"vars {' '.join(names)}"]
    center = rng.uniform(-1, 1, size=n)
    lines.append("min " + " + ".join(
        f"(x{j+1} - {center[j]:.4f})^2" for j in range(n)))
    for _ in range(int(rng.integers(0, 3))):
        j = int(rng.integers(0, n))
        lines.append(f"ineq {rng.choice(['-', ''])}x{j+1} - {rng.uniform(0, 1):.4f}")
    for _ in range(int(rng.integers(0, 3))):
        j, k = rng.integers(0, n, size=2)
        a, b = rng.uniform(-0.8, 0.8, size=2)
        lines.append(f"switch x{j+1} - {a:.4f} | x{k+1} - {b:.4f}")
    return load_problem("\n".join(lines) + "\n", from_path=False)


class TestProperties:
    def test_penalty_descent_never_beats_enumerative(self):
        rng = np.random.default_rng(42)
        cfg = solver.SolveConfig(lhs_starts=3, max_inner=100)
        kept = 0
        while kept < 20:
            P = random_instance(rng)
            if P.l > 2:
                continue
            x0 = rng.uniform(-1.5, 1.5, size=P.n)
            ref = solver.solve_enumerative(P, x0, cfg, TOL)
            if ref.status != "feasible":
                continue
            kept += 1
            sol = solver.solve_penalty_descent(P, x0, cfg, TOL)
            if sol.status == "feasible":
                assert sol.value >= ref.value - 1e-6

    def test_deterministic(self, corpus):
        a = solver.solve_enumerative(corpus["axes2d"], [1.0, 1.0], CFG, TOL)
        b = solver.solve_enumerative(corpus["axes2d"], [1.0, 1.0], CFG, TOL)
        assert np.array_equal(a.x, b.x) and a.value == b.value


class TestStationaritySanity:
    def test_feasible_solutions_are_nearly_w_stationary(self, corpus):
        for name in ("axes2d", "ray2d", "diagonal2d"):
            sol = solver.solve_enumerative(corpus[name], [0.7, -0.4], CFG, TOL)
            assert sol.status == "feasible"
            solver.annotate_stationarity(corpus[name], sol, CFG, TOL)
            assert sol.stationarity["W_within_10_tau_kkt"], (name, sol.stationarity)

    def test_annotation_skips_infeasible(self):
        P = load_problem("vars x\nmin x\neq x\neq x - 1\n", from_path=False)
        sol = solver.solve_branch(P, all_branches(P)[0], [0.0], CFG, TOL)
        solver.annotate_stationarity(P, sol, CFG, TOL)
        assert sol.stationarity == {}
