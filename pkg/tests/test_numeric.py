import numpy as np
import pytest
from scipy.optimize import linprog

from mpsckit import numeric
from mpsckit.errors import SizeCapError
from mpsckit.numeric import Polyhedron, Tolerances

TOL = Tolerances()


class TestRank:
    def test_rank_one(self):
        assert numeric.rank_tol([[1, 0], [2, 0]], TOL) == 1

    def test_identity(self):
        assert numeric.rank_tol(np.eye(3), TOL) == 3

    def test_near_singular(self):
        # sigma2/sigma1 < 1e-8, confirmed against the raw SVD
        M = np.array([[1.0, 1.0], [1.0, 1.0 + 1e-12]])
        s = np.linalg.svd(M, compute_uv=False)
        assert s[1] / s[0] < 1e-8
        assert numeric.rank_tol(M, TOL) == 1

    def test_zero_and_empty(self):
        assert numeric.rank_tol(np.zeros((2, 2)), TOL) == 0
        assert numeric.rank_tol(np.zeros((0, 3)), TOL) == 0

    def test_rank_equals_rank_of_transpose(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            m, n = rng.integers(1, 6, size=2)
            r = int(rng.integers(0, min(m, n) + 1))
            M = rng.normal(size=(m, r)) @ rng.normal(size=(r, n)) if r else np.zeros((m, n))
            assert numeric.rank_tol(M, TOL) == numeric.rank_tol(M.T, TOL) == r


class TestNullspace:
    def test_identity_has_empty_basis(self):
        assert numeric.nullspace(np.eye(2), TOL).shape == (2, 0)

    def test_zero_row_spans_plane(self):
        B = numeric.nullspace(np.zeros((1, 2)), TOL)
        assert B.shape == (2, 2)
        assert np.allclose(B.T @ B, np.eye(2))

    def test_stacked_gradients_full_rank(self):
        M = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        assert numeric.nullspace(M, TOL).shape == (2, 0)

    def test_contract(self):
        rng = np.random.default_rng(3)
        for _ in range(30):
            m, n = rng.integers(1, 6, size=2)
            M = rng.normal(size=(m, n))
            M[rng.integers(0, m)] = 0.0
            B = numeric.nullspace(M, TOL)
            assert B.shape[1] == n - numeric.rank_tol(M, TOL)
            if B.size:
                assert np.max(np.abs(M @ B)) <= 1e-10
                assert np.allclose(B.T @ B, np.eye(B.shape[1]), atol=1e-12)


class TestEig:
    def test_negative_diag(self):
        w, _ = numeric.eig_sym(np.diag([-2.0, -2.0]))
        assert np.allclose(w, [-2.0, -2.0])

    def test_zero(self):
        w, _ = numeric.eig_sym(np.zeros((3, 3)))
        assert np.array_equal(w, np.zeros(3))

    def test_swap_matrix(self):
        w, V = numeric.eig_sym([[0.0, 1.0], [1.0, 0.0]])
        assert np.allclose(w, [-1.0, 1.0])
        M = np.array([[0.0, 1.0], [1.0, 0.0]])
        for k in range(2):
            assert np.linalg.norm(M @ V[:, k] - w[k] * V[:, k]) <= 1e-10

    def test_rejects_nonsymmetric(self):
        with pytest.raises(ValueError):
            numeric.eig_sym([[0.0, 1.0], [0.0, 0.0]])


class TestLpSolve:
    def test_single_multiplier_feasible(self):
        # lambda >= 0 with -lambda + 1 = 0
        P = Polyhedron.make(1, A_eq=[[-1.0]], b_eq=[-1.0], A_le=[[-1.0]], b_le=[0.0])
        res = numeric.lp_solve(None, P, sense="feasibility")
        assert res.status == "optimal"
        assert np.allclose(res.x, [1.0])

    def test_inconsistent_system_infeasible(self):
        # lambda >= 0 with 1 - lambda = 0 and -3 + lambda = 0
        P = Polyhedron.make(1, A_eq=[[-1.0], [1.0]], b_eq=[-1.0, 3.0],
                            A_le=[[-1.0]], b_le=[0.0])
        assert numeric.lp_solve(None, P, sense="feasibility").status == "infeasible"

    def test_min_on_simplex(self):
        P = Polyhedron.make(2, A_eq=[[1.0, 1.0]], b_eq=[1.0],
                            A_le=[[-1.0, 0.0], [0.0, -1.0]], b_le=[0.0, 0.0])
        res = numeric.lp_solve([1.0, 0.0], P, sense="min")
        assert res.status == "optimal"
        assert res.value == pytest.approx(0.0, abs=1e-9)
        assert np.allclose(res.x, [0.0, 1.0], atol=1e-9)

    def test_unbounded(self):
        P = Polyhedron.make(1, A_le=[[-1.0]], b_le=[0.0])
        assert numeric.lp_solve([-1.0], P, sense="min").status == "unbounded"

    def test_max_sense(self):
        P = Polyhedron.make(1, A_le=[[1.0], [-1.0]], b_le=[2.0, 0.0])
        res = numeric.lp_solve([1.0], P, sense="max")
        assert res.value == pytest.approx(2.0, abs=1e-9)

    def _random_polyhedron(self, rng, n):
        m = int(rng.integers(1, 5))
        A = rng.normal(size=(m, n))
        b = rng.normal(size=m)
        q = int(rng.integers(0, 2))
        Aeq = rng.normal(size=(q, n))
        beq = rng.normal(size=q)
        return Polyhedron.make(n, A_eq=Aeq if q else None, b_eq=beq if q else None,
                               A_le=A, b_le=b)

    def test_feasibility_vs_rejection_sampling(self):
        rng = np.random.default_rng(42)
        for _ in range(50):
            n = int(rng.integers(1, 4))
            P = self._random_polyhedron(rng, n)
            res = numeric.lp_solve(None, P, sense="feasibility")
            X = rng.uniform(-5, 5, size=(100_000, n))
            ok = np.ones(len(X), dtype=bool)
            if P.A_le.size:
                ok &= np.all(X @ P.A_le.T <= P.b_le + 1e-9, axis=1)
            if P.A_eq.size:
                ok &= np.all(np.abs(X @ P.A_eq.T - P.b_eq) <= 1e-9, axis=1)
            if res.status == "infeasible":
                assert not np.any(ok)

    def test_against_scipy_linprog(self):
        rng = np.random.default_rng(7)
        for _ in range(40):
            n = int(rng.integers(1, 4))
            P = self._random_polyhedron(rng, n)
            c = rng.normal(size=n)
            mine = numeric.lp_solve(c, P, sense="min")
            ref = linprog(c, A_ub=P.A_le if P.A_le.size else None,
                          b_ub=P.b_le if P.A_le.size else None,
                          A_eq=P.A_eq if P.A_eq.size else None,
                          b_eq=P.b_eq if P.A_eq.size else None,
                          bounds=(None, None), method="highs")
            if ref.status == 2:
                assert mine.status == "infeasible"
            elif ref.status == 3:
                assert mine.status == "unbounded"
            else:
                assert mine.status == "optimal"
                assert mine.value == pytest.approx(ref.fun, abs=1e-6)


class TestEnumerateGenerators:
    def test_standard_simplex(self):
        P = Polyhedron.make(2, A_eq=[[1.0, 1.0]], b_eq=[1.0],
                            A_le=[[-1.0, 0.0], [0.0, -1.0]], b_le=[0.0, 0.0])
        gen = numeric.enumerate_generators(P, TOL)
        vs = sorted(tuple(np.round(v, 9)) for v in gen.vertices)
        assert vs == [(0.0, 1.0), (1.0, 0.0)]
        assert gen.rays == [] and gen.lineality == []

    def test_nonnegative_orthant(self):
        P = Polyhedron.make(2, A_le=[[-1.0, 0.0], [0.0, -1.0]], b_le=[0.0, 0.0])
        gen = numeric.enumerate_generators(P, TOL)
        assert len(gen.vertices) == 1 and np.allclose(gen.vertices[0], 0.0)
        rays = sorted(tuple(np.round(r, 9)) for r in gen.rays)
        assert rays == [(0.0, 1.0), (1.0, 0.0)]

    def test_halfline_on_diagonal(self):
        P = Polyhedron.make(2, A_eq=[[1.0, -1.0]], b_eq=[0.0],
                            A_le=[[-1.0, 0.0]], b_le=[0.0])
        gen = numeric.enumerate_generators(P, TOL)
        assert len(gen.vertices) == 1 and np.allclose(gen.vertices[0], 0.0, atol=1e-9)
        assert len(gen.rays) == 1
        assert np.allclose(gen.rays[0], np.array([1.0, 1.0]) / np.sqrt(2))

    def test_lineality_subspace(self):
        # {d : d2 = 0} in R^2 has a one-dimensional lineality space
        P = Polyhedron.make(2, A_eq=[[0.0, 1.0]], b_eq=[0.0])
        gen = numeric.enumerate_generators(P, TOL)
        assert len(gen.lineality) == 1
        assert abs(gen.lineality[0][0]) == pytest.approx(1.0)
        assert gen.lineality[0][1] == pytest.approx(0.0, abs=1e-12)

    def test_empty_reported_infeasible(self):
        P = Polyhedron.make(1, A_eq=[[1.0], [1.0]], b_eq=[0.0, 1.0])
        with pytest.raises(ValueError, match="infeasible"):
            numeric.enumerate_generators(P, TOL)

    def test_size_cap(self):
        P = Polyhedron.make(13)
        with pytest.raises(SizeCapError):
            numeric.enumerate_generators(P, TOL)

    def test_vertex_validity_random(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            n = int(rng.integers(1, 4))
            m = int(rng.integers(n, 6))
            A = rng.normal(size=(m, n))
            b = rng.uniform(0.5, 2.0, size=m)  # contains the origin
            P = Polyhedron.make(n, A_le=A, b_le=b)
            gen = numeric.enumerate_generators(P, TOL)
            for v in gen.vertices:
                assert P.contains(v, TOL.tau_feas)
                act = [A[i] for i in range(m) if abs(A[i] @ v - b[i]) <= 1e-7]
                assert numeric.rank_tol(np.array(act), TOL) >= n


class TestTolerances:
    def test_defaults(self):
        t = Tolerances()
        assert (t.tau_rank, t.tau_act, t.tau_feas, t.tau_psd) == (1e-8,) * 4
        assert (t.angular_tol, t.seed, t.n_samples, t.eps_ball) == (0.05, 42, 512, 1e-2)

    def test_positive_validation(self):
        with pytest.raises(ValueError):
            Tolerances(tau_rank=0.0)

    def test_rng_streams_deterministic(self):
        t = Tolerances()
        a = t.rng("wcr", 0).uniform(size=4)
        b = t.rng("wcr", 0).uniform(size=4)
        c = t.rng("wcr", 1).uniform(size=4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)
