"""Cone constructions at a feasible point.

The switching feasible set decomposes into branch sets over bipartitions of
the biactive index set, and every cone here is carried as a finite union of
polyhedral pieces in that same decomposition.  The tangent cone is never
computed exactly; it is sampled by projecting perturbed points onto each
branch set.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasiblePointError
from .numeric import Generators, Polyhedron, Tolerances, enumerate_generators, nullspace
from .problem import Bipartition, IndexSets, MpscProblem, bipartitions, branch, index_sets

# symbolic one-pair cones (subsets of R^2)
AXIS_A = "RxO"      # R x {0}
AXIS_B = "OxR"      # {0} x R
CROSS = "cross"     # {(a,b) : ab = 0}
ORIGIN = "origin"   # {(0,0)}


@dataclass(frozen=True)
class CrossConeKind:
    """Tangent / Frechet-normal / limiting-normal cones of the cross set."""

    case: str  # a_zero_b_nonzero | a_nonzero_b_zero | both_zero
    tangent: str
    frechet_normal: str
    limiting_normal: str


def cross_cones(a: float, b: float, tol: Tolerances) -> CrossConeKind:
    """Cone triple of {(u,v): uv = 0} at a point (a, b) of the set."""
    az, bz = abs(a) <= tol.tau_act, abs(b) <= tol.tau_act
    if abs(a * b) > tol.tau_feas or not (az or bz):
        raise InfeasiblePointError(f"({a}, {b}) is not in the cross set")
    if az and bz:
        return CrossConeKind("both_zero", CROSS, ORIGIN, CROSS)
    if az:
        return CrossConeKind("a_zero_b_nonzero", AXIS_B, AXIS_A, AXIS_A)
    return CrossConeKind("a_nonzero_b_zero", AXIS_A, AXIS_B, AXIS_B)


@dataclass
class ConePiece:
    """Polyhedral cone {d : A_eq d = 0, A_le d <= 0} tagged by its bipartition."""

    A_eq: np.ndarray
    A_le: np.ndarray
    tag: Bipartition | None = None

    @property
    def dim(self):
        return (self.A_eq if self.A_eq.size else self.A_le).shape[1]

    def polyhedron(self):
        return Polyhedron.make(self.dim, A_eq=self.A_eq if self.A_eq.size else None,
                               A_le=self.A_le if self.A_le.size else None)

    def violation(self, d):
        """Worst normalized constraint violation of a direction."""
        d = np.asarray(d, float)
        v = 0.0
        for row in self.A_eq:
            nrm = np.linalg.norm(row)
            if nrm > 0:
                v = max(v, abs(row @ d) / nrm)
        for row in self.A_le:
            nrm = np.linalg.norm(row)
            if nrm > 0:
                v = max(v, (row @ d) / nrm)
        return v

    def contains(self, d, slack):
        return self.violation(d) <= slack

    def is_subspace(self, tol: Tolerances) -> bool:
        """True when the inequality rows vanish on the equality nullspace."""
        if self.A_le.size == 0:
            return True
        N = nullspace(self.A_eq, tol) if self.A_eq.size else np.eye(self.dim)
        if N.shape[1] == 0:
            return True
        return bool(np.max(np.abs(self.A_le @ N)) <= 1e-10)

    def generators(self, tol: Tolerances) -> Generators:
        return enumerate_generators(self.polyhedron(), tol)

    def lineality_basis(self, tol: Tolerances) -> np.ndarray:
        stacked = np.vstack([self.A_eq, self.A_le]) if (self.A_eq.size or self.A_le.size) \
            else np.zeros((0, self.dim))
        return nullspace(stacked, tol)


@dataclass
class ConeUnion:
    pieces: list = field(default_factory=list)

    def member(self, d, tol: Tolerances):
        """Membership with slack tau_feas * (1 + ||d||); returns (bool, piece)."""
        d = np.asarray(d, float)
        slack = tol.tau_feas * (1.0 + np.linalg.norm(d))
        for i, piece in enumerate(self.pieces):
            if piece.contains(d, slack):
                return True, i
        return False, None

    def member_angular(self, d, tol: Tolerances):
        """Directional membership: some piece within angular_tol of the unit d."""
        d = np.asarray(d, float)
        nrm = np.linalg.norm(d)
        if nrm == 0.0:
            return True, 0 if self.pieces else None
        u = d / nrm
        for i, piece in enumerate(self.pieces):
            if piece.violation(u) <= np.sin(tol.angular_tol):
                return True, i
        return False, None


def member(cone: ConeUnion, d, tol: Tolerances):
    return cone.member(d, tol)


# ---------------------------------------------------------------------------
# gradient stacks
# ---------------------------------------------------------------------------

def _grad_rows(P: MpscProblem, x, items):
    """Stack gradients for (kind, idx) items; kinds g/h/G/H."""
    rows = []
    for kind, i in items:
        if kind == "g":
            rows.append(P.grad(P.g[i], x))
        elif kind == "h":
            rows.append(P.grad(P.h[i], x))
        elif kind == "G":
            rows.append(P.grad(P.switch_pairs[i][0], x))
        else:
            rows.append(P.grad(P.switch_pairs[i][1], x))
    return np.array(rows) if rows else np.zeros((0, P.n))


def piece_for_bipartition(P: MpscProblem, x, I: IndexSets, b: Bipartition,
                          extra_eq=(), active_ineq=None) -> ConePiece:
    """Linearized branch cone: g rows <= 0, h/G/H rows = 0 for the branch."""
    ineq_idx = I.I_g if active_ineq is None else active_ineq
    A_le = _grad_rows(P, x, [("g", i) for i in ineq_idx])
    eq_items = list(extra_eq)
    eq_items += [("h", j) for j in range(P.p)]
    eq_items += [("G", k) for k in sorted(set(I.I_G) | set(b.beta1))]
    eq_items += [("H", k) for k in sorted(set(I.I_H) | set(b.beta2))]
    A_eq = _grad_rows(P, x, eq_items)
    return ConePiece(A_eq=A_eq, A_le=A_le, tag=b)


def linearization_cone(P: MpscProblem, x, tol: Tolerances) -> ConeUnion:
    """Union of branch linearization cones over all bipartitions."""
    x = np.asarray(x, float)
    I = index_sets(P, x, tol)
    return ConeUnion([piece_for_bipartition(P, x, I, b) for b in bipartitions(I)])


def critical_cone(P: MpscProblem, x, tol: Tolerances, mult=None) -> ConeUnion:
    """Linearization directions that are first-order neutral for f.

    Without a multiplier each piece is intersected with grad f . d <= 0;
    with an S-multiplier the active inequalities with positive lambda turn
    into equalities instead.
    """
    x = np.asarray(x, float)
    I = index_sets(P, x, tol)
    pieces = []
    for b in bipartitions(I):
        if mult is None:
            piece = piece_for_bipartition(P, x, I, b)
            gf = P.grad(P.f, x)[None, :]
            A_le = np.vstack([piece.A_le, gf]) if piece.A_le.size else gf
            pieces.append(ConePiece(A_eq=piece.A_eq, A_le=A_le, tag=b))
        else:
            lam = np.asarray(mult.lam, float)
            plus = tuple(i for i in I.I_g if lam[i] > tol.tau_act)
            rest = tuple(i for i in I.I_g if i not in plus)
            pieces.append(piece_for_bipartition(
                P, x, I, b, extra_eq=[("g", i) for i in plus], active_ineq=rest))
    return ConeUnion(pieces)


def critical_subspace(P: MpscProblem, x, tol: Tolerances) -> np.ndarray:
    """Orthonormal basis of the subspace where every active row vanishes."""
    x = np.asarray(x, float)
    I = index_sets(P, x, tol)
    items = [("g", i) for i in I.I_g] + [("h", j) for j in range(P.p)]
    items += [("G", k) for k in sorted(set(I.I_G) | set(I.I_GH))]
    items += [("H", k) for k in sorted(set(I.I_H) | set(I.I_GH))]
    return nullspace(_grad_rows(P, x, items), tol)


# ---------------------------------------------------------------------------
# sampled tangent cone
# ---------------------------------------------------------------------------

@dataclass
class TangentCloud:
    directions: np.ndarray          # (N, n) unit rows, pooled
    by_branch: dict                 # bipartition label -> (N_b, n)

    def __len__(self):
        return self.directions.shape[0]


# a projected sample only witnesses a tangent direction if its step kept a
# fixed fraction of the perturbation radius: points in the residual-tolerance
# tube of a branch contract to the tube scale and carry no directional
# information (tangentially intersecting equalities make that tube fat)
CONTRACTION_MIN = 0.05


def sample_tangent_directions(P: MpscProblem, x, tol: Tolerances) -> TangentCloud:
    """Project perturbed points onto each branch set and normalize the steps.

    Directions whose step contracted below CONTRACTION_MIN of the sample
    radius are discarded; an empty cloud is a valid outcome (isolated
    feasible point).
    """
    from .solver import project_branch_cloud

    x = np.asarray(x, float)
    I = index_sets(P, x, tol)
    pooled = []
    by_branch = {}
    for bi, b in enumerate(bipartitions(I)):
        br = branch(P, I, b)
        rng = tol.rng("tangent", bi)
        U = rng.normal(size=(tol.n_samples, P.n))
        U /= np.linalg.norm(U, axis=1, keepdims=True)
        radii = tol.eps_ball * rng.uniform(size=(tol.n_samples, 1)) ** (1.0 / P.n)
        Y = project_branch_cloud(P, br, x[None, :] + radii * U, tol)
        steps = Y - x[None, :]
        norms = np.linalg.norm(steps, axis=1)
        keep = (br.residual(Y) <= tol.tau_feas) \
            & (norms >= CONTRACTION_MIN * radii[:, 0]) \
            & (norms > tol.eps_ball * 1e-6)
        dirs = steps[keep] / norms[keep, None]
        by_branch[b.label()] = dirs
        if dirs.size:
            pooled.append(dirs)
    directions = np.vstack(pooled) if pooled else np.zeros((0, P.n))
    return TangentCloud(directions=directions, by_branch=by_branch)
