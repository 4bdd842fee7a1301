"""MPSC instances: file format, evaluation, index sets, branch problems.

An instance is
    min f(x)  s.t.  g_i(x) <= 0,  h_j(x) = 0,  G_k(x) * H_k(x) = 0,
and every analysis below is driven by which constraints are active at a
feasible point.  Constraint indices are 0-based throughout.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import expr as ex
from .errors import InfeasiblePointError, ParseError, SizeCapError
from .numeric import Tolerances

MAX_BIACTIVE = 16


@dataclass(frozen=True)
class MpscProblem:
    n: int
    var_names: tuple
    f: ex.Expr
    g: tuple
    h: tuple
    switch_pairs: tuple  # ((G_k, H_k), ...)

    @property
    def m(self):
        return len(self.g)

    @property
    def p(self):
        return len(self.h)

    @property
    def l(self):
        return len(self.switch_pairs)

    # -- evaluation helpers ------------------------------------------------

    def value(self, e, x):
        return ex.evaluate(e, x)

    def grad(self, e, x):
        return ex.gradient(e, x, self.n)

    def hess(self, e, x):
        return ex.hessian(e, x)

    def grad_batch(self, e, X):
        """Gradients of one expression over a batch, shape (N, n)."""
        return ex.gradient(e, np.asarray(X, float), self.n)

    def constraint_values(self, x):
        """(g, h, G, H) value arrays at a point or batch."""
        x = np.asarray(x, float)
        g = np.stack([ex.evaluate(e, x) for e in self.g], axis=-1) if self.g else _empty(x, 0)
        h = np.stack([ex.evaluate(e, x) for e in self.h], axis=-1) if self.h else _empty(x, 0)
        G = np.stack([ex.evaluate(Gk, x) for Gk, _ in self.switch_pairs], axis=-1) \
            if self.switch_pairs else _empty(x, 0)
        H = np.stack([ex.evaluate(Hk, x) for _, Hk in self.switch_pairs], axis=-1) \
            if self.switch_pairs else _empty(x, 0)
        return g, h, G, H

    def residual(self, x):
        """l2 constraint violation: sqrt(sum g+^2 + sum h^2 + sum min(G^2,H^2))."""
        g, h, G, H = self.constraint_values(x)
        viol = np.sum(np.maximum(g, 0.0) ** 2, axis=-1) \
            + np.sum(h ** 2, axis=-1) \
            + np.sum(np.minimum(G ** 2, H ** 2), axis=-1)
        return np.sqrt(viol)

    def is_feasible(self, x, tol: Tolerances):
        return bool(np.all(self.residual(x) <= tol.tau_feas))


def _empty(x, width):
    shape = (width,) if np.ndim(x) == 1 else (np.shape(x)[0], width)
    return np.zeros(shape)


@dataclass(frozen=True)
class IndexSets:
    """Active-set partition at a feasible point (0-based indices)."""

    I_g: tuple
    I_h: tuple
    I_G: tuple
    I_H: tuple
    I_GH: tuple

    def to_json(self):
        return {"I_g": list(self.I_g), "I_h": list(self.I_h), "I_G": list(self.I_G),
                "I_H": list(self.I_H), "I_GH": list(self.I_GH)}


@dataclass(frozen=True)
class Bipartition:
    """Disjoint split (beta1, beta2) of the biactive switching indices."""

    beta1: tuple
    beta2: tuple

    def label(self):
        return f"({set(self.beta1) or '{}'},{set(self.beta2) or '{}'})"


@dataclass(frozen=True)
class BranchProblem:
    """Standard NLP obtained by pinning G_k = 0 and/or H_k = 0 per switch index.

    Inequalities are all of g; equalities are h plus G over eq_G and H over
    eq_H.  Branches built at a feasible point pin every switch index on at
    least one side, so the branch feasible set sits inside the instance's.
    """

    problem: MpscProblem
    eq_G: tuple
    eq_H: tuple
    bipartition: Bipartition | None = None

    def equalities(self):
        eqs = list(self.problem.h)
        eqs += [self.problem.switch_pairs[k][0] for k in self.eq_G]
        eqs += [self.problem.switch_pairs[k][1] for k in self.eq_H]
        return eqs

    def label(self):
        marks = []
        for k in range(self.problem.l):
            if k in self.eq_G and k in self.eq_H:
                marks.append("B")
            elif k in self.eq_G:
                marks.append("G")
            elif k in self.eq_H:
                marks.append("H")
            else:
                marks.append("-")
        return "".join(marks) if marks else "unconstrained"

    def residual(self, x):
        g, h, G, H = self.problem.constraint_values(x)
        viol = np.sum(np.maximum(g, 0.0) ** 2, axis=-1) + np.sum(h ** 2, axis=-1)
        if self.eq_G:
            viol = viol + np.sum(G[..., list(self.eq_G)] ** 2, axis=-1)
        if self.eq_H:
            viol = viol + np.sum(H[..., list(self.eq_H)] ** 2, axis=-1)
        return np.sqrt(viol)


# ---------------------------------------------------------------------------
# file format
# ---------------------------------------------------------------------------

def load_problem(source: str, *, from_path: bool | None = None) -> MpscProblem:
    """Load an instance from a file path or from literal text.

    Strings containing a newline are treated as text; anything else as a
    path (override with from_path).
    """
    if from_path is None:
        from_path = "\n" not in source
    text = open(source).read() if from_path else source

    var_names = None
    f = None
    g, h, pairs = [], [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, _, rest = line.partition(" ")
        rest = rest.strip()
        try:
            if head == "vars":
                if var_names is not None:
                    raise ParseError("duplicate vars line", line=lineno)
                names = tuple(rest.split())
                if not names:
                    raise ParseError("vars line needs at least one name", line=lineno)
                if len(set(names)) != len(names):
                    raise ParseError("duplicate variable names", line=lineno)
                var_names = names
                continue
            if var_names is None:
                raise ParseError("vars line must come first", line=lineno)
            if head == "min":
                if f is not None:
                    raise ParseError("duplicate min line", line=lineno)
                f = ex.parse_expr(rest, var_names)
            elif head == "ineq":
                g.append(ex.parse_expr(rest, var_names))
            elif head == "eq":
                h.append(ex.parse_expr(rest, var_names))
            elif head == "switch":
                left, bar, right = rest.partition("|")
                if not bar:
                    raise ParseError("switch line needs '<expr> | <expr>'", line=lineno)
                pairs.append((ex.parse_expr(left.strip(), var_names),
                              ex.parse_expr(right.strip(), var_names)))
            else:
                raise ParseError(f"unknown directive {head!r}", line=lineno)
        except ParseError as err:
            if err.line is None:
                raise ParseError(str(err), line=lineno) from err
            raise
    if var_names is None:
        raise ParseError("missing vars line", line=0)
    if f is None:
        raise ParseError("missing min line", line=0)
    return MpscProblem(len(var_names), var_names, f, tuple(g), tuple(h), tuple(pairs))


def problem_text(P: MpscProblem) -> str:
    """Canonical re-rendering of an instance in the file format."""
    lines = ["vars " + " ".join(P.var_names), "min " + ex.to_text(P.f, P.var_names)]
    lines += ["ineq " + ex.to_text(e, P.var_names) for e in P.g]
    lines += ["eq " + ex.to_text(e, P.var_names) for e in P.h]
    lines += [f"switch {ex.to_text(G, P.var_names)} | {ex.to_text(H, P.var_names)}"
              for G, H in P.switch_pairs]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# index sets and branches
# ---------------------------------------------------------------------------

def index_sets(P: MpscProblem, x, tol: Tolerances) -> IndexSets:
    """Active sets at a feasible point; |value| <= tau_act decides activity."""
    x = np.asarray(x, float)
    r = float(P.residual(x))
    if r > tol.tau_feas:
        raise InfeasiblePointError(f"point is infeasible (residual {r:.3g})")
    g, _, G, H = P.constraint_values(x)
    I_g = tuple(i for i in range(P.m) if abs(g[i]) <= tol.tau_act)
    I_G, I_H, I_GH = [], [], []
    for k in range(P.l):
        gz, hz = abs(G[k]) <= tol.tau_act, abs(H[k]) <= tol.tau_act
        if gz and hz:
            I_GH.append(k)
        elif gz:
            I_G.append(k)
        elif hz:
            I_H.append(k)
        else:
            raise InfeasiblePointError(
                f"switch pair {k} has neither side active (G={G[k]:.3g}, H={H[k]:.3g})")
    return IndexSets(I_g, tuple(range(P.p)), tuple(I_G), tuple(I_H), tuple(I_GH))


def bipartitions(I: IndexSets) -> list[Bipartition]:
    """All 2^|I_GH| bipartitions in lexicographic order over membership masks."""
    biactive = tuple(sorted(I.I_GH))
    if len(biactive) > MAX_BIACTIVE:
        raise SizeCapError(f"|I_GH| = {len(biactive)} exceeds cap {MAX_BIACTIVE}")
    out = []
    for mask in range(2 ** len(biactive)):
        beta1 = tuple(k for b, k in enumerate(biactive) if mask >> b & 1)
        beta2 = tuple(k for b, k in enumerate(biactive) if not mask >> b & 1)
        out.append(Bipartition(beta1, beta2))
    return out


def branch(P: MpscProblem, I: IndexSets, b: Bipartition) -> BranchProblem:
    """Branch problem for a bipartition of the biactive set at a point."""
    eq_G = tuple(sorted(set(I.I_G) | set(b.beta1)))
    eq_H = tuple(sorted(set(I.I_H) | set(b.beta2)))
    return BranchProblem(P, eq_G, eq_H, bipartition=b)


def branch_from_assignment(P: MpscProblem, eq_G, eq_H) -> BranchProblem:
    """Branch from a global sign assignment (used by the enumerative solver)."""
    return BranchProblem(P, tuple(sorted(eq_G)), tuple(sorted(eq_H)))


def all_branches(P: MpscProblem) -> list[BranchProblem]:
    """Branches over all switch indices; their union covers the feasible set."""
    if P.l > MAX_BIACTIVE:
        raise SizeCapError(f"l = {P.l} exceeds cap {MAX_BIACTIVE}")
    out = []
    for choice in itertools.product((0, 1), repeat=P.l):
        eq_G = tuple(k for k in range(P.l) if choice[k] == 0)
        eq_H = tuple(k for k in range(P.l) if choice[k] == 1)
        out.append(branch_from_assignment(P, eq_G, eq_H))
    return out
