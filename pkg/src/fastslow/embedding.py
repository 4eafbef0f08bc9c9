"""Formal flow embeddings for maps with unipotent linear part.

Two directions:

* :func:`flow_time1_jet` computes the jet of the time-1 map of a polynomial
  vector field with nilpotent linear part, by Picard iteration.  Because the
  linear part is nilpotent, every integrand is a polynomial in the time
  variable and all integrals are evaluated exactly.

* :func:`takens_embed_unipotent` inverts that computation: given a map jet
  whose linear part is unipotent, it solves degree by degree for the unique
  vector field whose time-1 map matches the given jet.  At each degree the
  unknown homogeneous part enters through an invertible linear operator on
  the coefficient space, which is materialized as a dense matrix on the
  monomial basis and solved directly.

:func:`jordan_chevalley_split` is a diagnostic that separates a general
linear part into commuting semisimple and nilpotent factors; maps whose
semisimple factor is not the identity are refused by the embedding solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (InternalError, PreconditionError, StructuralError,
                     UnsupportedCaseError)
from .jets import (Jet, JetVector, MultiIndex, jet_matrix_inverse, jet_mul,
                   max_coeff_diff, monomials_of_degree)
from .model import (FastSlowMapSpec, classify_point, nilpotency_index,
                    reduced_data)
from .tols import DEFAULT_TOLS, Tolerances

__all__ = [
    "LinearPartDecomposition",
    "EmbeddingResult",
    "jordan_chevalley_split",
    "nilpotent_log",
    "flow_time1_jet",
    "takens_embed_unipotent",
    "projection_jets",
    "reduced_map_jets",
    "ReducedEmbeddingReport",
    "verify_reduced_embedding",
]

_DIM_CAP = 16


# ---------------------------------------------------------------------------
# linear-part diagnostics


@dataclass
class LinearPartDecomposition:
    """A = B (I + M) with B semisimple, M nilpotent, B M = M B."""
    A: np.ndarray
    B: np.ndarray
    M: np.ndarray
    nilpotent_index_of_M: int | None
    is_unipotent: bool


def _cluster(values: np.ndarray, tol: float) -> list[tuple[complex, int]]:
    """Greedy clustering of eigenvalues into (center, multiplicity) groups."""
    groups: list[list[complex]] = []
    for v in sorted(values, key=lambda x: (x.real, x.imag)):
        for g in groups:
            if abs(v - np.mean(g)) <= tol:
                g.append(v)
                break
        else:
            groups.append([v])
    return [(complex(np.mean(g)), len(g)) for g in groups]


def jordan_chevalley_split(A: np.ndarray,
                           tols: Tolerances = DEFAULT_TOLS) -> LinearPartDecomposition:
    """Multiplicative Jordan-Chevalley decomposition of an invertible matrix.

    The semisimple factor is computed as ``p(A)`` for the Hermite
    interpolation polynomial with ``p = lambda_c + O((x - lambda_c)^m_c)`` at
    each eigenvalue cluster.  Ill-conditioned or inconsistent splits are
    refused rather than returned.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise StructuralError("square matrix required")
    dim = A.shape[0]
    if dim > _DIM_CAP:
        raise StructuralError(f"dimension {dim} exceeds the cap {_DIM_CAP}")
    scale = max(1.0, float(np.linalg.norm(A, 2)))
    values = np.linalg.eigvals(A)

    if np.all(np.abs(values - 1.0) <= tols.unit):
        M = A - np.eye(dim)
        return LinearPartDecomposition(
            A=A, B=np.eye(dim), M=M,
            nilpotent_index_of_M=nilpotency_index(M, tols.nilp),
            is_unipotent=True)

    if np.any(np.abs(values) <= tols.zero * scale):
        raise UnsupportedCaseError(
            "linear part is singular; the multiplicative decomposition "
            "A = B(I + M) needs an invertible semisimple factor")

    clusters = _cluster(values, tol=1e-6 * scale)
    # Hermite conditions: p(c) = c and p^(j)(c) = 0 for j = 1..m-1, per cluster.
    size = sum(m for _, m in clusters)
    rows, rhs = [], []
    for center, mult in clusters:
        for j in range(mult):
            row = np.zeros(size, dtype=complex)
            for i in range(j, size):
                row[i] = math.perm(i, j) * center ** (i - j)
            rows.append(row)
            rhs.append(center if j == 0 else 0.0)
    try:
        coeffs = np.linalg.solve(np.array(rows), np.array(rhs))
    except np.linalg.LinAlgError as exc:
        raise UnsupportedCaseError(f"eigenvalue clustering is degenerate: {exc}") from exc

    B_c = np.zeros((dim, dim), dtype=complex)
    for c in reversed(coeffs):  # Horner in A
        B_c = B_c @ A + c * np.eye(dim)
    if np.max(np.abs(B_c.imag)) > 1e-8 * scale:
        raise UnsupportedCaseError(
            "semisimple factor came out non-real; the eigenproblem is too "
            "ill-conditioned to split reliably")
    B = B_c.real
    M = np.linalg.solve(B, A) - np.eye(dim)

    resid = max(np.max(np.abs(A - B @ (np.eye(dim) + M))),
                np.max(np.abs(B @ M - M @ B)))
    idx = nilpotency_index(M, tols.nilp)
    if resid > 1e-9 * scale or (np.max(np.abs(M)) > tols.nilp * scale and idx is None):
        raise UnsupportedCaseError(
            f"defective eigenproblem beyond the conditioning cap "
            f"(split residual {resid:.3g}); refusing to mis-split")
    return LinearPartDecomposition(A=A, B=B, M=M, nilpotent_index_of_M=idx,
                                   is_unipotent=False)


def nilpotent_log(A: np.ndarray, tols: Tolerances = DEFAULT_TOLS) -> np.ndarray:
    """Matrix logarithm of a unipotent matrix (finite series, exact).

    Coincides with A - I when (A - I)^2 = 0; for deeper nilpotency the
    higher terms are required so that the exponential reproduces A exactly.
    """
    A = np.asarray(A, dtype=float)
    dim = A.shape[0]
    N = A - np.eye(dim)
    idx = nilpotency_index(N, tols.nilp)
    if idx is None:
        raise UnsupportedCaseError(
            "linear part is not unipotent; see jordan_chevalley_split for the "
            "semisimple/nilpotent diagnosis")
    L = np.zeros_like(N)
    P = np.eye(dim)
    for p in range(1, idx + 1):
        P = P @ N
        L += ((-1.0) ** (p + 1) / p) * P
    return L


def _nilpotent_powers(L: np.ndarray, tol: float) -> list[np.ndarray]:
    """[I, L, L^2, ...] up to the last nonzero power."""
    dim = L.shape[0]
    idx = nilpotency_index(L, tol)
    if idx is None:
        raise UnsupportedCaseError(
            "linear part is not nilpotent; run jordan_chevalley_split for the "
            "semisimple/nilpotent diagnosis")
    out = [np.eye(dim)]
    for _ in range(idx - 1):
        out.append(out[-1] @ L)
    return out


# ---------------------------------------------------------------------------
# jets with polynomial-in-time coefficients
#
# A "t-series" is a list of JetVectors: entry d is the coefficient of t^d.
# The flow state of a nilpotent-linear-part field always has this form, and
# all time integrals below are exact Beta-function evaluations.


def _tseries_vars(series: list[JetVector]) -> list[list[Jet]]:
    """Transpose a t-series of jet vectors into per-variable t-polynomials."""
    ncomp = len(series[0])
    return [[jv[s] for jv in series] for s in range(ncomp)]


def _tau_mul(a: list[Jet], b: list[Jet], cap: int) -> list[Jet]:
    """Product of two scalar t-polynomials with jet coefficients; jet degrees
    above ``cap`` are dropped."""
    num_vars, order = a[0].num_vars, a[0].order
    out = [Jet.zero(num_vars, order) for _ in range(len(a) + len(b) - 1)]
    for i, ja in enumerate(a):
        if ja.is_zero():
            continue
        for j, jb in enumerate(b):
            if jb.is_zero():
                continue
            out[i + j] = out[i + j] + jet_mul(ja, jb).degree_cap(cap)
    while len(out) > 1 and out[-1].is_zero():
        out.pop()
    return out


def _tau_compose_jet(outer: Jet, tau_vars: list[list[Jet]], cap: int) -> list[Jet]:
    """Evaluate the polynomial ``outer`` on constant-free t-polynomial
    arguments, producing a scalar t-polynomial with jet coefficients."""
    num_vars, order = tau_vars[0][0].num_vars, tau_vars[0][0].order
    powers: dict[tuple[int, int], list[Jet]] = {}

    def power(s: int, e: int) -> list[Jet]:
        key = (s, e)
        got = powers.get(key)
        if got is None:
            got = tau_vars[s] if e == 1 else _tau_mul(power(s, e - 1), tau_vars[s], cap)
            powers[key] = got
        return got

    acc = [Jet.zero(num_vars, order)]
    for idx, c in outer.coeffs.items():
        term: list[Jet] | None = None
        for s, e in enumerate(idx.exponents):
            if e:
                p = power(s, e)
                term = p if term is None else _tau_mul(term, p, cap)
        if term is None:
            acc[0] = acc[0] + Jet.constant(num_vars, order, c)
            continue
        if len(acc) < len(term):
            acc = acc + [Jet.zero(num_vars, order)] * (len(term) - len(acc))
        for d, jd in enumerate(term):
            if not jd.is_zero():
                acc[d] = acc[d] + jd * c
    return acc


def _mat_apply(mat: np.ndarray, jv: JetVector) -> JetVector:
    comps = []
    for i in range(mat.shape[0]):
        acc = Jet.zero(jv.num_vars, jv.order)
        for j, c in enumerate(jv):
            a = mat[i, j]
            if a != 0.0 and not c.is_zero():
                acc = acc + c * a
        comps.append(acc)
    return JetVector(comps, jv.num_vars, jv.order)


def _linear_flow_tseries(Lpows: list[np.ndarray], num_vars: int, order: int) -> list[JetVector]:
    """t-series of exp(L t) applied to the identity jet vector."""
    ident = JetVector.identity(num_vars, order)
    out = []
    for d, P in enumerate(Lpows):
        out.append(_mat_apply(P / math.factorial(d), ident))
    return out


def _integrate_step(Lpows: list[np.ndarray], integrand: list[JetVector],
                    base: list[JetVector]) -> list[JetVector]:
    """base(t) + integral_0^t exp(L (t - tau)) integrand(tau) d tau, exactly.

    Uses int_0^t (t - tau)^p tau^d dtau = t^(p+d+1) p! d! / (p+d+1)!.
    """
    num_vars, order = base[0].num_vars, base[0].order
    top = len(Lpows) - 1 + len(integrand) - 1 + 1
    out = list(base) + [JetVector.zeros(len(base[0]), num_vars, order)
                        for _ in range(max(0, top + 1 - len(base)))]
    for p, P in enumerate(Lpows):
        for d, F in enumerate(integrand):
            if F.max_abs() == 0.0:
                continue
            factor = math.factorial(d) / math.factorial(p + d + 1)
            out[p + d + 1] = out[p + d + 1] + _mat_apply(P * factor, F)
    while len(out) > 1 and out[-1].max_abs() == 0.0:
        out.pop()
    return out


def _tseries_at_one(series: list[JetVector]) -> JetVector:
    acc = series[0]
    for jv in series[1:]:
        acc = acc + jv
    return acc


def _check_field(V: JetVector, tols: Tolerances) -> tuple[np.ndarray, list[np.ndarray]]:
    if len(V) != V.num_vars:
        raise StructuralError("vector field must have one component per variable")
    const = V.constant_vector()
    if np.max(np.abs(const), initial=0.0) != 0.0:
        raise StructuralError("vector field must vanish at the origin; "
                              "re-expand about the equilibrium first")
    L = V.linear_matrix()
    return L, _nilpotent_powers(L, tols.nilp)


def flow_time1_jet(V: JetVector, order: int,
                   tols: Tolerances = DEFAULT_TOLS) -> JetVector:
    """Jet of the time-1 map of a vector field with nilpotent linear part.

    Picard recursion: the degree-l jet of the flow is obtained from the
    degree-(l-1) jet by one exactly-integrated step; ``order - 1`` steps fix
    the requested jet.
    """
    if order < 1 or order > V.order:
        raise StructuralError(f"order must lie in 1..{V.order}")
    _, Lpows = _check_field(V, tols)
    lin_flow = _linear_flow_tseries(Lpows, V.num_vars, V.order)
    nonlinear = JetVector([c - c.degree_cap(1) for c in V], V.num_vars, V.order)
    cur = [jv.degree_cap(1) for jv in lin_flow]
    for l in range(2, order + 1):
        tau_vars = _tseries_vars(cur)
        integrand = _compose_field(nonlinear.degree_cap(l), tau_vars, cap=l)
        cur = _integrate_step(Lpows, integrand, lin_flow)
        cur = [jv.degree_cap(l) for jv in cur]
    return _tseries_at_one(cur).degree_cap(order)


def _compose_field(F: JetVector, tau_vars: list[list[Jet]], cap: int) -> list[JetVector]:
    """Evaluate each component of ``F`` on t-polynomial arguments; returns a
    t-series of jet vectors capped at jet degree ``cap``."""
    per_comp = [_tau_compose_jet(c, tau_vars, cap) for c in F]
    top = max(len(p) for p in per_comp)
    num_vars = tau_vars[0][0].num_vars
    order = tau_vars[0][0].order
    out = []
    for d in range(top):
        comps = [p[d] if d < len(p) else Jet.zero(num_vars, order) for p in per_comp]
        out.append(JetVector(comps, num_vars, order))
    return out


@dataclass
class EmbeddingResult:
    """Vector field jet whose time-1 flow matches a map jet."""
    V: JetVector
    matched_order: int
    residual: float


# cache of per-degree basis compositions keyed by the nilpotent linear part;
# entries are fully built before publication so concurrent embedding calls
# only ever see complete levels
_QCACHE: dict[bytes, dict] = {}


def _basis_tau_powers(L: np.ndarray, Lpows: list[np.ndarray], num_vars: int,
                      order: int, degree: int) -> dict[MultiIndex, list[Jet]]:
    """(exp(L tau) x)^alpha for every |alpha| = degree, by graded recursion."""
    key = L.tobytes() + bytes([num_vars, order])
    cache = _QCACHE.get(key)
    if cache is not None and degree in cache:
        return cache[degree]
    local: dict = dict(cache) if cache else {}
    if 1 not in local:
        lin = _linear_flow_tseries(Lpows, num_vars, order)
        tau_vars = _tseries_vars(lin)
        local[1] = {MultiIndex(tuple(1 if j == s else 0 for j in range(num_vars))):
                    tau_vars[s] for s in range(num_vars)}
    for d in range(2, degree + 1):
        if d in local:
            continue
        level: dict[MultiIndex, list[Jet]] = {}
        for alpha in monomials_of_degree(num_vars, d):
            s = next(i for i, e in enumerate(alpha.exponents) if e)
            prev = alpha.replace(s, alpha.exponents[s] - 1)
            unit = MultiIndex(tuple(1 if j == s else 0 for j in range(num_vars)))
            level[alpha] = _tau_mul(local[d - 1][prev] if d > 2 else local[1][prev],
                                    local[1][unit], cap=d)
        local[d] = level
    if len(_QCACHE) > 64:
        _QCACHE.clear()
    _QCACHE[key] = local
    return local[degree]


def _homogeneous_vec(jv: JetVector, degree: int,
                     index_of: dict[MultiIndex, int]) -> np.ndarray:
    D = len(index_of)
    out = np.zeros(len(jv) * D)
    for i, comp in enumerate(jv):
        for idx, c in comp.coeffs.items():
            if idx.degree == degree:
                out[i * D + index_of[idx]] = c
    return out


def takens_embed_unipotent(H: JetVector, order: int,
                           tols: Tolerances = DEFAULT_TOLS) -> EmbeddingResult:
    """Unique formal vector field whose time-1 flow jet matches ``H``.

    Requires H(0) = 0 and a unipotent linear part.  The field's linear part
    is the nilpotent logarithm of the map's linear part; each homogeneous
    part is found by a dense solve on the degree's coefficient space.
    """
    if order < 1 or order > H.order:
        raise StructuralError(f"order must lie in 1..{H.order}")
    m = H.num_vars
    if len(H) != m:
        raise StructuralError("map jet must be square (one component per variable)")
    if np.max(np.abs(H.constant_vector()), initial=0.0) != 0.0:
        raise PreconditionError("map must fix the origin; re-center first")
    A = H.linear_matrix()
    L = nilpotent_log(A, tols)  # refuses non-unipotent linear parts
    Lpows = _nilpotent_powers(L, tols.nilp)

    V_comps = [Jet.from_terms(m, H.order,
                              {tuple(1 if j == s else 0 for j in range(m)): L[i, s]
                               for s in range(m) if L[i, s] != 0.0})
               for i in range(m)]
    V = JetVector(V_comps, m, H.order)

    lin_flow = _linear_flow_tseries(Lpows, m, H.order)
    cur = [jv.degree_cap(1) for jv in lin_flow]

    for l in range(2, order + 1):
        nonlinear = JetVector([c.degree_cap(l - 1) - c.degree_cap(1) for c in V], m, H.order)
        tau_vars = _tseries_vars(cur)
        integrand = _compose_field(nonlinear, tau_vars, cap=l)
        known_series = _integrate_step(Lpows, integrand, lin_flow)
        known_l = _tseries_at_one(known_series).degree_part(l)

        basis = monomials_of_degree(m, l)
        index_of = {alpha: i for i, alpha in enumerate(basis)}
        D = len(basis)
        q = _basis_tau_powers(L, Lpows, m, H.order, l)

        # operator: F -> int_0^1 exp(L(1-tau)) F(exp(L tau) x) dtau
        op = np.zeros((m * D, m * D))
        for a_idx, alpha in enumerate(basis):
            q_alpha = q[alpha]
            for i in range(m):
                col = i * D + a_idx
                for p, P in enumerate(Lpows):
                    for d, qd in enumerate(q_alpha):
                        if qd.is_zero():
                            continue
                        # exp(L(1-tau)) carries L^p/p!; the Beta integral
                        # int (1-tau)^p tau^d = p! d!/(p+d+1)! cancels the p!
                        w = math.factorial(d) / math.factorial(p + d + 1)
                        for idx2, c2 in qd.coeffs.items():
                            if idx2.degree != l:
                                continue
                            row_base = index_of[idx2]
                            for j in range(m):
                                pij = P[j, i]
                                if pij != 0.0:
                                    op[j * D + row_base, col] += pij * w * c2
        rhs = _homogeneous_vec(H.degree_part(l), l, index_of) - \
            _homogeneous_vec(known_l, l, index_of)
        try:
            sol = np.linalg.solve(op, rhs)
        except np.linalg.LinAlgError as exc:
            raise InternalError(
                f"per-degree matching operator is singular at degree {l} "
                f"(cond {np.linalg.cond(op):.3g}); uniqueness should forbid this"
            ) from exc

        F_comps = []
        for i in range(m):
            terms = {basis[a].exponents: sol[i * D + a] for a in range(D)
                     if sol[i * D + a] != 0.0}
            F_comps.append(Jet.from_terms(m, H.order, terms))
        F_l = JetVector(F_comps, m, H.order)
        V = V + F_l

        # advance the flow state with the completed degree-l field
        f_ins = []
        top = max((len(q[alpha]) for alpha in basis), default=1)
        for d in range(top):
            comps = [Jet.zero(m, H.order) for _ in range(m)]
            for a_idx, alpha in enumerate(basis):
                qa = q[alpha]
                if d >= len(qa) or qa[d].is_zero():
                    continue
                for i in range(m):
                    c = sol[i * D + a_idx]
                    if c != 0.0:
                        comps[i] = comps[i] + qa[d] * c
            f_ins.append(JetVector(comps, m, H.order))
        total = [integrand[d] + f_ins[d] if d < len(f_ins) else integrand[d]
                 for d in range(len(integrand))]
        total += f_ins[len(integrand):]
        cur = _integrate_step(Lpows, total, lin_flow)
        cur = [jv.degree_cap(l) for jv in cur]

    flow = _tseries_at_one(cur).degree_cap(order)
    residual = max_coeff_diff(flow, H.degree_cap(order))
    return EmbeddingResult(V=V.degree_cap(order), matched_order=order,
                           residual=residual)


# ---------------------------------------------------------------------------
# reduced-map embedding verification


def projection_jets(spec: FastSlowMapSpec) -> list[list[Jet]]:
    """Jets (about the base point) of the oblique projection along the fast
    fibers onto the critical manifold's tangent directions."""
    n, p, r = spec.n, spec.n - spec.k, spec.order
    Df = spec._df
    M = [[None] * p for _ in range(p)]
    for i in range(p):
        for j in range(p):
            acc = jet_mul(Df[i][0], spec.N[0][j])
            for s in range(1, n):
                acc = acc + jet_mul(Df[i][s], spec.N[s][j])
            M[i][j] = acc
    M0 = np.array([[M[i][j].constant_term for j in range(p)] for i in range(p)])
    if not np.isfinite(np.linalg.cond(M0)) or np.linalg.cond(M0) > spec.tols.cond_cap:
        raise PreconditionError(
            "projection jets need an invertible fast-fiber pairing at the base "
            "point (some multiplier equals 1 there)")
    X = jet_matrix_inverse(M)
    proj = [[Jet.constant(n, r, 1.0 if i == j else 0.0) for j in range(n)]
            for i in range(n)]
    # I - N X Df
    for i in range(n):
        for j in range(n):
            acc = proj[i][j]
            for a in range(p):
                for b in range(p):
                    acc = acc - jet_mul(spec.N[i][a], jet_mul(X[a][b], Df[b][j]))
            proj[i][j] = acc
    return proj


def reduced_map_jets(spec: FastSlowMapSpec) -> JetVector:
    """Extended jet of the slow map ``z -> z + eps * P(z) G(z, eps)`` about the
    base point, with the trivial eps row appended.

    ``P`` is the fast-fiber projection extended as a jet; retaining the full
    eps-dependence of G exercises the second-order-in-eps structure."""
    n, r = spec.n, spec.order
    m = n + 1
    proj = projection_jets(spec)
    eps_var = Jet.variable(m, r, n)
    comps = []
    for i in range(n):
        acc = Jet.variable(m, r, i)
        w = Jet.zero(m, r)
        for j in range(n):
            w = w + jet_mul(proj[i][j].extend_vars(m), spec.G[j])
        comps.append(acc + jet_mul(eps_var, w))
    comps.append(eps_var)
    return JetVector(comps, m, r)


@dataclass
class ReducedEmbeddingReport:
    """Coefficient-level comparison of the slow map against the time-1 flow
    of its reduced vector field."""
    order: int
    j1_diff: float
    eps01_diffs: dict[int, float]          # per degree, eps-exponent in {0, 1}
    eps2_solver: np.ndarray                # eps^2 field coefficients, generic solve
    eps2_closed: np.ndarray                # same, closed-form correction
    eps2_diff: float
    residual: float


def verify_reduced_embedding(spec: FastSlowMapSpec, z0, order: int,
                             tols: Tolerances | None = None) -> ReducedEmbeddingReport:
    """Check the order structure of the slow-map embedding at a normally
    hyperbolic point: coefficients with eps-exponent 0 or 1 of map and field
    agree, and the eps^2 coefficients differ by the closed-form correction."""
    tols = tols or spec.tols
    cls = classify_point(spec, z0)
    if not cls.tag.startswith("NH"):
        raise PreconditionError(
            f"slow-map embedding needs a normally hyperbolic point, got {cls.tag}")
    local = spec.recenter(z0)
    rd = reduced_data(local, local.base_point)
    if not rd.valid:
        raise PreconditionError("fast-fiber projection is singular at this point")

    n = local.n
    H = reduced_map_jets(local)
    result = takens_embed_unipotent(H, order, tols)
    V = result.V

    A = H.linear_matrix()
    j1_diff = float(np.max(np.abs(V.linear_matrix() - (A - np.eye(n + 1)))))

    eps01: dict[int, float] = {}
    for l in range(2, order + 1):
        worst = 0.0
        for i in range(n + 1):
            hpart = H[i].degree_part(l)
            vpart = V[i].degree_part(l)
            keys = set(hpart.coeffs) | set(vpart.coeffs)
            for idx in keys:
                if idx.exponents[-1] in (0, 1):
                    worst = max(worst, abs(hpart.coeffs.get(idx, 0.0)
                                           - vpart.coeffs.get(idx, 0.0)))
        eps01[l] = worst

    # eps^2 correction at degree 2: closed form vs the generic solve
    eps_idx = (0,) * n + (1,)
    a = np.array([H[i].coefficient(eps_idx) for i in range(n)])
    eps2_idx = (0,) * n + (2,)
    closed = np.zeros(n)
    solver = np.zeros(n)
    for i in range(n):
        b_eps2 = H[i].coefficient(eps2_idx)
        corr = 0.0
        for s in range(n):
            exps = [0] * (n + 1)
            exps[s] = 1
            exps[n] = 1
            corr += H[i].coefficient(tuple(exps)) * a[s] / 2.0
        closed[i] = b_eps2 - corr
        solver[i] = V[i].coefficient(eps2_idx)
    eps2_diff = float(np.max(np.abs(solver - closed), initial=0.0))

    return ReducedEmbeddingReport(order=order, j1_diff=j1_diff, eps01_diffs=eps01,
                                  eps2_solver=solver, eps2_closed=closed,
                                  eps2_diff=eps2_diff, residual=result.residual)
