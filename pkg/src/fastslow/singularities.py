"""Codimension-1 singularity analysis.

Planar standard-form maps: regular fold / transcritical / pitchfork
detection from partial-derivative conditions, threshold coefficients for
branch selection, and the planar embedding with its structure checks.

General maps: regular contact points (rank drop of the fast pairing by one
plus transversality, quadratic nondegeneracy and slow regularity), the
rectifying chart that exposes the center directions, the center-manifold
graph solve, and the embedding of the restricted map with closed-form
coefficient cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateCaseError, PreconditionError, StructuralError
from .jets import (Jet, JetVector, MultiIndex, jet_compose, jet_matrix_inverse,
                   jet_mul, jet_partial, jet_reciprocal, monomials_of_degree)
from .model import FastSlowMapSpec, extended_map_jets, nontrivial_multipliers
from .embedding import EmbeddingResult, takens_embed_unipotent
from .tols import DEFAULT_TOLS, Tolerances

__all__ = [
    "NormalFormCoefficients",
    "PlanarSingularity",
    "classify_planar_singularity",
    "threshold_lambda",
    "Embed2DResult",
    "embed_2d",
    "ContactFrame",
    "ContactReport",
    "check_regular_contact",
    "ContactNormalForm",
    "cm_normal_form_transform",
    "CenterManifoldData",
    "center_manifold_restricted_map",
    "ContactEmbedding",
    "embed_on_center_manifold",
]


# ---------------------------------------------------------------------------
# planar classification


@dataclass
class NormalFormCoefficients:
    """Case-dependent normal-form data at a planar singular point.

    Fold and transcritical use the quadratic convention alpha = fxx/2,
    beta = fxy/2, gamma = fyy/2; pitchfork uses alpha = fxy, beta = fyy/2,
    gamma = fxxx/6.  ``delta`` is the eps-derivative of the fast equation
    and ``g0`` the slow drift, both at the singular point.
    """
    case: str
    alpha: float
    beta: float
    gamma: float
    delta: float
    g0: float


@dataclass
class _PlanarPartials:
    f0: float
    fx: float
    fy: float
    fxx: float
    fxy: float
    fyy: float
    fxxx: float
    delta: float
    g0: float


@dataclass
class PlanarSingularity:
    case: str | None
    coefficients: NormalFormCoefficients | None
    failed: tuple[str, ...]


def _band(value: float, name: str, tols: Tolerances,
          ambiguous: list[str]) -> str:
    """'zero', 'nonzero', or record the quantity as ambiguous."""
    if abs(value) <= tols.eq_zero:
        return "zero"
    if abs(value) >= tols.genericity_floor:
        return "nonzero"
    ambiguous.append(f"{name} = {value:.3g}")
    return "ambiguous"


def _planar_case(p: _PlanarPartials, tols: Tolerances) -> PlanarSingularity:
    amb: list[str] = []
    failed: list[str] = []
    if abs(p.f0) > tols.eq_zero:
        failed.append(f"f(0) = {p.f0:.3g} != 0")
    if abs(p.fx) > tols.eq_zero:
        failed.append(f"f_x(0) = {p.fx:.3g} != 0")
    if failed:
        return PlanarSingularity(None, None, tuple(failed))

    g0_band = _band(p.g0, "g(0)", tols, amb)
    fy_band = _band(p.fy, "f_y(0)", tols, amb)
    if fy_band == "nonzero":
        fxx_band = _band(p.fxx, "f_xx(0)", tols, amb)
        if amb:
            raise DegenerateCaseError(
                "planar classification ambiguous near the fold conditions: "
                + "; ".join(amb))
        if fxx_band == "nonzero" and g0_band == "nonzero":
            coeffs = NormalFormCoefficients("Fold", p.fxx / 2, p.fxy / 2,
                                            p.fyy / 2, p.delta, p.g0)
            return PlanarSingularity("Fold", coeffs, ())
        if fxx_band != "nonzero":
            failed.append(f"fold genericity f_xx(0) = {p.fxx:.3g} == 0")
        if g0_band != "nonzero":
            failed.append(f"fold genericity g(0) = {p.g0:.3g} == 0")
        return PlanarSingularity(None, None, tuple(failed))

    if fy_band == "ambiguous":
        raise DegenerateCaseError(
            "planar classification ambiguous: " + "; ".join(amb))

    # f_y(0) = 0: transcritical vs pitchfork, separated by f_xx(0)
    fxx_band = _band(p.fxx, "f_xx(0)", tols, amb)
    if fxx_band == "ambiguous" or (amb and g0_band == "ambiguous"):
        raise DegenerateCaseError(
            "planar classification ambiguous: " + "; ".join(amb))
    if fxx_band == "nonzero":
        det = p.fxx * p.fyy - p.fxy ** 2
        if det >= -tols.genericity_floor:
            failed.append(f"transcritical determinant condition det = {det:.3g} not < 0")
        if g0_band != "nonzero":
            failed.append(f"transcritical genericity g(0) = {p.g0:.3g} == 0")
        if failed:
            return PlanarSingularity(None, None, tuple(failed))
        coeffs = NormalFormCoefficients("Transcritical", p.fxx / 2, p.fxy / 2,
                                        p.fyy / 2, p.delta, p.g0)
        return PlanarSingularity("Transcritical", coeffs, ())

    fxxx_band = _band(p.fxxx, "f_xxx(0)", tols, amb)
    fxy_band = _band(p.fxy, "f_xy(0)", tols, amb)
    if amb:
        raise DegenerateCaseError(
            "planar classification ambiguous: " + "; ".join(amb))
    if fxxx_band == "nonzero" and fxy_band == "nonzero" and g0_band == "nonzero":
        coeffs = NormalFormCoefficients("Pitchfork", p.fxy, p.fyy / 2,
                                        p.fxxx / 6, p.delta, p.g0)
        return PlanarSingularity("Pitchfork", coeffs, ())
    if fxxx_band != "nonzero":
        failed.append(f"pitchfork genericity f_xxx(0) = {p.fxxx:.3g} == 0")
    if fxy_band != "nonzero":
        failed.append(f"pitchfork genericity f_xy(0) = {p.fxy:.3g} == 0")
    if g0_band != "nonzero":
        failed.append(f"pitchfork genericity g(0) = {p.g0:.3g} == 0")
    return PlanarSingularity(None, None, tuple(failed))


def _require_standard_2d(spec: FastSlowMapSpec) -> None:
    if spec.n != 2 or spec.k != 1:
        raise PreconditionError("planar analysis needs n = 2, k = 1")
    n00, n10 = spec.N[0][0], spec.N[1][0]
    if (abs(n00.constant_term - 1.0) > 1e-12 or n00.degree_max > 0
            or not n10.is_zero()):
        raise PreconditionError(
            "planar analysis needs the standard-form factor column (1, 0)")


def _planar_partials_from_spec(spec: FastSlowMapSpec) -> _PlanarPartials:
    f = spec.f[0]
    return _PlanarPartials(
        f0=f.constant_term,
        fx=f.coefficient((1, 0)), fy=f.coefficient((0, 1)),
        fxx=2 * f.coefficient((2, 0)), fxy=f.coefficient((1, 1)),
        fyy=2 * f.coefficient((0, 2)), fxxx=6 * f.coefficient((3, 0)),
        delta=spec.G[0].constant_term, g0=spec.G[1].constant_term)


def classify_planar_singularity(spec: FastSlowMapSpec) -> PlanarSingularity:
    """Match the base point of a planar standard-form map against the
    regular-fold / transcritical / pitchfork defining and genericity
    conditions.  Returns the unique matching case, or a no-case report
    listing the failed conditions.
    """
    _require_standard_2d(spec)
    if spec.order < 3:
        raise PreconditionError("planar classification needs jets of order >= 3")
    return _planar_case(_planar_partials_from_spec(spec), spec.tols)


def threshold_lambda(coeffs: NormalFormCoefficients) -> float:
    """Branch-selection threshold coefficient for the transcritical and
    pitchfork cases (closed formulas in the normal-form data)."""
    a, b, g, d, g0 = coeffs.alpha, coeffs.beta, coeffs.gamma, coeffs.delta, coeffs.g0
    if coeffs.case == "Transcritical":
        rad = b * b - g * a
        if rad <= 0:
            raise PreconditionError(
                f"transcritical threshold needs beta^2 - gamma*alpha > 0, got {rad:.3g}")
        return (d * a + g0 * b) / (abs(g0) * math.sqrt(rad))
    if coeffs.case == "Pitchfork":
        if g >= 0:
            raise PreconditionError(
                f"pitchfork threshold needs gamma < 0 (supercritical), got {g:.3g}")
        # the double |alpha| in the denominator is used as stated
        return (d * a + b * g0) * math.sqrt(-g) / (a * abs(g0) * abs(a))
    raise PreconditionError(f"no threshold coefficient for case {coeffs.case!r}")


# ---------------------------------------------------------------------------
# factor extraction by least squares


def _jet_divide_lstsq(numer: Jet, divisor: Jet, quotient_degree: int,
                      match_degree: int | None = None) -> tuple[Jet, float]:
    """Best quotient q with q * divisor = numer through ``match_degree``.

    Solved as a dense least-squares problem on the monomial basis; the
    returned residual is the largest unmatched coefficient.
    """
    m, order = numer.num_vars, numer.order
    match = order if match_degree is None else match_degree
    cols: list[MultiIndex] = []
    for d in range(quotient_degree + 1):
        cols.extend(monomials_of_degree(m, d))
    rows: list[MultiIndex] = []
    for d in range(match + 1):
        rows.extend(monomials_of_degree(m, d))
    row_of = {idx: i for i, idx in enumerate(rows)}
    A = np.zeros((len(rows), len(cols)))
    for j, beta in enumerate(cols):
        for idx, c in divisor.coeffs.items():
            if beta.degree + idx.degree <= match:
                A[row_of[beta + idx], j] = c
    b = np.zeros(len(rows))
    for idx, c in numer.coeffs.items():
        if idx.degree <= match:
            b[row_of[idx]] = c
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    q = Jet.from_terms(m, order, {cols[j].exponents: sol[j]
                                  for j in range(len(cols)) if sol[j] != 0.0})
    resid = (jet_mul(q, divisor) - numer).degree_cap(match).max_abs()
    return q, resid


# ---------------------------------------------------------------------------
# planar embedding


@dataclass
class Embed2DResult:
    embedding: EmbeddingResult
    case_in: str
    case_out: str | None
    coefficients_in: NormalFormCoefficients
    coefficients_out: NormalFormCoefficients | None
    K: Jet
    K0: float
    factor_residual: float
    slow_eps0_residual: float
    g0_slow: float


def _planar_partials_from_field(V: JetVector) -> _PlanarPartials:
    """Read the classifier inputs off an embedded planar field in (x, y, eps)."""
    v1, v2 = V[0], V[1]
    return _PlanarPartials(
        f0=v1.constant_term,
        fx=v1.coefficient((1, 0, 0)), fy=v1.coefficient((0, 1, 0)),
        fxx=2 * v1.coefficient((2, 0, 0)), fxy=v1.coefficient((1, 1, 0)),
        fyy=2 * v1.coefficient((0, 2, 0)), fxxx=6 * v1.coefficient((3, 0, 0)),
        delta=v1.coefficient((0, 0, 1)), g0=v2.coefficient((0, 0, 1)))


def embed_2d(spec: FastSlowMapSpec, order: int | None = None,
             tols: Tolerances | None = None) -> Embed2DResult:
    """Embed a planar standard-form map near its singular base point and
    verify the fast-slow structure of the resulting field: the slow
    component is eps times (slow drift + higher order), the fast component
    at eps = 0 factors through the fast equation's jet with unit leading
    factor, and the field's singularity case matches the map's.
    """
    tols = tols or spec.tols
    cls = classify_planar_singularity(spec)
    if cls.case is None:
        raise PreconditionError(
            "planar embedding needs a classified singular point; failed: "
            + "; ".join(cls.failed))
    order = spec.order if order is None else order

    H = extended_map_jets(spec)
    result = takens_embed_unipotent(H, order, tols)
    V = result.V

    # slow component must be eps * (g0 + higher order)
    v2 = V[1]
    slow_eps0 = max((abs(c) for idx, c in v2.coeffs.items()
                     if idx.exponents[2] == 0), default=0.0)
    g0_slow = v2.coefficient((0, 0, 1))

    # fast component at eps = 0 factors as K * j^r f with K(0,0) = 1
    v1_layer = V[0].subs_zero(2).drop_var(2).degree_cap(order)
    f_layer = spec.f[0].degree_cap(order)
    K, factor_residual = _jet_divide_lstsq(v1_layer, f_layer,
                                           order - f_layer.valuation,
                                           match_degree=order)
    K0 = K.constant_term

    out = _planar_case(_planar_partials_from_field(V), tols)
    if factor_residual > tols.structure:
        raise StructuralError(
            f"embedded field does not factor through the fast equation: "
            f"residual {factor_residual:.3g} exceeds {tols.structure:g}")
    return Embed2DResult(embedding=result, case_in=cls.case, case_out=out.case,
                         coefficients_in=cls.coefficients,
                         coefficients_out=out.coefficients,
                         K=K, K0=K0, factor_residual=factor_residual,
                         slow_eps0_residual=slow_eps0, g0_slow=g0_slow)


# ---------------------------------------------------------------------------
# regular contact points


@dataclass
class ContactFrame:
    """Null vectors and complements of the fast pairing at a contact point.

    Normalized so l . r = 1; P has orthonormal columns spanning the kernel
    of l, and Q is the matching left complement, so that stacking (l; Q)
    and (r P) gives mutually inverse square matrices.
    """
    l: np.ndarray
    r: np.ndarray
    Q: np.ndarray
    P: np.ndarray


def build_contact_frame(DfN: np.ndarray, tols: Tolerances = DEFAULT_TOLS) -> ContactFrame:
    p = DfN.shape[0]
    U, sigma, Vt = np.linalg.svd(DfN)
    r = Vt[-1, :]
    l_raw = U[:, -1]
    s = float(l_raw @ r)
    if abs(s) < 1e-8:
        raise PreconditionError(
            "left and right null vectors are near-orthogonal: the critical "
            "multiplier is not algebraically simple, no contact frame exists")
    l = l_raw / s
    if p == 1:
        P = np.zeros((1, 0))
        Q = np.zeros((0, 1))
    else:
        P = scipy.linalg.null_space(l.reshape(1, -1))
        Q = P.T @ (np.eye(p) - np.outer(r, l))
    return ContactFrame(l=l, r=r, Q=Q, P=P)


@dataclass
class ContactReport:
    rank: int
    rank_ok: bool
    transversality_rank: int
    transversality_ok: bool
    nondegeneracy: float
    nondegeneracy_ok: bool
    slow_regularity: np.ndarray
    slow_regularity_ok: bool
    verdict: bool
    frame: ContactFrame | None
    multipliers: np.ndarray


def _numerical_rank(M: np.ndarray, tol: float) -> int:
    if M.size == 0:
        return 0
    sigma = np.linalg.svd(M, compute_uv=False)
    if sigma[0] == 0.0:
        return 0
    return int(np.sum(sigma > tol * sigma[0]))


def check_regular_contact(spec: FastSlowMapSpec, z,
                          tols: Tolerances | None = None) -> ContactReport:
    """Evaluate the contact-point conditions at a point of the critical
    manifold: rank drop of the fast pairing by exactly one, transversality,
    quadratic nondegeneracy and slow regularity."""
    tols = tols or spec.tols
    fz = spec.f_at(z)
    if float(np.max(np.abs(fz))) > tols.manifold:
        raise PreconditionError(
            f"point is off the critical manifold: |f(z)| = {np.max(np.abs(fz)):.3g}")
    n, k = spec.n, spec.k
    p = n - k
    d = spec.local(z)
    Df = spec.Df_at(z)
    N = spec.N_at(z)
    DfN = Df @ N
    mu = nontrivial_multipliers(spec, z).values

    rank = _numerical_rank(DfN, tols.rank)
    rank_ok = rank == p - 1
    trans_rank = _numerical_rank(Df, tols.rank)
    trans_ok = trans_rank == p

    if not rank_ok:
        return ContactReport(rank=rank, rank_ok=False,
                             transversality_rank=trans_rank,
                             transversality_ok=trans_ok,
                             nondegeneracy=0.0, nondegeneracy_ok=False,
                             slow_regularity=np.zeros(n),
                             slow_regularity_ok=False, verdict=False,
                             frame=None, multipliers=mu)
    frame = build_contact_frame(DfN, tols)
    l, r = frame.l, frame.r
    Nr = N @ r

    # quadratic nondegeneracy: l . (Hess f applied to (Nr, Nr) + Df DN(Nr, r))
    hess_term = np.zeros(p)
    for i in range(p):
        H = np.array([[jet_partial(spec._df[i][a], b).evaluate(d)
                       for b in range(n)] for a in range(n)])
        hess_term[i] = Nr @ H @ Nr
    dn_dir = np.zeros((n, p))  # derivative of N along the direction Nr
    for a in range(n):
        for j in range(p):
            dn_dir[a, j] = sum(jet_partial(spec.N[a][j], mm).evaluate(d) * Nr[mm]
                               for mm in range(n))
    df_dn_term = Df @ (dn_dir @ r)
    nondeg = float(l @ (hess_term + df_dn_term))

    g0 = spec.G_at(z, 0.0)
    slow_reg = Nr * float(l @ (Df @ g0))

    nondeg_ok = abs(nondeg) >= tols.genericity_floor
    slow_ok = float(np.linalg.norm(slow_reg)) >= tols.genericity_floor
    verdict = rank_ok and trans_ok and nondeg_ok and slow_ok
    return ContactReport(rank=rank, rank_ok=rank_ok,
                         transversality_rank=trans_rank, transversality_ok=trans_ok,
                         nondegeneracy=nondeg, nondegeneracy_ok=nondeg_ok,
                         slow_regularity=slow_reg, slow_regularity_ok=slow_ok,
                         verdict=verdict, frame=frame, multipliers=mu)


# ---------------------------------------------------------------------------
# rectifying chart and center-manifold coordinates
#
# chart variables are ordered (x_1..x_k, u, w_1..w_{n-k-1}, eps)


@dataclass
class ContactNormalForm:
    spec: FastSlowMapSpec
    frame: ContactFrame
    n: int
    k: int
    order: int
    hat_map: JetVector          # n components in (x, u, w, eps)
    K: JetVector                # rectification inverse, (x, v, eps) variables
    z_chart: JetVector          # original coordinates as jets in (x, u, w, eps)
    rectification_residual: float
    pure_x_residual: float
    jacobian_residual: float


def _newton_rectify(spec: FastSlowMapSpec) -> tuple[JetVector, float]:
    """Solve f(x, K(x, v)) = v for K by Newton iteration on jets."""
    n, k, r = spec.n, spec.k, spec.order
    p = n - k
    m = n + 1  # (x, v, eps)
    Df0 = spec.Df_at(spec.base_point)
    Dy = Df0[:, k:]
    cond = np.linalg.cond(Dy)
    if not np.isfinite(cond) or cond > spec.tols.cond_cap:
        raise PreconditionError(
            "the last n-k coordinates do not parametrize the fast directions "
            "(D_y f singular at the base point); permute the variables so the "
            "critical manifold is a graph over the first k coordinates")
    Dy_inv = np.linalg.inv(Dy)
    Dx = Df0[:, :k]

    x_jets = [Jet.variable(m, r, i) for i in range(k)]
    v_jets = [Jet.variable(m, r, k + j) for j in range(p)]
    DyiDx = Dy_inv @ Dx
    K = []
    for j in range(p):
        acc = Jet.zero(m, r)
        for b in range(p):
            acc = acc + v_jets[b] * Dy_inv[j, b]
        for a in range(k):
            acc = acc - x_jets[a] * DyiDx[j, a]
        K.append(acc)

    resid = math.inf
    for _ in range(max(2, math.ceil(math.log2(r + 1)) + 2)):
        inner = JetVector(x_jets + K, m, r)
        fK = [jet_compose(spec.f[i], inner) for i in range(p)]
        target = [fK[i] - v_jets[i] for i in range(p)]
        resid = max(t.max_abs() for t in target)
        if resid == 0.0:
            break
        Dyf = [[jet_compose(spec._df[i][k + j], inner) for j in range(p)]
               for i in range(p)]
        X = jet_matrix_inverse(Dyf)
        K = [K[j] - sum((jet_mul(X[j][i], target[i]) for i in range(1, p)),
                        jet_mul(X[j][0], target[0]))
             for j in range(p)]
    inner = JetVector(x_jets + K, m, r)
    fK = [jet_compose(spec.f[i], inner) for i in range(p)]
    resid = max((fK[i] - v_jets[i]).max_abs() for i in range(p))
    return JetVector(K, m, r), resid


def cm_normal_form_transform(spec: FastSlowMapSpec,
                             tols: Tolerances | None = None) -> ContactNormalForm:
    """Conjugate the map into coordinates adapted to a regular contact point:
    first rectify the critical manifold to {v = 0} with the jet inverse of
    the fast equations, then split v into the critical direction u and its
    complement w with the contact frame."""
    tols = tols or spec.tols
    for comp in spec.f:
        if comp.constant_term != 0.0:
            raise PreconditionError(
                "fast equations must vanish exactly at the base point "
                f"(found constant term {comp.constant_term!r}); re-emit the "
                "spec expanded about the contact point")
    report = check_regular_contact(spec, spec.base_point, tols)
    if not report.verdict:
        raise PreconditionError(
            "base point is not a regular contact point: "
            f"rank_ok={report.rank_ok}, transversality={report.transversality_ok}, "
            f"nondegeneracy={report.nondegeneracy:.3g}, "
            f"slow_regularity={np.linalg.norm(report.slow_regularity):.3g}")
    frame = report.frame
    n, k, r = spec.n, spec.k, spec.order
    p = n - k
    m = n + 1

    K, rect_resid = _newton_rectify(spec)

    # the full map in the rectified chart
    Hmap = extended_map_jets(spec)
    inner1 = JetVector([Jet.variable(m, r, i) for i in range(k)]
                       + list(K) + [Jet.variable(m, r, n)], m, r)
    zbar = [jet_compose(Hmap[i], inner1) for i in range(n)]
    xbar = zbar[:k]
    vbar = [jet_compose(spec.f[i], JetVector(zbar, m, r)) for i in range(p)]

    # linear (u, w) split of the v block
    l, rvec, Q, P = frame.l, frame.r, frame.Q, frame.P
    sub = []
    for i in range(k):
        sub.append(Jet.variable(m, r, i))
    u_jet = Jet.variable(m, r, k)
    w_jets = [Jet.variable(m, r, k + 1 + j) for j in range(p - 1)]
    for j in range(p):
        acc = u_jet * float(rvec[j])
        for mm in range(p - 1):
            acc = acc + w_jets[mm] * float(P[j, mm])
        sub.append(acc)
    sub.append(Jet.variable(m, r, n))
    inner2 = JetVector(sub, m, r)

    hat_x = [jet_compose(c, inner2) for c in xbar]
    hat_v = [jet_compose(c, inner2) for c in vbar]
    hat_u = sum((hat_v[j] * float(l[j]) for j in range(1, p)), hat_v[0] * float(l[0]))
    hat_w = []
    for mm in range(p - 1):
        acc = hat_v[0] * float(Q[mm, 0])
        for j in range(1, p):
            acc = acc + hat_v[j] * float(Q[mm, j])
        hat_w.append(acc)
    hat_map = JetVector(hat_x + [hat_u] + hat_w, m, r)

    # the critical manifold is the pure-x subspace: it must stay fixed
    pure_x = 0.0
    for i, comp in enumerate(hat_map):
        delta = comp - Jet.variable(m, r, i)
        for idx, c in delta.coeffs.items():
            if all(e == 0 for e in idx.exponents[k:]):
                pure_x = max(pure_x, abs(c))

    # block structure of the layer linearization: the u row is trivial, the
    # w rows decouple from (x, u), the w block is the framed fast pairing,
    # and the x rows pick up the tangency direction in the u column
    hm = hat_map.linear_matrix()
    DfN0 = spec.Df_at(spec.base_point) @ spec.N_at(spec.base_point)
    jac_res = float(np.max(np.abs(hm[k, :n] - np.eye(n)[k])))
    if p > 1:
        jac_res = max(jac_res, float(np.max(np.abs(hm[k + 1:n, :k + 1]))))
        expected_w = np.eye(p - 1) + Q @ DfN0 @ P
        jac_res = max(jac_res, float(np.max(np.abs(hm[k + 1:n, k + 1:n] - expected_w))))
    Nx_r = (spec.N_at(spec.base_point) @ rvec)[:k]
    jac_res = max(jac_res, float(np.max(np.abs(hm[:k, k] - Nx_r))))

    z_chart = JetVector([Jet.variable(m, r, i) for i in range(k)]
                        + [jet_compose(c, inner2) for c in K], m, r)

    return ContactNormalForm(spec=spec, frame=frame, n=n, k=k, order=r,
                             hat_map=hat_map, K=K, z_chart=z_chart,
                             rectification_residual=rect_resid,
                             pure_x_residual=pure_x,
                             jacobian_residual=jac_res)


# ---------------------------------------------------------------------------
# center-manifold graph and restricted map
#
# reduced variables are (x_1..x_k, u, eps)


@dataclass
class CenterManifoldData:
    """Graph of the center manifold over (x, u, eps) and the restricted map.

    ``W`` solves the invariance equation for the w block; ``restricted_map``
    is the exact (x, u) block of the conjugated map evaluated on the graph
    and is the ground truth for downstream embedding.  ``restricted_N`` and
    ``restricted_f`` realize its fast-slow factorization: the closed-form
    factor (the original factor matrix and fast pairing evaluated along the
    graph, contracted with the tilted null direction) and the rectified fast
    scalar obtained by exact division.
    """
    W: JetVector                  # n-k-1 components in (x, u, eps)
    restricted_N: JetVector       # k+1 components in (x, u, eps), eps-free
    restricted_f: Jet             # scalar in (x, u, eps), eps-free
    restricted_G: JetVector       # k+1 components in (x, u, eps)
    invariance_residual: float
    restricted_map: JetVector     # k+1 components in (x, u, eps)
    W0: JetVector                 # W at eps = 0 divided by u
    mu1: float                    # nontrivial multiplier of the restricted map
    n: int
    k: int
    order: int


def _split_var_divisible(jet: Jet, var: int, tol: float, what: str) -> Jet:
    """Drop sub-tolerance terms not carrying ``var``; reject larger ones."""
    keep = {}
    worst = 0.0
    for idx, c in jet.coeffs.items():
        if idx.exponents[var] == 0:
            worst = max(worst, abs(c))
        else:
            keep[idx] = c
    if worst > tol:
        raise StructuralError(
            f"{what} has a coefficient {worst:.3g} not divisible by the "
            f"critical variable; the graph solve did not converge")
    return Jet(jet.num_vars, jet.order, keep, jet.reliable_order)


def _monomial_substitution_columns(M: np.ndarray, degree: int, order: int
                                   ) -> tuple[list[MultiIndex], np.ndarray]:
    """Coefficients of (monomial o M) for every monomial of the degree.

    Returns the graded basis and a matrix S with S[beta, alpha] the
    beta-coefficient of x^alpha composed with the linear map M."""
    mvars = M.shape[0]
    basis = monomials_of_degree(mvars, degree)
    index_of = {b: i for i, b in enumerate(basis)}
    lin = [Jet.from_terms(mvars, order,
                          {tuple(1 if j == s else 0 for j in range(mvars)): M[i, s]
                           for s in range(mvars) if M[i, s] != 0.0})
           for i in range(mvars)]
    S = np.zeros((len(basis), len(basis)))
    for a_idx, alpha in enumerate(basis):
        term: Jet | None = None
        for i, e in enumerate(alpha.exponents):
            for _ in range(e):
                term = lin[i] if term is None else jet_mul(term, lin[i])
        for idx, c in term.coeffs.items():
            S[index_of[idx], a_idx] = c
    return basis, S


def center_manifold_restricted_map(nf: ContactNormalForm,
                                   order: int | None = None,
                                   tols: Tolerances | None = None) -> CenterManifoldData:
    """Solve the graph-invariance equation for the center manifold order by
    order and build the restricted (k+1)-dimensional map on it.

    Each degree yields a Sylvester-type linear system whose operator is
    invertible because the framed fast block has no critical multiplier."""
    tols = tols or nf.spec.tols
    spec, frame = nf.spec, nf.frame
    n, k, r = nf.n, nf.k, nf.order
    p = n - k
    order = r if order is None else order
    if order > r:
        raise StructuralError(f"order {order} exceeds the jet order {r}")
    mred = k + 2  # (x, u, eps)
    mhat = n + 1  # (x, u, w, eps)

    x_red = [Jet.variable(mred, r, i) for i in range(k)]
    u_red = Jet.variable(mred, r, k)
    eps_red = Jet.variable(mred, r, k + 1)

    hm = nf.hat_map.linear_matrix()  # n x (n+1)
    if p > 1:
        btilde = hm[k + 1:n, k + 1:n]
        lam_w = np.linalg.eigvals(btilde)
        if np.any(np.abs(np.abs(lam_w) - 1.0) <= tols.unit):
            raise PreconditionError(
                "framed fast block has a multiplier on the unit circle "
                f"({np.round(lam_w, 12)}); the graph solve is singular")
        # linear part of the (x, u, eps) return map, w columns dropped
        M = np.zeros((mred, mred))
        M[:k + 1, :k] = hm[:k + 1, :k]
        M[:k + 1, k] = hm[:k + 1, k]
        M[:k + 1, k + 1] = hm[:k + 1, n]
        M[k + 1, k + 1] = 1.0

        W = JetVector.zeros(p - 1, mred, r)
        for d in range(1, order + 1):
            inner_red = JetVector(x_red + [u_red] + list(W) + [eps_red], mred, r)
            lhs = [jet_compose(nf.hat_map[k + 1 + mm], inner_red)
                   for mm in range(p - 1)]
            ret_xu = [jet_compose(nf.hat_map[i], inner_red) for i in range(k + 1)]
            inner_W = JetVector(ret_xu + [eps_red], mred, r)
            rhs = [jet_compose(W[mm], inner_W) for mm in range(p - 1)]
            defect = [(lhs[mm] - rhs[mm]).degree_part(d) for mm in range(p - 1)]

            basis, S = _monomial_substitution_columns(M, d, r)
            D = len(basis)
            index_of = {b: i for i, b in enumerate(basis)}
            T = np.kron(btilde, np.eye(D)) - np.kron(np.eye(p - 1), S)
            rhs_vec = np.zeros((p - 1) * D)
            for mm in range(p - 1):
                for idx, c in defect[mm].coeffs.items():
                    rhs_vec[mm * D + index_of[idx]] = c
            try:
                sol = np.linalg.solve(T, -rhs_vec)
            except np.linalg.LinAlgError as exc:
                raise PreconditionError(
                    f"graph solve singular at degree {d}: offending "
                    f"eigenvalues {np.round(np.linalg.eigvals(btilde), 12)}"
                ) from exc
            W = JetVector([W[mm] + Jet.from_terms(mred, r, {
                basis[a].exponents: sol[mm * D + a] for a in range(D)
                if sol[mm * D + a] != 0.0}) for mm in range(p - 1)], mred, r)

        inner_red = JetVector(x_red + [u_red] + list(W) + [eps_red], mred, r)
        lhs = [jet_compose(nf.hat_map[k + 1 + mm], inner_red) for mm in range(p - 1)]
        ret_xu = [jet_compose(nf.hat_map[i], inner_red) for i in range(k + 1)]
        inner_W = JetVector(ret_xu + [eps_red], mred, r)
        rhs = [jet_compose(W[mm], inner_W) for mm in range(p - 1)]
        residual = max(((lhs[mm] - rhs[mm]).degree_cap(order).max_abs()
                        for mm in range(p - 1)), default=0.0)
    else:
        W = JetVector([], mred, r)
        inner_red = JetVector(x_red + [u_red] + [eps_red], mred, r)
        ret_xu = [jet_compose(nf.hat_map[i], inner_red) for i in range(k + 1)]
        residual = 0.0

    restricted = JetVector(ret_xu, mred, r)

    # graph factorization W = u W0 + eps W_rem at eps = 0
    eps_var = k + 1
    W_eps0 = JetVector([_split_var_divisible(c.subs_zero(eps_var), k,
                                             tols.structure, "center graph")
                        for c in W], mred, r)
    W0 = JetVector([c.div_var(k) for c in W_eps0], mred, r)

    # closed-form factor along the graph (original data composed with the chart)
    inner_chart = JetVector(x_red + [u_red] + list(W_eps0) + [eps_red], mred, r)
    z_cm = [jet_compose(c, inner_chart) for c in nf.z_chart]
    rPW0 = []
    for j in range(p):
        acc = Jet.constant(mred, r, float(frame.r[j]))
        for mm in range(p - 1):
            acc = acc + W0[mm] * float(frame.P[j, mm])
        rPW0.append(acc)
    N_cm = [[jet_compose(spec.N[i][j], JetVector(z_cm, mred, r))
             for j in range(p)] for i in range(k)]
    DfN_jets = [[None] * p for _ in range(p)]
    for a in range(p):
        for b in range(p):
            acc = jet_mul(spec._df[a][0], spec.N[0][b])
            for s in range(1, n):
                acc = acc + jet_mul(spec._df[a][s], spec.N[s][b])
            DfN_jets[a][b] = acc
    lDfN_cm = []
    for b in range(p):
        acc = Jet.zero(n, r)
        for a in range(p):
            acc = acc + DfN_jets[a][b] * float(frame.l[a])
        lDfN_cm.append(jet_compose(acc, JetVector(z_cm, mred, r)))
    Ntilde = []
    for i in range(k):
        acc = jet_mul(N_cm[i][0], rPW0[0])
        for j in range(1, p):
            acc = acc + jet_mul(N_cm[i][j], rPW0[j])
        Ntilde.append(acc)
    acc = jet_mul(lDfN_cm[0], rPW0[0])
    for j in range(1, p):
        acc = acc + jet_mul(lDfN_cm[j], rPW0[j])
    Ntilde.append(acc)
    Ntilde = JetVector(Ntilde, mred, r)

    # layer part and eps part of the restricted map (the eps split is exact)
    ident = [Jet.variable(mred, r, i) for i in range(k)] + [u_red]
    displ = [restricted[i] - ident[i] for i in range(k + 1)]
    layer = [_split_var_divisible(c.subs_zero(eps_var), k, tols.structure,
                                  "restricted layer map") for c in displ]
    G_tilde = JetVector([(c - c.subs_zero(eps_var)).div_var(eps_var)
                         for c in displ], mred, r)

    N0 = Ntilde.constant_vector()
    jstar = int(np.argmax(np.abs(N0[:k])))
    if abs(N0[jstar]) < tols.genericity_floor:
        raise PreconditionError(
            "tangency direction vanishes in the slow block; cannot normalize "
            "the restricted fast scalar")
    f_tilde = jet_mul(layer[jstar], jet_reciprocal(Ntilde[jstar]))

    # nontrivial multiplier at the contact point (structural formula)
    df0 = f_tilde.linear_coefficients()[:k + 1]
    mu1 = 1.0 + float(df0 @ N0)

    return CenterManifoldData(W=W, restricted_N=Ntilde, restricted_f=f_tilde,
                              restricted_G=G_tilde, invariance_residual=residual,
                              restricted_map=restricted, W0=W0, mu1=mu1,
                              n=n, k=k, order=order)


# ---------------------------------------------------------------------------
# embedding on the center manifold


@dataclass
class ContactEmbedding:
    embedding: EmbeddingResult
    N_frak: JetVector            # factor of the field's layer part
    factor_residual: float
    linear_match: float          # n-frak and script-G values at the origin
    partials_diff: float         # slow derivatives of the critical factor
    quad_closed_diff: float      # quadratic coefficients vs closed formulas
    contact_ok: bool


def embed_on_center_manifold(cm: CenterManifoldData, order: int | None = None,
                             tols: Tolerances = DEFAULT_TOLS) -> ContactEmbedding:
    """Embed the restricted map into a flow and cross-check the field's
    coefficients against closed formulas computed from the map alone.

    Checks, all at the structural tolerance:
      * the field's layer part factors through the restricted fast scalar,
        with factor and eps-forcing matching the map data at the origin (the
        eps column of the slow block carries the finite log-series
        correction -N^x G^u/2, which is accounted for);
      * first slow derivatives of the critical factor component agree
        between field and map;
      * the degree-2 coefficients of the field's critical component equal
        the closed formulas: pure-slow terms vanish, mixed terms copy the
        map, and the critical-squared term picks up half the slow tangency
        contraction.
    """
    k = cm.k
    mred = k + 2
    r = cm.restricted_map.order
    order = cm.order if order is None else order
    eps_var = k + 1

    H = JetVector(list(cm.restricted_map) + [Jet.variable(mred, r, eps_var)],
                  mred, r)
    result = takens_embed_unipotent(H, order, tols)
    V = result.V

    # (a) linear data at the origin
    N0 = cm.restricted_N.constant_vector()
    G0 = cm.restricted_G.constant_vector()
    u_idx = tuple(1 if i == k else 0 for i in range(mred))
    eps_idx = tuple(1 if i == eps_var else 0 for i in range(mred))
    lin = 0.0
    for i in range(k + 1):
        lin = max(lin, abs(V[i].coefficient(u_idx) - N0[i]))
    # eps column: log of the unipotent linear part shifts the slow rows by
    # -(1/2) N^x(0) G^u(0); the critical row is exact
    gu = G0[k]
    for i in range(k):
        lin = max(lin, abs(V[i].coefficient(eps_idx) - (G0[i] - 0.5 * N0[i] * gu)))
    lin = max(lin, abs(V[k].coefficient(eps_idx) - gu))

    # (b) layer part of the field factors through the restricted fast scalar
    layer = JetVector([V[i].subs_zero(eps_var) for i in range(k + 1)], mred, r)
    f_t = cm.restricted_f
    N_frak = []
    factor_residual = 0.0
    qdeg = order - max(f_t.valuation, 1)
    for i in range(k + 1):
        q, res = _jet_divide_lstsq(layer[i].degree_cap(order), f_t.degree_cap(order), qdeg)
        N_frak.append(q)
        factor_residual = max(factor_residual, res)
    N_frak = JetVector(N_frak, mred, r)
    for i in range(k + 1):
        lin = max(lin, abs(N_frak[i].constant_term - N0[i]))

    # (c) slow partial derivatives of the critical factor component
    partials_diff = 0.0
    for s in range(k):
        x_idx = tuple(1 if i == s else 0 for i in range(mred))
        partials_diff = max(partials_diff,
                            abs(N_frak[k].coefficient(x_idx)
                                - cm.restricted_N[k].coefficient(x_idx)))

    # (d) degree-2 coefficients of the critical component vs closed formulas
    vu2 = V[k].degree_part(2)
    hu2 = H[k].degree_part(2)
    quad = 0.0
    for alpha in monomials_of_degree(mred, 2):
        if alpha.exponents[eps_var] != 0:
            continue
        eu = alpha.exponents[k]
        got = vu2.coeffs.get(alpha, 0.0)
        if eu == 0:
            expected = 0.0
        elif eu == 1:
            expected = hu2.coeffs.get(alpha, 0.0)
        else:
            # u^2 coefficient: integrating the mixed terms along the linear
            # flow x -> x + tau N^x(0) u contributes half the slow tangency
            # contraction, which the field coefficient must shed
            expected = hu2.coeffs.get(alpha, 0.0)
            for s in range(k):
                exps = [0] * mred
                exps[s] = 1
                exps[k] = 1
                expected -= 0.5 * hu2.coeffs.get(MultiIndex(exps), 0.0) * N0[s]
        quad = max(quad, abs(got - expected))

    failures = []
    if lin > tols.structure:
        failures.append(f"origin values of the factor/forcing (gap {lin:.3g})")
    if factor_residual > tols.structure:
        failures.append(f"layer factorization through the restricted fast "
                        f"scalar (residual {factor_residual:.3g})")
    if partials_diff > tols.structure:
        failures.append(f"slow partial derivatives of the critical factor "
                        f"(gap {partials_diff:.3g})")
    if quad > tols.structure:
        failures.append(f"closed-form quadratic coefficients (gap {quad:.3g})")
    if failures:
        raise StructuralError("embedding structure checks failed: "
                              + "; ".join(failures))
    ok = True
    return ContactEmbedding(embedding=result, N_frak=N_frak,
                            factor_residual=factor_residual,
                            linear_match=lin, partials_diff=partials_diff,
                            quad_closed_diff=quad, contact_ok=ok)
