"""Shared spec builders and random corpora for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from fastslow.jets import Jet, JetVector, monomials_of_degree
from fastslow.model import FastSlowMapSpec, standard_form_2d


def make_fold_spec(order=5):
    """f = x^2 - y, g = -1: attracting branch on the left, drift to the fold."""
    return standard_form_2d({(2, 0): 1.0, (0, 1): -1.0}, {}, {(0, 0, 0): -1.0},
                            order=order)


def make_transcritical_spec(lam=0.5, order=5):
    """f = x^2 - y^2 + eps*lam, g = 1."""
    return standard_form_2d({(2, 0): 1.0, (0, 2): -1.0}, {(0, 0, 0): lam},
                            {(0, 0, 0): 1.0}, order=order)


def make_pitchfork_spec(lam=0.5, g0=1.0, order=5):
    """f = x*y - x^3 + eps*lam (supercritical)."""
    return standard_form_2d({(1, 1): 1.0, (3, 0): -1.0}, {(0, 0, 0): lam},
                            {(0, 0, 0): g0}, order=order)


def make_superstable_spec(order=4):
    """The squaring map (x, y) -> (x^2, y + eps): N = (1,0), f = -x + x^2.

    The x = 0 branch of the critical manifold carries the single nontrivial
    multiplier 0, so the map is non-invertible there while the reduced map
    (0, y) -> (0, y + eps) stays a diffeomorphism."""
    return standard_form_2d({(1, 0): -1.0, (2, 0): 1.0}, {}, {(0, 0, 0): 1.0},
                            order=order)


def make_quadratic_g_spec(order=4):
    """Superstable-at-origin fast equation with a tilted factor column and a
    quadratic, eps-dependent drift; exercises the dense projection jets and
    the second-order-in-eps structure of the slow map."""
    f = JetVector([Jet.from_terms(2, order, {(1, 0): -1.0, (2, 0): 1.0})])
    N = ((Jet.constant(2, order, 1.0),),
         (Jet.constant(2, order, 0.4),))
    G = JetVector([
        Jet.from_terms(3, order, {(0, 0, 0): 0.3, (1, 0, 0): 0.2, (0, 1, 0): 0.1,
                                  (0, 0, 1): 0.05, (0, 2, 0): 0.1, (1, 1, 0): 0.07}),
        Jet.from_terms(3, order, {(0, 0, 0): 1.0, (1, 0, 0): 0.5, (0, 1, 0): 0.25,
                                  (0, 0, 1): 0.2, (0, 2, 0): 0.05, (2, 0, 0): 0.3}),
    ])
    return FastSlowMapSpec(n=2, k=1, order=order, N=N, f=f, G=G,
                           base_point=np.zeros(2))


def make_contact3d_spec(order=5):
    """n = 3, k = 1 regular contact point at the origin with one stable extra
    multiplier (0.5): DfN(0) = [[0, 0], [0, -1/2]]."""
    def J3(terms):
        return Jet.from_terms(3, order, terms)

    f = JetVector([
        J3({(0, 1, 0): 1, (0, 2, 0): 1, (2, 0, 0): 0.25, (1, 0, 1): 0.1,
            (0, 0, 2): 0.05}),
        J3({(0, 0, 1): 1, (1, 1, 0): 0.1, (2, 0, 0): 0.08}),
    ])
    N = (
        (J3({(0, 0, 0): 1, (0, 1, 0): 0.1}), J3({(1, 0, 0): 0.05})),
        (J3({(1, 0, 0): 0.1}), J3({(0, 0, 1): 0.02})),
        (J3({(0, 1, 0): 0.03}), J3({(0, 0, 0): -0.5, (1, 0, 0): 0.1})),
    )
    G = JetVector([
        Jet.from_terms(4, order, {(0, 0, 0, 0): 1, (0, 0, 0, 1): 0.1,
                                  (1, 0, 0, 0): 0.05}),
        Jet.from_terms(4, order, {(0, 0, 0, 0): 0.3, (1, 0, 0, 0): 0.2,
                                  (0, 1, 0, 0): 0.1}),
        Jet.from_terms(4, order, {(0, 1, 0, 0): 0.1, (0, 0, 0, 1): 0.05}),
    ])
    return FastSlowMapSpec(n=3, k=1, order=order, N=N, f=f, G=G,
                           base_point=np.zeros(3))


_JORDAN_BLOCKS = {
    2: [np.zeros((2, 2)),
        np.array([[0.0, 1.0], [0.0, 0.0]])],
    3: [np.zeros((3, 3)),
        np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]),
        np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [0.0, 0.0, 0.0]])],
}


def random_nilpotent_field(rng, num_vars=None, order=4, fill=0.4):
    """Polynomial field with a nilpotent Jordan-block linear part and random
    sparse coefficients up to the order."""
    m = num_vars or int(rng.integers(2, 4))
    blocks = _JORDAN_BLOCKS[m]
    L = blocks[int(rng.integers(len(blocks)))]
    comps = []
    for i in range(m):
        terms = {}
        for s in range(m):
            if L[i, s] != 0.0:
                terms[tuple(1 if j == s else 0 for j in range(m))] = L[i, s]
        for d in range(2, order + 1):
            for alpha in monomials_of_degree(m, d):
                if rng.random() < fill:
                    terms[alpha.exponents] = float(rng.uniform(-0.8, 0.8))
        comps.append(Jet.from_terms(m, order, terms))
    return JetVector(comps, m, order)


def random_contact3d_spec(rng, order=5):
    """Random perturbation of the canonical 3-D contact template, keeping the
    contact structure at the origin exact (linear parts pinned, higher
    coefficients random)."""
    c = float(rng.uniform(-0.7, -0.3))  # extra multiplier 1 + c in (0.3, 0.7)

    def sprinkle(base, m, max_degree):
        terms = dict(base)
        for d in range(2, max_degree + 1):
            for alpha in monomials_of_degree(m, d):
                if rng.random() < 0.3:
                    terms[alpha.exponents] = terms.get(alpha.exponents, 0.0) \
                        + float(rng.uniform(-0.4, 0.4))
        return terms

    f = JetVector([
        Jet.from_terms(3, order, sprinkle({(0, 1, 0): 1.0}, 3, 3)),
        Jet.from_terms(3, order, sprinkle({(0, 0, 1): 1.0}, 3, 3)),
    ])

    def njet(const, slot):
        terms = {} if const == 0.0 else {(0, 0, 0): const}
        for var in range(3):
            if rng.random() < 0.5:
                exps = tuple(1 if j == var else 0 for j in range(3))
                terms[exps] = terms.get(exps, 0.0) + float(rng.uniform(-0.2, 0.2))
        return Jet.from_terms(3, order, terms)

    # N(0) = [[1, 0], [0, 0], [0, c]]: row 2 vanishes at the origin
    N = ((njet(1.0, 0), njet(0.0, 1)),
         (njet(0.0, 2), njet(0.0, 3)),
         (njet(0.0, 4), njet(c, 5)))
    G = JetVector([
        Jet.from_terms(4, order, {(0, 0, 0, 0): float(rng.uniform(0.5, 1.5)),
                                  (1, 0, 0, 0): float(rng.uniform(-0.3, 0.3)),
                                  (0, 0, 0, 1): float(rng.uniform(-0.2, 0.2))}),
        Jet.from_terms(4, order, {(0, 0, 0, 0): float(rng.uniform(0.2, 0.8)),
                                  (0, 1, 0, 0): float(rng.uniform(-0.3, 0.3))}),
        Jet.from_terms(4, order, {(0, 0, 1, 0): float(rng.uniform(-0.3, 0.3)),
                                  (0, 0, 0, 1): float(rng.uniform(-0.2, 0.2))}),
    ])
    return FastSlowMapSpec(n=3, k=1, order=order, N=N, f=f, G=G,
                           base_point=np.zeros(3))


@pytest.fixture
def fold_spec():
    return make_fold_spec()


@pytest.fixture
def superstable_spec():
    return make_superstable_spec()


@pytest.fixture
def contact3d_spec():
    return make_contact3d_spec()
