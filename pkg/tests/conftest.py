"""Shared fixtures: reference models and independent oracles."""

import numpy as np
import pytest

from matcascade.model import CascadeModel, Atom, model_from_dict


def make_model(p, atoms, field_kind="real"):
    return CascadeModel(
        p=p, mode="finite-atom", field_kind=field_kind,
        atoms=[Atom(prob=prob, matrices=[np.asarray(m, dtype=complex if field_kind == "complex" else float)
                                         for m in mats])
               for prob, mats in atoms])


@pytest.fixture
def model_a():
    # symmetric binary scalar cascade: two children, both weights 1/2
    return make_model(1, [(1.0, [[[0.5]], [[0.5]]])])


@pytest.fixture
def model_b():
    # single chain with the idempotent rank-one matrix
    return make_model(2, [(1.0, [[[0.5, 0.5], [0.5, 0.5]]])])


@pytest.fixture
def model_c():
    return make_model(2, [(1.0, [[[0.3, 0.2], [0.1, 0.4]],
                                 [[0.2, 0.3], [0.4, 0.1]]])])


@pytest.fixture
def model_d1():
    # scalar, two i.i.d. children, weights in {0.7, 0.3}: second moment holds
    a, b = 0.7, 0.3
    return make_model(1, [(0.25, [[[a]], [[a]]]),
                          (0.25, [[[a]], [[b]]]),
                          (0.25, [[[b]], [[a]]]),
                          (0.25, [[[b]], [[b]]])])


@pytest.fixture
def model_d2():
    # scalar, two i.i.d. children, weights in {1.9 w.p. 1/4, 1/30 w.p. 3/4}:
    # mean one but second moment blows up
    a, b = 1.9, 0.1 / 3
    return make_model(1, [(0.0625, [[[a]], [[a]]]),
                          (0.1875, [[[a]], [[b]]]),
                          (0.1875, [[[b]], [[a]]]),
                          (0.5625, [[[b]], [[b]]])])


@pytest.fixture
def model_rand():
    # nondegenerate random 2x2 model used for distributional tests
    return random_primitive_model(np.random.default_rng(2024), p=2,
                                  min_atoms=2)


def random_primitive_model(rng, p=None, max_atoms=3, max_children=3,
                           min_atoms=1):
    """Random all-positive finite-atom model normalized to spectral radius 1."""
    from matcascade.model import normalize_model

    if p is None:
        p = int(rng.integers(1, 4))
    n_atoms = int(rng.integers(min_atoms, max_atoms + 1))
    raw = rng.random(n_atoms) + 0.1
    probs = raw / raw.sum()
    atoms = []
    for a in range(n_atoms):
        n_children = int(rng.integers(1, max_children + 1))
        mats = [rng.uniform(0.05, 1.0, size=(p, p)) for _ in range(n_children)]
        atoms.append((probs[a], mats))
    # make probabilities sum to exactly 1 in float arithmetic
    atoms[-1] = (1.0 - sum(pr for pr, _ in atoms[:-1]), atoms[-1][1])
    return normalize_model(make_model(p, atoms))


# ---------------------------------------------------------------------------
# independent oracles

def eig_perron_oracle(mat):
    """Dominant eigentriple via the dense eigensolver (independent of the
    power-iteration code path)."""
    mat = np.asarray(mat, dtype=float)
    w, vr = np.linalg.eig(mat)
    wl, vl = np.linalg.eig(mat.T)
    i = int(np.argmax(w.real))
    j = int(np.argmax(wl.real))
    rho = float(w[i].real)
    v = np.abs(vr[:, i].real)
    u = np.abs(vl[:, j].real)
    u = u / u.sum()
    v = v / float(u @ v)
    return rho, u, v


def enumerate_paths(model, n):
    """All depth-n (probability-weight, product) pairs by direct expansion.

    Enumerates per-level (atom, child) choices independently of the
    convolution code: a depth-n path picks an atom and a child at every
    level; its weight is the product of atom probabilities.
    """
    level = [(a.prob, np.asarray(m, dtype=float))
             for a in model.atoms for m in a.matrices]
    paths = [(1.0, np.eye(model.p))]
    for _ in range(n):
        paths = [(w * lw, x @ lm) for w, x in paths for lw, lm in level]
    return paths


def brute_force_moment_matrix(model, t, n):
    """M_n(t) by exhaustive path enumeration (entrywise powers of products)."""
    out = np.zeros((model.p, model.p))
    for w, x in enumerate_paths(model, n):
        out += w * np.power(x, t)
    return out
