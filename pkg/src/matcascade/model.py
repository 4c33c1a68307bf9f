"""Cascade models: the reproduction law of (N, A_1, A_2, ...).

A finite-atom model lists every realization of the offspring weights
with its probability, so every expectation downstream is a finite sum.
Sampler-backed models (fixed child count, i.i.d. random entries) are
accepted for simulation only.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

WIELANDT = lambda p: p * p - 2 * p + 2  # noqa: E731 - primitivity exponent bound

PROB_SUM_TOL = 1e-9
RHO_TOL = 1e-9


class ModelError(ValueError):
    """Malformed model file or contract violation."""


@dataclass
class Atom:
    """One realization of (N, A_1, ..., A_N); N is the number of matrices."""

    prob: float
    matrices: list  # list of (p, p) ndarrays

    @property
    def n_children(self):
        return len(self.matrices)


@dataclass
class CascadeModel:
    p: int
    mode: str  # "finite-atom" | "sampler"
    field_kind: str  # "real" | "complex"
    atoms: list = field(default_factory=list)
    sampler: dict | None = None
    source_hash: str | None = None

    @property
    def is_complex(self):
        return self.field_kind == "complex"

    def mean_offspring(self):
        """E N for finite-atom laws."""
        self._require_finite_atom()
        return sum(a.prob * a.n_children for a in self.atoms)

    def offspring_probabilities(self):
        """Law of N as a dict {n: probability}."""
        self._require_finite_atom()
        law: dict[int, float] = {}
        for a in self.atoms:
            law[a.n_children] = law.get(a.n_children, 0.0) + a.prob
        return law

    def min_offspring(self):
        """essinf N: smallest child count carried with positive probability."""
        self._require_finite_atom()
        return min(a.n_children for a in self.atoms if a.prob > 0)

    def mean_matrix(self):
        """M = E sum_k A_k; absolute values are taken in complex mode."""
        self._require_finite_atom()
        m = np.zeros((self.p, self.p))
        for a in self.atoms:
            for mat in a.matrices:
                m += a.prob * np.abs(mat) if self.is_complex else a.prob * mat
        return m

    def content_hash(self):
        """Stable hash of the model content (used to tag sample batches)."""
        if self.source_hash is not None:
            return self.source_hash
        blob = json.dumps(model_to_dict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def _require_finite_atom(self):
        if self.mode != "finite-atom":
            raise ModelError("operation requires a finite-atom model")


@dataclass
class ValidationReport:
    mean_matrix: np.ndarray
    primitive: bool
    primitivity_exponent: int | None
    perron: "PerronTriple | None"
    spectral_radius_deviation: float | None
    assumption_h: str  # "holds" or "fails: <reason>"
    mean_matrix_stderr: np.ndarray | None = None  # sampler mode only
    norm_convention: str = "matrix norm: entrywise absolute sum; vector norm: L1"

    @property
    def holds(self):
        return self.assumption_h == "holds"


def _parse_entry(x, complex_mode):
    if isinstance(x, (list, tuple)):
        if not complex_mode:
            raise ModelError("two-element entry in real mode")
        if len(x) != 2:
            raise ModelError("complex entry must be [re, im]")
        return complex(float(x[0]), float(x[1]))
    v = float(x)
    return complex(v, 0.0) if complex_mode else v


def _parse_matrix(rows, p, complex_mode):
    dtype = complex if complex_mode else float
    mat = np.empty((p, p), dtype=dtype)
    if len(rows) != p:
        raise ModelError(f"matrix has {len(rows)} rows, expected {p}")
    for i, row in enumerate(rows):
        if len(row) != p:
            raise ModelError(f"matrix row has {len(row)} entries, expected {p}")
        for j, x in enumerate(row):
            mat[i, j] = _parse_entry(x, complex_mode)
    if not np.all(np.isfinite(mat)):
        raise ModelError("non-finite matrix entry")
    if not complex_mode and np.any(mat < 0):
        raise ModelError("negative entry in real mode")
    return mat


def model_from_dict(doc, source_hash=None):
    try:
        p = int(doc["p"])
        mode = doc.get("mode", "finite-atom")
        field_kind = doc.get("field", "real")
    except (KeyError, TypeError) as e:
        raise ModelError(f"missing model key: {e}") from e
    if p < 1:
        raise ModelError("dimension p must be >= 1")
    if field_kind not in ("real", "complex"):
        raise ModelError(f"unknown field {field_kind!r}")
    if mode not in ("finite-atom", "sampler"):
        raise ModelError(f"unknown mode {mode!r}")

    complex_mode = field_kind == "complex"
    if mode == "sampler":
        sampler = doc.get("sampler")
        if not isinstance(sampler, dict) or "family" not in sampler:
            raise ModelError("sampler mode requires a sampler spec with a family")
        if sampler["family"] not in ("lognormal", "uniform"):
            raise ModelError(f"unknown sampler family {sampler['family']!r}")
        params = sampler.get("params", {})
        if int(params.get("n_children", 0)) < 1:
            raise ModelError("sampler requires params.n_children >= 1")
        return CascadeModel(p=p, mode=mode, field_kind=field_kind,
                            sampler=sampler, source_hash=source_hash)

    atoms = []
    total = 0.0
    for raw in doc.get("atoms", []):
        prob = float(raw["prob"])
        if not 0.0 < prob <= 1.0:
            raise ModelError(f"atom probability {prob} outside (0, 1]")
        mats = [_parse_matrix(rows, p, complex_mode) for rows in raw["matrices"]]
        atoms.append(Atom(prob=prob, matrices=mats))
        total += prob
    if not atoms:
        raise ModelError("finite-atom model needs at least one atom")
    if abs(total - 1.0) > PROB_SUM_TOL:
        raise ModelError(f"atom probabilities sum to {total!r}, off by more than {PROB_SUM_TOL}")
    if total != 1.0:
        for a in atoms:
            a.prob /= total
    return CascadeModel(p=p, mode=mode, field_kind=field_kind, atoms=atoms,
                        source_hash=source_hash)


def model_to_dict(model):
    doc = {"p": model.p, "field": model.field_kind, "mode": model.mode}
    if model.mode == "sampler":
        doc["sampler"] = model.sampler
        return doc
    doc["atoms"] = []
    for a in model.atoms:
        mats = []
        for m in a.matrices:
            if model.is_complex:
                mats.append([[[x.real, x.imag] for x in row] for row in m])
            else:
                mats.append([[float(x) for x in row] for row in m])
        doc["atoms"].append({"prob": a.prob, "matrices": mats})
    return doc


def load_model(path):
    """Read a model file (JSON, UTF-8) and return a validated CascadeModel."""
    try:
        with open(path, encoding="utf-8") as f:
            raw = f.read()
    except OSError as e:
        raise ModelError(f"cannot read model: {e}") from e
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ModelError(f"parse error in {path}: {e}") from e
    return model_from_dict(doc, source_hash=hashlib.sha256(raw.encode()).hexdigest())


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(model_to_dict(model), f, indent=2)
        f.write("\n")


def scale_model(model, c):
    """Multiply every matrix of every atom by the scalar c > 0."""
    model._require_finite_atom()
    if c <= 0:
        raise ModelError("scale factor must be positive")
    atoms = [Atom(prob=a.prob, matrices=[c * m for m in a.matrices])
             for a in model.atoms]
    return CascadeModel(p=model.p, mode=model.mode, field_kind=model.field_kind,
                        atoms=atoms)


def primitivity(mat, max_exponent=None):
    """(is_primitive, exponent) via boolean powers up to the Wielandt bound.

    A nonnegative matrix is primitive when some power is entrywise
    positive; the smallest such power is at most p^2 - 2p + 2.
    """
    p = mat.shape[0]
    if max_exponent is None:
        max_exponent = max(WIELANDT(p), 1)
    b = np.abs(np.asarray(mat)) > 0
    power = b.copy()
    for k in range(1, max_exponent + 1):
        if power.all():
            return True, k
        power = (power.astype(np.int64) @ b.astype(np.int64)) > 0
    return False, None


def _estimate_mean_matrix_mc(model, draws=20000, seed=0):
    """Monte Carlo mean matrix for sampler models, with standard error."""
    from .engine import _sampler_draw  # local import: engine depends on model

    rng = np.random.default_rng(seed)
    acc = np.zeros((model.p, model.p))
    acc2 = np.zeros((model.p, model.p))
    for _ in range(draws):
        mats = _sampler_draw(model, rng, 1)[0]
        s = np.abs(mats).sum(axis=0) if model.is_complex else mats.sum(axis=0)
        acc += s
        acc2 += s * s
    mean = acc / draws
    var = np.maximum(acc2 / draws - mean**2, 0.0)
    return mean, np.sqrt(var / draws)


def validate_model(model, mc_draws=20000, mc_seed=0):
    """Check the standing spectral assumption on the mean matrix.

    Builds M = E sum_k A_k (exactly for finite-atom laws, by Monte Carlo
    for sampler laws), decides primitivity by boolean powers, attaches
    Perron data, and reports whether the maximal eigenvalue equals 1.
    """
    from .spectral import perron

    stderr = None
    if model.mode == "finite-atom":
        m = model.mean_matrix()
    else:
        m, stderr = _estimate_mean_matrix_mc(model, draws=mc_draws, seed=mc_seed)

    primitive, exponent = primitivity(m)
    if not primitive:
        return ValidationReport(
            mean_matrix=m, primitive=False, primitivity_exponent=None,
            perron=None, spectral_radius_deviation=None,
            assumption_h="fails: mean matrix is not primitive",
            mean_matrix_stderr=stderr)

    triple = perron(m)
    deviation = abs(triple.rho - 1.0)
    if deviation > RHO_TOL:
        verdict = (f"fails: spectral radius {triple.rho!r} deviates from 1 "
                   f"by {deviation:.3e}; call normalize_model")
    else:
        verdict = "holds"
    return ValidationReport(
        mean_matrix=m, primitive=True, primitivity_exponent=exponent,
        perron=triple, spectral_radius_deviation=deviation,
        assumption_h=verdict, mean_matrix_stderr=stderr)


def normalize_model(model):
    """Rescale every weight matrix by 1/rho so the mean matrix has rho = 1."""
    from .spectral import perron

    model._require_finite_atom()
    m = model.mean_matrix()
    primitive, _ = primitivity(m)
    if not primitive:
        raise ModelError("cannot normalize: mean matrix is not primitive")
    rho = perron(m).rho
    if rho <= 0:
        raise ModelError("cannot normalize: zero spectral radius")
    return scale_model(model, 1.0 / rho)
