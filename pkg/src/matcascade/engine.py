"""Monte Carlo simulation of the weighted Galton-Watson tree.

Each replicate owns a counter-based (Philox) stream keyed by the master
seed and the replicate index, so a draw is reproducible from that pair
alone and independent of batch size or worker count.  Trees are stored
one generation at a time as the array of alive path products; arithmetic
is vectorized across replicates in chunks, with children restored to a
canonical (replicate, parent, child) order so results do not depend on
the chunking.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .model import ModelError
from .spectral import SpectralError, moment_matrix, perron, _entry_power

DEFAULT_CAP = 10_000_000
CHUNK = 4096

BATCH_MAGIC = b"MCSB"
BATCH_VERSION = 1


class SimulationError(ValueError):
    pass


@dataclass
class GenerationState:
    """Alive path products at one depth of a single replicate."""

    depth: int
    products: np.ndarray  # (node_count, p, p)

    @property
    def node_count(self):
        return self.products.shape[0]


@dataclass
class SampleBatch:
    """Replicated draws of the depth-n martingale value."""

    model_id: str
    n: int
    replicates: int
    values: np.ndarray  # (R, p), float or complex
    master_seed: int
    field_kind: str
    extinct: np.ndarray  # (R,) bool: tree died out before depth n
    capped: np.ndarray  # (R,) bool: population cap breached (values are NaN)
    tilt: float | None = None
    raw_values: np.ndarray | None = None  # tilted runs: sum before 1/rho(t)^n

    @property
    def p(self):
        return self.values.shape[1]

    @property
    def extinct_count(self):
        return int(self.extinct.sum())

    @property
    def capped_count(self):
        return int(self.capped.sum())

    def ok_values(self):
        """Values of replicates that did not breach the population cap."""
        return self.values[~self.capped]


def replicate_rng(master_seed, r):
    """Philox stream for replicate r of a run keyed by master_seed."""
    key = np.array([master_seed % 2**64, r % 2**64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _atom_tables(model, tilt=None):
    """Cumulative atom probabilities and per-atom child matrix stacks."""
    probs = np.array([a.prob for a in model.atoms])
    cum = np.cumsum(probs)
    cum[-1] = 1.0
    dtype = complex if model.is_complex else float
    stacks = []
    for a in model.atoms:
        if a.n_children:
            mats = np.stack([np.asarray(m, dtype=dtype) for m in a.matrices])
            if tilt is not None:
                mats = np.stack([_entry_power(m, tilt) for m in mats])
        else:
            mats = np.empty((0, model.p, model.p), dtype=dtype)
        stacks.append(mats)
    nch = np.array([a.n_children for a in model.atoms], dtype=np.int64)
    return cum, stacks, nch


def _sampler_draw(model, rng, count):
    """count draws of the child-matrix stack (count, N, p, p) for sampler laws."""
    fam = model.sampler["family"]
    params = model.sampler.get("params", {})
    n = int(params["n_children"])
    p = model.p
    shape = (count, n, p, p)
    if fam == "lognormal":
        mats = rng.lognormal(params.get("mu", 0.0), params.get("sigma", 1.0), shape)
    elif fam == "uniform":
        mats = rng.uniform(params.get("low", 0.0), params.get("high", 1.0), shape)
    else:
        raise ModelError(f"unknown sampler family {fam!r}")
    return mats


def _run_chunk(model, n, rngs, v, cap, tilt, dtype, want_traj, root_model=None):
    """Evolve one chunk of replicates; returns (Y array, traj, extinct, capped).

    Nodes are kept sorted by (replicate, canonical node order); children
    are produced per atom group and re-sorted by a global (parent, child)
    key, so the bytes are identical for any chunking of the replicates.

    root_model, when given, supplies the weight matrices of the first
    generation only (same offspring law; used by the mutation diagnostic).
    """
    m0 = len(rngs)
    p = model.p
    finite = model.mode == "finite-atom"
    if finite:
        cum, stacks, nch = _atom_tables(model, tilt=tilt)
        max_nch = max(int(nch.max()), 1)
        root_stacks = stacks
        if root_model is not None:
            _, root_stacks, _ = _atom_tables(root_model, tilt=tilt)

    products = np.broadcast_to(np.eye(p, dtype=dtype), (m0, p, p)).copy()
    rep = np.arange(m0)
    capped = np.zeros(m0, dtype=bool)
    traj = []

    def record():
        w = products @ v  # (nodes, p)
        y = np.zeros((m0, p), dtype=dtype)
        for j in range(p):
            col = w[:, j]
            if np.iscomplexobj(col):
                y[:, j] = (np.bincount(rep, weights=col.real, minlength=m0)
                           + 1j * np.bincount(rep, weights=col.imag, minlength=m0))
            else:
                y[:, j] = np.bincount(rep, weights=col, minlength=m0)
        y[capped] = np.nan
        return y

    if want_traj:
        traj.append(record())

    for gen in range(n):
        counts = np.bincount(rep, minlength=m0)
        if finite:
            gen_stacks = root_stacks if gen == 0 else stacks
            draws = np.empty(len(rep))
            pos = 0
            for i in range(m0):
                c = counts[i]
                if c:
                    draws[pos:pos + c] = rngs[i].random(c)
                    pos += c
            atom_idx = np.searchsorted(cum, draws, side="left")
            node_pos = np.arange(len(rep))
            parts_m, parts_r, parts_k = [], [], []
            for a in range(len(gen_stacks)):
                k = int(nch[a])
                mask = atom_idx == a
                if k == 0 or not mask.any():
                    continue
                child = np.einsum("mpq,kqr->mkpr", products[mask], gen_stacks[a])
                parts_m.append(child.reshape(-1, p, p))
                parts_r.append(np.repeat(rep[mask], k))
                keys = node_pos[mask][:, None] * max_nch + np.arange(k)[None, :]
                parts_k.append(keys.reshape(-1))
            if parts_m:
                keys = np.concatenate(parts_k)
                order = np.argsort(keys, kind="stable")
                products = np.concatenate(parts_m)[order]
                rep = np.concatenate(parts_r)[order]
            else:
                products = np.empty((0, p, p), dtype=dtype)
                rep = np.empty(0, dtype=np.int64)
        else:
            mats_list = []
            pos = 0
            for i in range(m0):
                c = counts[i]
                if c:
                    mats_list.append(_sampler_draw(model, rngs[i], c))
            if mats_list:
                mats = np.concatenate(mats_list).astype(dtype, copy=False)
                k = mats.shape[1]
                child = np.einsum("mpq,mkqr->mkpr", products, mats)
                products = child.reshape(-1, p, p)
                rep = np.repeat(rep, k)
            else:
                products = np.empty((0, p, p), dtype=dtype)
                rep = np.empty(0, dtype=np.int64)

        new_counts = np.bincount(rep, minlength=m0)
        breach = new_counts > cap
        if breach.any():
            capped |= breach
            keep = ~capped[rep]
            products = products[keep]
            rep = rep[keep]
        if want_traj:
            traj.append(record())

    y = traj[-1] if want_traj else record()
    extinct = (np.bincount(rep, minlength=m0) == 0) & ~capped
    return y, traj, extinct, capped


def _simulate(model, n, replicates, master_seed, cap, tilt, want_traj,
              chunk=CHUNK, identity_root=False):
    if n < 0:
        raise SimulationError("n must be >= 0")
    if replicates < 1:
        raise SimulationError("replicates must be >= 1")
    dtype = complex if model.is_complex else float
    p = model.p

    if tilt is None or tilt == 1:
        validation_mat = model.mean_matrix() if model.mode == "finite-atom" else None
        if validation_mat is not None:
            triple = perron(validation_mat)
        else:
            from .model import _estimate_mean_matrix_mc
            est, _ = _estimate_mean_matrix_mc(model, seed=master_seed)
            triple = perron(est)
        v = triple.v.astype(dtype)
        rho_t = 1.0
    else:
        mt = moment_matrix(model, tilt)
        try:
            triple = perron(mt)
        except SpectralError as e:
            raise SimulationError(f"tilted mean matrix: {e}") from e
        v = triple.v.astype(dtype)
        rho_t = triple.rho

    values = np.empty((replicates, p), dtype=dtype)
    extinct = np.zeros(replicates, dtype=bool)
    capped = np.zeros(replicates, dtype=bool)
    trajs = [] if want_traj else None
    root_model = _identity_root_model(model) if identity_root else None

    for start in range(0, replicates, chunk):
        stop = min(start + chunk, replicates)
        rngs = [replicate_rng(master_seed, r) for r in range(start, stop)]
        y, traj, ext, cpd = _run_chunk(model, n, rngs, v, cap, tilt, dtype,
                                       want_traj, root_model=root_model)
        values[start:stop] = y
        extinct[start:stop] = ext
        capped[start:stop] = cpd
        if want_traj:
            trajs.append(traj)

    if want_traj:
        traj_full = [np.concatenate([t[g] for t in trajs]) for g in range(n + 1)]
    else:
        traj_full = None
    return values, traj_full, extinct, capped, rho_t


def _identity_root_model(model):
    """Model whose root-generation weights are replaced by the identity.

    Used only by the fixed-point mutation diagnostic: keeps the offspring
    law but drops the depth-1 matrices.
    """
    from .model import Atom, CascadeModel

    eye = np.eye(model.p, dtype=complex if model.is_complex else float)
    atoms = [Atom(prob=a.prob, matrices=[eye.copy() for _ in a.matrices])
             for a in model.atoms]
    return CascadeModel(p=model.p, mode=model.mode, field_kind=model.field_kind,
                        atoms=atoms, sampler=model.sampler)


def simulate_Yn(model, n, seed, cap=DEFAULT_CAP):
    """One trajectory (Y_0, ..., Y_n) of the vector martingale.

    Y_0 = V; each node draws an offspring realization, children inherit
    the path product times their edge matrix, and Y_m sums product . V
    over depth-m nodes.  Extinction yields the zero vector from the
    extinction depth on.  A population-cap breach returns the partial
    trajectory with the capped marker set.
    """
    values, traj, extinct, capped, _ = _simulate(
        model, n, 1, seed, cap, tilt=None, want_traj=True)
    return values[0], [t[0] for t in traj], bool(capped[0])


def simulate_batch(model, n, replicates, master_seed, cap=DEFAULT_CAP):
    """R independent trajectories with per-replicate derived seeds."""
    values, _, extinct, capped, _ = _simulate(
        model, n, replicates, master_seed, cap, tilt=None, want_traj=False)
    return SampleBatch(model_id=model.content_hash(), n=n, replicates=replicates,
                       values=values, master_seed=master_seed,
                       field_kind=model.field_kind, extinct=extinct, capped=capped)


def simulate_tilted(model, t, n, replicates, master_seed, cap=DEFAULT_CAP):
    """Batch of the tilted martingale, normalized by rho(t)^n.

    The raw sum over depth-n nodes of the t-powered path products times
    V(t) is kept alongside; dividing by rho(t)^n makes the expectation
    V(t) at every depth.
    """
    values, _, extinct, capped, rho_t = _simulate(
        model, n, replicates, master_seed, cap, tilt=t, want_traj=False)
    raw = values.copy()
    values = values / rho_t**n
    return SampleBatch(model_id=model.content_hash(), n=n, replicates=replicates,
                       values=values, master_seed=master_seed,
                       field_kind=model.field_kind, extinct=extinct, capped=capped,
                       tilt=t, raw_values=raw)


def simulate_complex(model, n, seed, cap=DEFAULT_CAP, with_hat=False):
    """One complex trajectory; optionally the modulus-weight companion.

    The companion run uses |entries| for every weight with the same tree
    topology draws, for diagnostics of the modulus criteria.
    """
    if not model.is_complex:
        raise SimulationError("simulate_complex requires a complex-mode model")
    y, traj, capped = simulate_Yn(model, n, seed, cap=cap)
    if not with_hat:
        return y, traj, capped
    hat = _hat_model(model)
    y_hat, traj_hat, _ = simulate_Yn(hat, n, seed, cap=cap)
    return y, traj, capped, y_hat, traj_hat


def _hat_model(model):
    """Real model with the moduli of the complex entries."""
    from .model import Atom, CascadeModel

    atoms = [Atom(prob=a.prob, matrices=[np.abs(m) for m in a.matrices])
             for a in model.atoms]
    return CascadeModel(p=model.p, mode="finite-atom", field_kind="real",
                        atoms=atoms)


# ---------------------------------------------------------------------------
# batch serialization

def batch_to_csv(batch, path):
    """CSV: replicate, extinct_flag, capped_flag, then Y columns.

    Complex batches write re/im column pairs.  Floats use repr so a
    rerun with identical flags reproduces the file bytes.
    """
    p = batch.p
    cx = np.iscomplexobj(batch.values)
    if cx:
        cols = [f"Y{j+1}_re,Y{j+1}_im" for j in range(p)]
    else:
        cols = [f"Y{j+1}" for j in range(p)]
    with open(path, "w", encoding="utf-8") as f:
        f.write("replicate,extinct,capped," + ",".join(cols) + "\n")
        for r in range(batch.replicates):
            row = [str(r), str(int(batch.extinct[r])), str(int(batch.capped[r]))]
            for j in range(p):
                z = batch.values[r, j]
                if cx:
                    row.append(repr(float(z.real)))
                    row.append(repr(float(z.imag)))
                else:
                    row.append(repr(float(z)))
            f.write(",".join(row) + "\n")


def batch_to_binary(batch, path):
    """Compact binary layout.

    Header: magic 'MCSB' (4 bytes), uint32 version, uint32 p, uint64 R,
    uint32 n, uint8 field tag (0 real, 1 complex), 3 pad bytes; then R
    flag bytes (bit 0 extinct, bit 1 capped); then the value matrix as
    little-endian float64, row-major, re/im interleaved when complex.
    """
    cx = np.iscomplexobj(batch.values)
    header = BATCH_MAGIC + struct.pack(
        "<IIQIB3x", BATCH_VERSION, batch.p, batch.replicates, batch.n, int(cx))
    flags = (batch.extinct.astype(np.uint8)
             | (batch.capped.astype(np.uint8) << 1))
    if cx:
        payload = np.empty((batch.replicates, 2 * batch.p))
        payload[:, 0::2] = batch.values.real
        payload[:, 1::2] = batch.values.imag
    else:
        payload = batch.values.astype(float)
    with open(path, "wb") as f:
        f.write(header)
        f.write(flags.tobytes())
        f.write(payload.astype("<f8").tobytes())


def batch_from_binary(path, model_id="", master_seed=-1):
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != BATCH_MAGIC:
        raise SimulationError("not a batch file (bad magic)")
    version, p, r, n, cx = struct.unpack("<IIQIB", blob[4:25])
    if version != BATCH_VERSION:
        raise SimulationError(f"unsupported batch version {version}")
    off = 28
    flags = np.frombuffer(blob[off:off + r], dtype=np.uint8)
    off += r
    width = 2 * p if cx else p
    payload = np.frombuffer(blob[off:off + 8 * r * width], dtype="<f8")
    payload = payload.reshape(r, width)
    if cx:
        values = payload[:, 0::2] + 1j * payload[:, 1::2]
    else:
        values = payload.copy()
    return SampleBatch(model_id=model_id, n=n, replicates=r, values=values,
                       master_seed=master_seed,
                       field_kind="complex" if cx else "real",
                       extinct=(flags & 1).astype(bool),
                       capped=((flags >> 1) & 1).astype(bool))
