"""Two-qubit state reconstruction from 16-setting count records, fidelity,
concurrence, bootstrap error bars and the four-dimensional assembly."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import eigh
from scipy.optimize import minimize

from .circuit import analytic_swapped_density_matrix, mixture_components
from .measurement import CountRecord, MeasurementError, subtract_background
from .states import DensityMatrix, SpiralSpectrum, StateError, bell_state, two_photon_basis

log = logging.getLogger(__name__)

EIG_CLIP = -1e-10

_I = np.eye(2, dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)
_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_PAULI = (_I, _X, _Y, _Z)
_HERMITIAN_BASIS = [np.kron(a, b) for a in _PAULI for b in _PAULI]
_YY = np.kron(_Y, _Y)


class TomographyError(RuntimeError):
    pass


@dataclass(frozen=True)
class ReconstructionResult:
    rho: DensityMatrix
    method: str
    log_likelihood: float | None = None
    iterations: int = 0
    converged: bool = True
    history: tuple[float, ...] = field(default=(), repr=False)


@dataclass(frozen=True)
class EntanglementReport:
    fidelity: float
    fidelity_err: float
    concurrence: float
    concurrence_err: float


# --------------------------------------------------------------------------
# matrix helpers
# --------------------------------------------------------------------------


def _as_matrix(rho) -> np.ndarray:
    return rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Hermitian square root; eigenvalues in [-1e-10, 0] are clipped to zero."""
    h = (m + m.conj().T) / 2
    w, v = eigh(h)
    if w.min() < EIG_CLIP * max(1.0, abs(w).max()):
        raise StateError(f"matrix is not positive semidefinite (min eigenvalue {w.min():.3g})")
    # eigenvalues at round-off level would otherwise add sqrt(eps) noise
    w = np.where(w > 64 * np.finfo(float).eps * abs(w).max(), w, 0.0)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity(rho, sigma) -> float:
    """Uhlmann fidelity ``Tr(sqrt(sqrt(rho) sigma sqrt(rho)))^2``."""
    a, b = _as_matrix(rho), _as_matrix(sigma)
    if a.shape != b.shape:
        raise StateError(f"dimension mismatch {a.shape} vs {b.shape}")
    # nuclear norm of sqrt(rho) sqrt(sigma); avoids square roots of round-off
    f = float(np.sum(np.linalg.svd(psd_sqrt(a) @ psd_sqrt(b), compute_uv=False)) ** 2)
    return min(max(f, 0.0), 1.0)


def trace_distance(rho, sigma) -> float:
    d = _as_matrix(rho) - _as_matrix(sigma)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh((d + d.conj().T) / 2))))


def concurrence(rho) -> float:
    """Wootters concurrence of a two-qubit density matrix.

    The qubit of each photon is its two-mode subspace in ascending OAM order.
    """
    m = _as_matrix(rho)
    if m.shape != (4, 4):
        raise StateError(f"concurrence needs a 4x4 two-qubit matrix, got {m.shape}")
    s = psd_sqrt(m)
    # eigenvalues of R are the singular values of sqrt(rho) sqrt(rho~)
    lam = np.linalg.svd(s @ _YY @ s.conj() @ _YY, compute_uv=False)
    return float(max(0.0, lam[0] - lam[1] - lam[2] - lam[3]))


def fidelity_vs_visibility(visibility: float) -> float:
    """Singlet fidelity of ``V |Psi-><Psi-| + (1 - V) I/4``."""
    if not 0.0 <= visibility <= 1.0:
        raise ValueError(f"visibility {visibility} outside [0, 1]")
    return visibility + (1 - visibility) / 4


def werner_concurrence(visibility: float) -> float:
    return max(0.0, (3 * visibility - 1) / 2)


def singlet(subspace: tuple[int, int]) -> DensityMatrix:
    """``|Psi-><Psi-|`` for the two modes of ``subspace`` in the ascending basis."""
    l1, l2 = sorted(subspace)
    basis = two_photon_basis((l1, l2))
    rho = DensityMatrix(("A", "D"), basis, np.zeros((4, 4)))
    v = rho.vector(bell_state(l1, l2, "-", ("A", "D")))
    return DensityMatrix(("A", "D"), basis, np.outer(v, v.conj()))


def project_to_physical(m: np.ndarray) -> np.ndarray:
    """Clip negative eigenvalues of the Hermitian part and renormalize the trace."""
    h = (m + m.conj().T) / 2
    w, v = eigh(h)
    w = np.clip(w, 0.0, None)
    if w.sum() <= 0:
        raise TomographyError("reconstruction has no positive weight")
    w = w / w.sum()
    return (v * w) @ v.conj().T


# --------------------------------------------------------------------------
# reconstruction
# --------------------------------------------------------------------------


def _subspace_of(records: Sequence[CountRecord]) -> tuple[int, int]:
    if len(records) != 16:
        raise TomographyError(f"need 16 records, got {len(records)}")
    subs = {tuple(sorted(r.setting.subspace)) for r in records}
    if len(subs) != 1:
        raise TomographyError(f"records span several subspaces: {sorted(subs)}")
    return subs.pop()


def _design(records: Sequence[CountRecord]) -> tuple[np.ndarray, np.ndarray]:
    ops = np.array([r.setting.operator() for r in records])
    counts = np.array([subtract_background(r) for r in records], dtype=float)
    return ops, counts


def log_likelihood(rho, records_or_ops, counts=None) -> float:
    """Poisson log-likelihood with the overall rate profiled out (constants dropped).

    ``sum n_k log p_k + N log(N / P) - N`` with ``p_k = Tr(rho M_k)``,
    ``N = sum n_k`` and ``P = sum p_k``.
    """
    if counts is None:
        ops, counts = _design(records_or_ops)
    else:
        ops = np.asarray(records_or_ops)
    m = _as_matrix(rho)
    p = np.real(np.einsum("kij,ji->k", ops, m))
    n_tot, p_tot = counts.sum(), p.sum()
    pos = counts > 0
    if np.any(p[pos] <= 0):
        return -np.inf
    return float(np.sum(counts[pos] * np.log(p[pos])) + n_tot * np.log(n_tot / p_tot) - n_tot)


def _linear_estimate(ops: np.ndarray, counts: np.ndarray) -> np.ndarray:
    a = np.real(np.einsum("kij,mji->km", ops, np.array(_HERMITIAN_BASIS)))
    if np.linalg.cond(a) > 1e8:
        raise TomographyError("measurement matrix is singular")
    x = np.linalg.solve(a, counts)
    raw = np.einsum("m,mij->ij", x, np.array(_HERMITIAN_BASIS))
    tr = np.trace(raw).real
    if tr <= 0:
        raise TomographyError("linear inversion gives non-positive trace")
    return raw / tr


def reconstruct_linear(records: Sequence[CountRecord]) -> ReconstructionResult:
    """Exact inversion of the 16 Born-rule equations, then eigenvalue clipping."""
    sub = _subspace_of(records)
    ops, counts = _design(records)
    if counts.sum() <= 0:
        raise TomographyError("no counts left after background subtraction")
    rho = project_to_physical(_linear_estimate(ops, counts))
    dm = DensityMatrix(("A", "D"), two_photon_basis(sub), rho)
    return ReconstructionResult(dm, "linear", log_likelihood(rho, ops, counts))


def _tri_indices():
    iu = np.triu_indices(4)
    return iu, iu[0] != iu[1]


def _pack(t: np.ndarray) -> np.ndarray:
    iu, off = _tri_indices()
    vals = t[iu]
    return np.concatenate([vals.real, vals.imag[off]])


def _unpack(x: np.ndarray) -> np.ndarray:
    iu, off = _tri_indices()
    n = len(iu[0])
    vals = x[:n].astype(complex)
    vals[off] += 1j * x[n:]
    t = np.zeros((4, 4), dtype=complex)
    t[iu] = vals
    return t


def reconstruct_mle(
    records: Sequence[CountRecord],
    init: str = "linear",
    max_iter: int = 100_000,
    gtol: float = 1e-8,
) -> ReconstructionResult:
    """Poisson maximum likelihood over physical states, ``rho = T^dag T / Tr``.

    ``T`` is upper triangular with free overall scale (the scale absorbs the
    unknown total rate).  L-BFGS maximizes ``sum n_k log lam_k - lam_k`` with
    ``lam_k = Tr(T^dag T M_k)``.  ``init`` is ``"linear"`` (clipped linear
    inversion, lightly mixed) or ``"mixed"`` (``I/4``).
    """
    sub = _subspace_of(records)
    ops, counts = _design(records)
    n_tot = counts.sum()
    if n_tot <= 0:
        raise TomographyError("no counts left after background subtraction")
    scale = n_tot
    nn = counts / scale

    if init == "linear":
        try:
            rho0 = project_to_physical(_linear_estimate(ops, counts))
        except TomographyError:
            rho0 = np.eye(4) / 4
        rho0 = (1 - 1e-9) * rho0 + 1e-9 * np.eye(4) / 4
    elif init == "mixed":
        rho0 = np.eye(4) / 4
    else:
        raise ValueError(f"unknown init {init!r}")
    p0 = np.real(np.einsum("kij,ji->k", ops, rho0))
    rho0 = rho0 * (nn.sum() / p0.sum())
    # rho0 = L L^dag with L lower; T = L^dag is upper so rho0 = T^dag T
    t0 = np.linalg.cholesky((rho0 + rho0.conj().T) / 2).conj().T
    pos = nn > 0

    def objective(x):
        t = _unpack(x)
        r = t.conj().T @ t
        lam = np.real(np.einsum("kij,ji->k", ops, r))
        if np.any(lam[pos] <= 0):
            return np.inf, np.zeros_like(x)
        f = -(np.sum(nn[pos] * np.log(lam[pos])) - lam.sum())
        w = np.zeros_like(lam)
        w[pos] = nn[pos] / lam[pos]
        g_op = np.einsum("k,kij->ij", w - 1.0, ops)
        grad_c = 2 * (t @ g_op)  # dL/dRe + i dL/dIm
        return f, -_pack(grad_c)

    history: list[float] = []

    def record(xk):
        history.append(-objective(xk)[0])

    x0 = _pack(t0)
    history.append(-objective(x0)[0])
    res = minimize(
        objective, x0, jac=True, method="L-BFGS-B", callback=record,
        options={"maxiter": max_iter, "maxfun": 10 * max_iter, "ftol": 1e-16, "gtol": 1e-14, "maxcor": 30},
    )
    t = _unpack(res.x)
    r = t.conj().T @ t
    rho = r / np.trace(r).real
    rho = (rho + rho.conj().T) / 2
    gnorm = float(np.linalg.norm(objective(res.x)[1]))
    improve = abs(history[-1] - history[-2]) if len(history) > 1 else 0.0
    converged = bool(res.success or gnorm < gtol or improve < 1e-10 / scale)
    if not converged:
        log.warning("MLE stopped without converging: %s", res.message)
    dm = DensityMatrix(("A", "D"), two_photon_basis(sub), rho)
    return ReconstructionResult(
        dm, "mle", log_likelihood(rho, ops, counts), int(res.nit), converged, tuple(history)
    )


def reconstruct(records: Sequence[CountRecord], method: str = "mle") -> ReconstructionResult:
    if method == "mle":
        return reconstruct_mle(records)
    if method == "linear":
        return reconstruct_linear(records)
    raise ValueError(f"unknown reconstruction method {method!r}")


# --------------------------------------------------------------------------
# uncertainties
# --------------------------------------------------------------------------


def entanglement_of(rho: DensityMatrix, subspace: tuple[int, int]) -> tuple[float, float]:
    return fidelity(rho, singlet(subspace)), concurrence(rho)


def error_bars(
    records: Sequence[CountRecord], method: str = "mle", n_resamples: int = 100, seed: int = 0
) -> EntanglementReport:
    """Parametric Poisson bootstrap of singlet fidelity and concurrence.

    Each resample redraws every raw count from ``Poisson(observed)`` and redoes
    background subtraction and reconstruction; the reported uncertainty is the
    sample standard deviation over resamples.
    """
    if n_resamples < 100:
        raise ValueError("n_resamples must be at least 100")
    sub = _subspace_of(records)
    if sum(r.fourfold_raw for r in records) == 0:
        raise TomographyError("cannot bootstrap records with zero counts")
    best = reconstruct(records, method)
    f0, c0 = entanglement_of(best.rho, sub)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xB007]))
    fs, cs = [], []
    for _ in range(n_resamples):
        resampled = [
            CountRecord(r.setting, int(rng.poisson(r.fourfold_raw)), r.duration_s, r.singles_hz, r.pairs_hz, r.rep_rate_hz)
            for r in records
        ]
        try:
            rr = reconstruct(resampled, method)
        except TomographyError:
            continue
        f, c = entanglement_of(rr.rho, sub)
        fs.append(f)
        cs.append(c)
    if len(fs) < 2:
        raise TomographyError("bootstrap produced fewer than two usable resamples")
    return EntanglementReport(f0, float(np.std(fs, ddof=1)), c0, float(np.std(cs, ddof=1)))


# --------------------------------------------------------------------------
# four-dimensional assembly
# --------------------------------------------------------------------------


def subspace_weights(spectrum: SpiralSpectrum) -> dict[frozenset, float]:
    """Mixture weight of each two-mode singlet, keyed by its mode pair."""
    return {frozenset(pair): w for w, pair in mixture_components(spectrum)}


def assemble_4d(
    subspace_rhos: Mapping[tuple[int, int], DensityMatrix],
    spectrum: SpiralSpectrum,
    modes: Sequence[int] | None = None,
) -> DensityMatrix:
    """Combine six two-mode reconstructions into one estimate over four modes.

    Each block is weighted by its singlet's mixture weight and written into
    the 16-dimensional basis.  Elements covered by several blocks (the
    ``|l l>`` populations) take the mean of the contributions, so feeding in
    the normalized blocks of any state whose block traces equal the weights
    returns that state.  The result is trace-normalized; if noise leaves a
    negative eigenvalue it is replaced by the nearest physical state that
    keeps the uncovered elements at zero.  Those elements are marked
    unmeasured.
    """
    weights = subspace_weights(spectrum)
    if modes is None:
        modes = sorted({m for s in subspace_rhos for m in s})
    modes = sorted(modes)
    needed = [frozenset((a, b)) for i, a in enumerate(modes) for b in modes[i + 1:]]
    given = {frozenset(k): v for k, v in subspace_rhos.items()}
    missing = [tuple(sorted(s)) for s in needed if s not in given]
    if missing:
        raise TomographyError(f"missing subspaces {missing}")
    basis = two_photon_basis(modes)
    pos = {b: i for i, b in enumerate(basis)}
    acc = np.zeros((len(basis), len(basis)), dtype=complex)
    cover = np.zeros((len(basis), len(basis)), dtype=int)
    for s in needed:
        rho = given[s]
        rho.check(1e-8)
        sub = tuple(sorted(s))
        block = rho.embed(two_photon_basis(sub)).matrix if tuple(rho.basis) != tuple(two_photon_basis(sub)) else rho.matrix
        idx = [pos[b] for b in two_photon_basis(sub)]
        w = weights.get(s, 0.0)
        acc[np.ix_(idx, idx)] += w * block
        cover[np.ix_(idx, idx)] += 1
    measured = cover > 0
    out = np.where(measured, acc / np.maximum(cover, 1), 0)
    out = out / np.trace(out).real
    if np.linalg.eigvalsh((out + out.conj().T) / 2).min() < -1e-12:
        log.debug("assembled estimate not PSD; projecting with the unmeasured mask held at zero")
        out = nearest_masked_state(out, measured)
    return DensityMatrix(("A", "D"), basis, out, measured)


def nearest_masked_state(m: np.ndarray, mask: np.ndarray, tol: float = 1e-13, max_iter: int = 100_000) -> np.ndarray:
    """Closest (Frobenius) PSD, unit-trace matrix vanishing where ``mask`` is False.

    Dykstra alternating projections between the PSD cone and the affine set
    {zero off-mask, trace one}.
    """
    mask = np.asarray(mask, dtype=bool)
    n = m.shape[0]

    def affine(x):
        x = np.where(mask, x, 0)
        x = x + (1 - np.trace(x).real) * np.eye(n) / n
        return (x + x.conj().T) / 2

    def cone(x):
        w, v = eigh((x + x.conj().T) / 2)
        return (v * np.clip(w, 0, None)) @ v.conj().T

    x = affine(m)
    p = np.zeros_like(x)
    q = np.zeros_like(x)
    for _ in range(max_iter):
        y = cone(x + p)
        p = x + p - y
        x_new = affine(y + q)
        q = y + q - x_new
        x = x_new
        if np.linalg.eigvalsh(x).min() > -tol:
            return x
    raise TomographyError("could not find a physical state with the unmeasured elements held at zero")


def fidelity_to_prediction(assembled: DensityMatrix, spectrum: SpiralSpectrum) -> float:
    """Fidelity of a 4-mode estimate with the predicted swapped mixture.

    Only measured elements of ``assembled`` enter; the prediction vanishes on
    the unmeasured ones.
    """
    theory = analytic_swapped_density_matrix(spectrum).embed(assembled.basis)
    m = assembled.matrix if assembled.measured is None else np.where(assembled.measured, assembled.matrix, 0)
    return fidelity(m, theory.matrix)


# --------------------------------------------------------------------------
# export
# --------------------------------------------------------------------------


def density_matrix_to_dict(rho: DensityMatrix) -> dict:
    return {
        "paths": list(rho.paths),
        "basis": [list(b) for b in rho.basis],
        "real": rho.matrix.real.tolist(),
        "imag": rho.matrix.imag.tolist(),
        "measured": None if rho.measured is None else rho.measured.tolist(),
    }


def density_matrix_from_dict(d: dict) -> DensityMatrix:
    m = np.array(d["real"], dtype=float) + 1j * np.array(d["imag"], dtype=float)
    measured = d.get("measured")
    return DensityMatrix(tuple(d["paths"]), [tuple(b) for b in d["basis"]], m,
                         None if measured is None else np.array(measured, dtype=bool))


def dump_density_matrix(rho: DensityMatrix) -> str:
    return json.dumps(density_matrix_to_dict(rho), indent=1)


def load_density_matrix(text: str) -> DensityMatrix:
    return density_matrix_from_dict(json.loads(text))


__all__ = [
    "EntanglementReport",
    "ReconstructionResult",
    "TomographyError",
    "assemble_4d",
    "concurrence",
    "density_matrix_from_dict",
    "density_matrix_to_dict",
    "dump_density_matrix",
    "entanglement_of",
    "error_bars",
    "fidelity",
    "fidelity_to_prediction",
    "fidelity_vs_visibility",
    "load_density_matrix",
    "log_likelihood",
    "nearest_masked_state",
    "project_to_physical",
    "psd_sqrt",
    "reconstruct",
    "reconstruct_linear",
    "reconstruct_mle",
    "singlet",
    "subspace_weights",
    "trace_distance",
    "werner_concurrence",
]
