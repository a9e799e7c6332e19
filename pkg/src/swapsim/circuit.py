"""Beamsplitter, coincidence post-selection and the swapped two-photon state.

Beamsplitter convention (mirror compensation folded in, helicity preserved)::

    |l>_B -> (|l>_C - |l>_B) / sqrt(2)
    |l>_C -> (|l>_B + |l>_C) / sqrt(2)

Output ports are relabelled with the input letters, so the post-selected
state lives on paths A, B, C, D again.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .states import (
    PATHS,
    DensityMatrix,
    Ket,
    PureState,
    SpiralSpectrum,
    StateError,
    _occupation_factor,
    bell_state,
    partial_trace,
    product_state,
    spdc_state,
    tensor,
    two_photon_basis,
)

_B, _C = PATHS.index("B"), PATHS.index("C")
_SQRT_HALF = 1 / math.sqrt(2)

# photon entering B or C -> [(output slot, amplitude), ...]
_BS_RULES = {
    _B: ((_C, _SQRT_HALF), (_B, -_SQRT_HALF)),
    _C: ((_B, _SQRT_HALF), (_C, _SQRT_HALF)),
}


class PostSelectionError(StateError):
    """Raised when the coincidence-conditioned component vanishes."""


@dataclass(frozen=True)
class PostSelectionResult:
    state: PureState
    probability: float
    normalization: float  # K = 1 / sqrt(probability)

    @property
    def discarded(self) -> float:
        return 1.0 - self.probability


def beamsplitter_bc(state: PureState) -> PureState:
    """Apply the B/C beamsplitter to every photon in paths B and C."""
    if not {"B", "C"} <= state.paths:
        raise StateError("beamsplitter needs photons in both B and C")
    out: dict[Ket, complex] = {}
    for ket, coef in state.terms.items():
        # orthonormal coefficient -> creation-operator monomial amplitude
        amp = coef / math.sqrt(_occupation_factor(ket))
        movers = [(slot, ell) for slot in (_B, _C) for ell in ket[slot]]
        fixed = [list(s) if i not in (_B, _C) else [] for i, s in enumerate(ket)]
        for choice in itertools.product(*(_BS_RULES[slot] for slot, _ in movers)):
            slots = [list(s) for s in fixed]
            a = amp
            for (_, ell), (dest, t) in zip(movers, choice):
                slots[dest].append(ell)
                a *= t
            new = tuple(tuple(sorted(s)) for s in slots)
            out[new] = out.get(new, 0j) + a
    terms = {}
    for k, a in out.items():
        c = a * math.sqrt(_occupation_factor(k))
        if abs(c) > 1e-15:
            terms[k] = c
    return PureState(terms)


def is_coincidence(ket: Ket) -> bool:
    return len(ket[_B]) == 1 and len(ket[_C]) == 1


def postselect_coincidence(state: PureState) -> PostSelectionResult:
    """Keep kets with exactly one photon in each of B and C and renormalize."""
    total = state.norm_squared()
    kept = {k: a for k, a in state.terms.items() if is_coincidence(k)}
    p = sum(abs(a) ** 2 for a in kept.values()) / total
    if not kept or p < 1e-24:
        raise PostSelectionError("no coincidence component survives the beamsplitter")
    st = PureState(kept).normalized()
    return PostSelectionResult(st, float(p), 1.0 / math.sqrt(p))


def swap_input(spectrum: SpiralSpectrum, truncation: int | None = None) -> PureState:
    """Two independent downconverted pairs, AB and CD, with the same spectrum."""
    return tensor(spdc_state(spectrum, ("A", "B"), truncation), spdc_state(spectrum, ("C", "D"), truncation))


def swapped_density_matrix(state: PureState) -> DensityMatrix:
    """Reduced A-D state after the beamsplitter and coincidence post-selection."""
    kept = postselect_coincidence(beamsplitter_bc(state))
    return partial_trace(kept.state, {"A", "D"})


def antisymmetric_dimension(d: int) -> int:
    """Number of antisymmetric two-photon basis states over ``d`` modes."""
    if d < 2:
        raise ValueError(f"need at least two modes, got d={d}")
    return d * (d - 1) // 2


def project_pair(state: PureState, target: PureState, onto: tuple[str, str] = ("B", "C")) -> PureState:
    """Unnormalized ``(<target|_onto (x) 1) |state>``: the conditional state of the other paths."""
    idx = [PATHS.index(p) for p in onto]
    conj = {k: np.conj(a) for k, a in target.terms.items()}
    out: dict[Ket, complex] = {}
    for k, a in state.terms.items():
        part = tuple(k[i] if i in idx else () for i in range(len(PATHS)))
        w = conj.get(part)
        if w is None:
            continue
        rest = tuple(() if i in idx else k[i] for i in range(len(PATHS)))
        out[rest] = out.get(rest, 0j) + w * a
    out = {k: a for k, a in out.items() if abs(a) > 1e-15}
    if not out:
        raise PostSelectionError("projection has zero amplitude")
    return PureState(out)


def _relabel(state: PureState, mapping: dict[str, str]) -> PureState:
    idx = {PATHS.index(a): PATHS.index(b) for a, b in mapping.items()}
    terms = {}
    for k, a in state.terms.items():
        slots = [()] * len(PATHS)
        for i, slot in enumerate(k):
            slots[idx.get(i, i)] = slot
        terms[tuple(slots)] = a
    return PureState(terms)


def transcription_trace(
    input_ab: PureState,
    input_cd: PureState,
    projector_bc: PureState,
    coherent_exchange: bool = True,
) -> PureState:
    """Conditional A-D state when B and C are found in ``projector_bc``.

    Two crystals pumped coherently cannot tell which one emitted which pair,
    so by default the history with the parents exchanged (the A-B pair born
    in the C-D crystal and vice versa) is added with equal amplitude.  With
    ``coherent_exchange=False`` only the literal product ``input_ab x input_cd``
    is propagated; for distinct parents that leaves a product A-D state.
    """
    if abs(projector_bc.norm() - 1) > 1e-12:
        raise StateError("projector_bc must be normalized")
    if input_ab.paths != frozenset("AB") or input_cd.paths != frozenset("CD"):
        raise StateError("inputs must live on paths A-B and C-D")
    state = tensor(input_ab, input_cd)
    if coherent_exchange:
        swap = {"A": "C", "B": "D", "C": "A", "D": "B"}
        state = state + tensor(_relabel(input_cd, swap), _relabel(input_ab, swap))
    kept = postselect_coincidence(beamsplitter_bc(state))
    return project_pair(kept.state, projector_bc).normalized()


def mixture_components(spectrum: SpiralSpectrum) -> list[tuple[float, tuple[int, int]]]:
    """Closed-form singlet mixture of the swapped A-D state.

    Returns ``[(weight, (l, l')), ...]`` with weights summing to one; each entry
    stands for the projector onto ``|Psi-_{l l'}>``.  Unnormalized weights are
    ``|c_n|^4`` for ``(n, -n)``, ``|c_m|^2 |c_n|^2`` for each of ``(n, -m)``,
    ``(-n, m)``, ``(n, m)``, ``(-n, -m)`` with ``m < n``, and
    ``2 |c_0|^2 |c_n|^2`` for ``(0, n)`` and ``(0, -n)``.
    """
    w = {k: abs(v) ** 2 for k, v in spectrum.coefficients.items() if k > 0 and v != 0}
    w0 = abs(spectrum[0]) ** 2
    comps: list[tuple[float, tuple[int, int]]] = []
    ns = sorted(w)
    for n in ns:
        comps.append((w[n] ** 2, (-n, n)))
    if w0 > 0:
        for n in ns:
            comps.append((2 * w0 * w[n], (0, n)))
            comps.append((2 * w0 * w[n], (-n, 0)))
    for m, n in itertools.combinations(ns, 2):
        x = w[m] * w[n]
        comps.extend([(x, (-n, m)), (x, (-m, n)), (x, (m, n)), (x, (-n, -m))])
    total = sum(c for c, _ in comps)
    if total == 0:
        raise PostSelectionError("spectrum yields no coincidences (only the l=0 term is populated)")
    return [(c / total, pair) for c, pair in comps]


def analytic_swapped_density_matrix(spectrum: SpiralSpectrum) -> DensityMatrix:
    """Closed-form counterpart of :func:`swapped_density_matrix` for SPDC inputs."""
    modes = spectrum.active_modes()
    basis = two_photon_basis(modes)
    rho = np.zeros((len(basis), len(basis)), dtype=complex)
    scratch = DensityMatrix(("A", "D"), basis, rho)
    for weight, (a, b) in mixture_components(spectrum):
        v = scratch.vector(bell_state(a, b, "-", ("A", "D")))
        rho += weight * np.outer(v, v.conj())
    return DensityMatrix(("A", "D"), basis, rho)


def postselection_probability(spectrum: SpiralSpectrum) -> float:
    """Coincidence probability for two SPDC pairs with ``spectrum`` (normalized internally).

    Each unordered pair of distinct modes {m, n} in B and C contributes half of
    its input weight; same-mode inputs bunch completely.
    """
    sp = spectrum.normalized()
    # single-photon marginal amplitudes per arm: P(B = l) over the SPDC pair
    p_mode: dict[int, float] = {}
    for k, v in sp.coefficients.items():
        w = abs(v) ** 2
        if k == 0:
            p_mode[0] = p_mode.get(0, 0.0) + w
        else:
            p_mode[k] = p_mode.get(k, 0.0) + w / 2
            p_mode[-k] = p_mode.get(-k, 0.0) + w / 2
    # B and C come from independent pairs, so P(B=x, C=y) factorizes; a
    # coincidence occurs with prob 1/2 for x != y and 0 for x == y.  Interference
    # between different (A, D) histories cannot change this because A and D
    # label the histories orthogonally.
    same = sum(p * p for p in p_mode.values())
    return 0.5 * (1.0 - same)


def schmidt_coefficients(state: PureState, left: tuple[str, ...] = ("A", "D")) -> np.ndarray:
    """Singular values of the amplitude matrix across ``left | rest``, descending."""
    lidx = [PATHS.index(p) for p in left]
    rows: dict[Ket, int] = {}
    cols: dict[Ket, int] = {}
    entries = []
    for k, a in state.terms.items():
        lk = tuple(k[i] if i in lidx else () for i in range(len(PATHS)))
        rk = tuple(() if i in lidx else k[i] for i in range(len(PATHS)))
        entries.append((rows.setdefault(lk, len(rows)), cols.setdefault(rk, len(cols)), a))
    m = np.zeros((len(rows), len(cols)), dtype=complex)
    for i, j, a in entries:
        m[i, j] += a
    return np.linalg.svd(m, compute_uv=False)


__all__ = [
    "PostSelectionError",
    "PostSelectionResult",
    "analytic_swapped_density_matrix",
    "antisymmetric_dimension",
    "beamsplitter_bc",
    "is_coincidence",
    "mixture_components",
    "postselect_coincidence",
    "postselection_probability",
    "product_state",
    "project_pair",
    "schmidt_coefficients",
    "swap_input",
    "swapped_density_matrix",
    "transcription_trace",
]
