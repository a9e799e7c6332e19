"""Filtering the B-C pair onto a superposition of singlets to leave A-D pure."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circuit import PostSelectionError, project_pair
from .states import PATHS, DensityMatrix, PureState, StateError, bell_state, superpose

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class FilterSpec:
    target: PureState  # normalized two-photon state on B and C

    def __post_init__(self):
        if self.target.paths != frozenset({"B", "C"}) or self.target.photon_count != 2:
            raise StateError("filter target must be a two-photon state on paths B and C")
        if abs(self.target.norm() - 1) > 1e-12:
            raise StateError("filter target must be normalized")

    @classmethod
    def singlet_superposition(cls, n_max: int) -> FilterSpec:
        """``|x> = sum_{n=1}^{N} |Psi-_{n,-n}>_BC / sqrt(N)``."""
        if n_max < 1:
            raise ValueError("need N >= 1")
        return cls(superpose((1 / math.sqrt(n_max), bell_state(n, -n, "-", ("B", "C"))) for n in range(1, n_max + 1)))

    @classmethod
    def singlet(cls, ell: int, ell2: int) -> FilterSpec:
        return cls(bell_state(ell, ell2, "-", ("B", "C")))


def apply_filter(post_selected: PureState, spec: FilterSpec) -> tuple[PureState, float]:
    """Project B-C onto the filter target.

    Returns the normalized A-D state and the success probability (squared
    norm of the projected component for a normalized input).
    """
    if post_selected.photon_count != 4:
        raise StateError("filter acts on the four-photon post-selected state")
    try:
        ad = project_pair(post_selected, spec.target, ("B", "C"))
    except PostSelectionError:
        raise PostSelectionError("filter target is orthogonal to every B-C component") from None
    p = ad.norm_squared() / post_selected.norm_squared()
    if p < 1e-24:
        raise PostSelectionError("filter target is orthogonal to every B-C component")
    return ad.normalized(), float(p)


def purity(rho: DensityMatrix) -> float:
    m = rho.matrix
    return float(np.real(np.trace(m @ m)))


def _amplitude_matrix(state: PureState, left: tuple[str, ...], key=None) -> np.ndarray:
    lidx = [PATHS.index(p) for p in left]
    occupied = state.paths
    right = [p for p in PATHS if p in occupied and p not in left]
    if not set(left) & occupied or not right:
        raise StateError(f"cut {left} | {right} is trivial")
    key = key or (lambda side_ket: side_ket)
    rows: dict = {}
    cols: dict = {}
    entries = []
    for k, a in state.terms.items():
        lk = tuple(k[i] if i in lidx else () for i in range(len(PATHS)))
        rk = tuple(() if i in lidx else k[i] for i in range(len(PATHS)))
        r_key, c_key = key(lk, rk)
        entries.append((rows.setdefault(r_key, len(rows)), cols.setdefault(c_key, len(cols)), a))
    m = np.zeros((len(rows), len(cols)), dtype=complex)
    for i, j, a in entries:
        m[i, j] += a
    return m


def schmidt_rank(state: PureState, cut: tuple[tuple[str, ...], tuple[str, ...]] = (("A",), ("D",)), tolerance: float = DEFAULT_TOL) -> int:
    """Number of Schmidt coefficients above ``tolerance`` across ``cut``.

    The cut is over the full mode label of each photon, so a single
    two-mode singlet has rank 2.
    """
    left, right = (tuple(c) for c in cut)
    if set(left) & set(right) or set(left) | set(right) != set(state.paths):
        raise StateError(f"cut {cut} is not a bipartition of {sorted(state.paths)}")
    m = _amplitude_matrix(state.normalized(), left, key=lambda lk, rk: (lk, rk))
    return int(np.sum(np.linalg.svd(m, compute_uv=False) > tolerance))


def pair_schmidt_rank(state: PureState, cut: tuple[tuple[str, ...], tuple[str, ...]] = (("A",), ("D",)), tolerance: float = DEFAULT_TOL) -> int:
    """Schmidt rank carried by the OAM magnitude ``|l|`` of the left side.

    Splits each photon's mode into magnitude and helicity and counts the
    entangled magnitude levels of ``left`` against everything else.  For a
    superposition ``sum_n a_n |Psi-_{n,-n}>`` this is the number of nonzero
    ``a_n``; the helicity singlet shared by all terms is not counted.
    """
    left, right = (tuple(c) for c in cut)
    if set(left) & set(right) or set(left) | set(right) != set(state.paths):
        raise StateError(f"cut {cut} is not a bipartition of {sorted(state.paths)}")

    def key(lk, rk):
        mags = tuple(tuple(abs(x) for x in slot) for slot in lk)
        signs = tuple(tuple(int(np.sign(x)) for x in slot) for slot in lk)
        return mags, (signs, rk)

    m = _amplitude_matrix(state.normalized(), left, key=key)
    return int(np.sum(np.linalg.svd(m, compute_uv=False) > tolerance))


def singlet_coefficients(ad_state: PureState, n_max: int) -> np.ndarray:
    """Amplitudes ``<Psi-_{n,-n}|psi>`` for ``n = 1..N``."""
    out = np.zeros(n_max, dtype=complex)
    for n in range(1, n_max + 1):
        ref = bell_state(n, -n, "-", ("A", "D"))
        out[n - 1] = sum(np.conj(a) * ad_state.amplitude(k) for k, a in ref.terms.items())
    return out


def expected_filtered_coefficients(spectrum_coeffs, n_max: int) -> np.ndarray:
    """``c_n^2 / sqrt(sum |c_n^2|^2)`` for ``n = 1..N``."""
    c = np.array([complex(spectrum_coeffs[n]) for n in range(1, n_max + 1)])
    sq = c**2
    return sq / np.sqrt(np.sum(np.abs(sq) ** 2))


__all__ = [
    "FilterSpec",
    "apply_filter",
    "expected_filtered_coefficients",
    "pair_schmidt_rank",
    "purity",
    "schmidt_rank",
    "singlet_coefficients",
]
