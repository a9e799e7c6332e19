"""Sparse multi-photon OAM states and the linear algebra the rest of the package uses.

A basis ket assigns to each of the four paths ``A, B, C, D`` a sorted tuple of
OAM indices (one entry per photon in that path).  Amplitudes are coefficients
in the orthonormal Fock basis, so a ket with two photons of the same mode in
one path is still a unit vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Union

import numpy as np

PATHS = ("A", "B", "C", "D")
_PATH_INDEX = {p: i for i, p in enumerate(PATHS)}

Ket = tuple  # tuple[tuple[int, ...], ...] of length 4, one sorted tuple per path

ATOL = 1e-12


class StateError(ValueError):
    """Raised for malformed or incompatible states."""


def _check_path(path: str) -> int:
    try:
        return _PATH_INDEX[path]
    except KeyError:
        raise StateError(f"unknown path {path!r}; expected one of {PATHS}") from None


def make_ket(assignment: Mapping[str, Union[int, Iterable[int]]]) -> Ket:
    """Build a canonical ket from ``{path: ell}`` or ``{path: (ell, ell2)}``."""
    slots: list[tuple[int, ...]] = [() for _ in PATHS]
    for path, ells in assignment.items():
        idx = _check_path(path)
        if isinstance(ells, (int, np.integer)):
            ells = (int(ells),)
        slots[idx] = tuple(sorted(int(e) for e in ells))
    return tuple(slots)


def ket_paths(ket: Ket) -> tuple[str, ...]:
    return tuple(p for p, slot in zip(PATHS, ket) if slot)


def ket_photons(ket: Ket) -> int:
    return sum(len(slot) for slot in ket)


def ket_oam(ket: Ket) -> int:
    return sum(sum(slot) for slot in ket)


def _occupation_factor(ket: Ket) -> float:
    """prod(n!) over (path, mode) occupations; the squared norm of the monomial."""
    out = 1
    for slot in ket:
        prev, run = None, 0
        for ell in slot:
            run = run + 1 if ell == prev else 1
            out *= run
            prev = ell
    return float(out)


def format_ket(ket: Ket) -> str:
    parts = []
    for p, slot in zip(PATHS, ket):
        for ell in slot:
            parts.append(f"|{ell}>_{p}")
    return "".join(parts) or "|vac>"


@dataclass(frozen=True)
class PureState:
    """Superposition of basis kets with complex amplitudes.

    ``terms`` maps canonical kets to amplitudes.  Zero amplitudes are dropped
    on construction.
    """

    terms: Mapping[Ket, complex]
    photon_count: int = field(init=False)

    def __post_init__(self):
        cleaned = {k: complex(a) for k, a in self.terms.items() if abs(a) > 0.0}
        if not cleaned:
            raise StateError("state has no nonzero amplitudes")
        counts = {ket_photons(k) for k in cleaned}
        if len(counts) != 1:
            raise StateError(f"mixed photon numbers in one state: {sorted(counts)}")
        object.__setattr__(self, "terms", cleaned)
        object.__setattr__(self, "photon_count", counts.pop())

    @property
    def paths(self) -> frozenset[str]:
        """Union of occupied paths over all kets."""
        return frozenset(p for k in self.terms for p in ket_paths(k))

    def norm_squared(self) -> float:
        return float(sum(abs(a) ** 2 for a in self.terms.values()))

    def norm(self) -> float:
        return math.sqrt(self.norm_squared())

    def normalized(self) -> PureState:
        n = self.norm()
        return PureState({k: a / n for k, a in self.terms.items()})

    def scaled(self, factor: complex) -> PureState:
        return PureState({k: factor * a for k, a in self.terms.items()})

    def amplitude(self, ket: Ket) -> complex:
        return self.terms.get(ket, 0j)

    def __add__(self, other: PureState) -> PureState:
        out = dict(self.terms)
        for k, a in other.terms.items():
            out[k] = out.get(k, 0j) + a
        return PureState(out)

    def __neg__(self) -> PureState:
        return self.scaled(-1)

    def __sub__(self, other: PureState) -> PureState:
        return self + (-other)

    def allclose(self, other: PureState, atol: float = ATOL) -> bool:
        keys = set(self.terms) | set(other.terms)
        return all(abs(self.amplitude(k) - other.amplitude(k)) <= atol for k in keys)

    def __str__(self):
        return " + ".join(f"({a:.4g}){format_ket(k)}" for k, a in sorted(self.terms.items()))


def superpose(terms: Iterable[tuple[complex, PureState]]) -> PureState:
    """Linear combination ``sum(c * state)``; cancelling terms are dropped."""
    out: dict[Ket, complex] = {}
    for c, st in terms:
        for k, a in st.terms.items():
            out[k] = out.get(k, 0j) + c * a
    out = {k: a for k, a in out.items() if abs(a) > ATOL * 1e-3}
    return PureState(out)


def bell_state(ell: int, ell2: int, sign: str, paths: tuple[str, str] = ("A", "B")) -> PureState:
    """``(|ell>|ell2> +- |ell2>|ell>)/sqrt(2)`` on the two given paths.

    >>> st = bell_state(2, -1, "-", ("A", "D"))
    >>> round(st.amplitude(make_ket({"A": 2, "D": -1})).real, 6)
    0.707107
    """
    if sign not in ("+", "-"):
        raise StateError(f"sign must be '+' or '-', got {sign!r}")
    p, q = paths
    _check_path(p)
    _check_path(q)
    if p == q:
        raise StateError("Bell state needs two distinct paths")
    if sign == "-" and ell == ell2:
        raise StateError(f"antisymmetric state with ell = ell2 = {ell} vanishes")
    s = 1.0 if sign == "+" else -1.0
    terms: dict[Ket, complex] = {}
    k1 = make_ket({p: ell, q: ell2})
    k2 = make_ket({p: ell2, q: ell})
    terms[k1] = terms.get(k1, 0j) + 1 / math.sqrt(2)
    terms[k2] = terms.get(k2, 0j) + s / math.sqrt(2)
    return PureState(terms).normalized()


def product_state(assignment: Mapping[str, int]) -> PureState:
    return PureState({make_ket(assignment): 1.0})


@dataclass(frozen=True)
class SpiralSpectrum:
    """Pair amplitudes ``c[ell]`` for ``ell >= 0``; ``c[0]`` weights the ``|0>|0>`` term."""

    coefficients: Mapping[int, complex]

    def __post_init__(self):
        coeffs = {int(k): complex(v) for k, v in self.coefficients.items()}
        if any(k < 0 for k in coeffs):
            raise StateError("spectrum keys must be non-negative OAM magnitudes")
        object.__setattr__(self, "coefficients", dict(sorted(coeffs.items())))

    def __getitem__(self, ell: int) -> complex:
        return self.coefficients.get(ell, 0j)

    @property
    def max_ell(self) -> int:
        nz = [k for k, v in self.coefficients.items() if v != 0]
        return max(nz) if nz else 0

    def total_weight(self) -> float:
        return float(sum(abs(v) ** 2 for v in self.coefficients.values()))

    def normalized(self) -> SpiralSpectrum:
        w = self.total_weight()
        if w == 0:
            raise StateError("empty spectrum")
        s = math.sqrt(w)
        return SpiralSpectrum({k: v / s for k, v in self.coefficients.items()})

    def active_modes(self) -> list[int]:
        """Signed OAM values that carry nonzero weight, ascending."""
        modes = set()
        for k, v in self.coefficients.items():
            if v != 0:
                modes.update({k, -k})
        return sorted(modes)


def spdc_state(spectrum: SpiralSpectrum, paths: tuple[str, str] = ("A", "B"), truncation: int | None = None) -> PureState:
    """Downconverted pair ``c0|0>|0> + sum_l c_l |Psi+_{-l,l}>``, normalized."""
    if truncation is None:
        truncation = max(spectrum.max_ell, 1)
    if truncation < 1:
        raise StateError("truncation must be >= 1")
    if spectrum.total_weight() == 0:
        raise StateError("empty spectrum")
    if spectrum.max_ell > truncation:
        raise StateError(f"spectrum has weight at ell={spectrum.max_ell} beyond truncation {truncation}")
    pieces = []
    if spectrum[0] != 0:
        pieces.append((spectrum[0], product_state({paths[0]: 0, paths[1]: 0})))
    for ell in range(1, truncation + 1):
        if spectrum[ell] != 0:
            pieces.append((spectrum[ell], bell_state(-ell, ell, "+", paths)))
    return superpose(pieces).normalized()


def tensor(a: PureState, b: PureState) -> PureState:
    if a.paths & b.paths:
        raise StateError(f"tensor factors share paths {sorted(a.paths & b.paths)}")
    out: dict[Ket, complex] = {}
    for ka, xa in a.terms.items():
        for kb, xb in b.terms.items():
            k = tuple(sa or sb for sa, sb in zip(ka, kb))
            out[k] = out.get(k, 0j) + xa * xb
    return PureState(out)


def inner_product(a: PureState, b: PureState) -> complex:
    """``<a|b>``, conjugate-linear in ``a``."""
    if a.photon_count != b.photon_count or a.paths != b.paths:
        raise StateError("inner product of states on different photon numbers or paths")
    small, large = (a, b) if len(a.terms) <= len(b.terms) else (b, a)
    total = 0j
    for k in small.terms:
        if k in large.terms:
            total += np.conj(a.terms[k]) * b.terms[k]
    return complex(total)


def fidelity_pure(a: PureState, b: PureState) -> float:
    """``|<a|b>|^2`` for normalized states; insensitive to global phase."""
    return abs(inner_product(a, b)) ** 2


# --------------------------------------------------------------------------
# density matrices
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Density matrix over single-photon-per-path kets.

    ``basis`` holds one tuple of OAM values per entry, aligned with ``paths``.
    ``measured`` is an optional boolean mask; ``False`` marks elements with no
    measurement behind them (their value is zero by construction).
    """

    paths: tuple[str, ...]
    basis: tuple[tuple[int, ...], ...]
    matrix: np.ndarray
    measured: np.ndarray | None = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = len(self.basis)
        if m.shape != (n, n):
            raise StateError(f"matrix shape {m.shape} does not match basis size {n}")
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "paths", tuple(self.paths))
        object.__setattr__(self, "basis", tuple(tuple(int(x) for x in b) for b in self.basis))
        if self.measured is not None:
            object.__setattr__(self, "measured", np.asarray(self.measured, dtype=bool))

    @property
    def dim(self) -> int:
        return len(self.basis)

    def index(self, label: tuple[int, ...]) -> int:
        return self.basis.index(tuple(label))

    def trace(self) -> complex:
        return complex(np.trace(self.matrix))

    def check(self, tol: float = 1e-10) -> None:
        """Raise if the matrix is not Hermitian, unit-trace and PSD within ``tol``."""
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > tol:
            raise StateError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1) > tol:
            raise StateError(f"density matrix trace {np.trace(m).real:.3g} != 1")
        if np.linalg.eigvalsh((m + m.conj().T) / 2).min() < -tol:
            raise StateError("density matrix has negative eigenvalues")

    def is_valid(self, tol: float = 1e-10) -> bool:
        try:
            self.check(tol)
        except StateError:
            return False
        return True

    def normalized(self) -> DensityMatrix:
        return DensityMatrix(self.paths, self.basis, self.matrix / np.trace(self.matrix).real, self.measured)

    def embed(self, basis: Iterable[tuple[int, ...]]) -> DensityMatrix:
        """Same operator written in a (super)set basis; new entries are zero."""
        basis = [tuple(b) for b in basis]
        pos = {b: i for i, b in enumerate(basis)}
        missing = [b for b in self.basis if b not in pos]
        if missing and np.any(np.abs(self.matrix[[self.index(b) for b in missing]]) > 0):
            raise StateError(f"target basis lacks populated labels {missing}")
        idx = [pos.get(b) for b in self.basis]
        out = np.zeros((len(basis), len(basis)), dtype=complex)
        for i, bi in enumerate(idx):
            if bi is None:
                continue
            for j, bj in enumerate(idx):
                if bj is not None:
                    out[bi, bj] = self.matrix[i, j]
        return DensityMatrix(self.paths, basis, out)

    def restrict(self, modes: Iterable[int]) -> DensityMatrix:
        """Block on kets whose every photon lies in ``modes``; not renormalized."""
        modes = sorted(set(modes))
        keep = [i for i, b in enumerate(self.basis) if all(x in modes for x in b)]
        sub = self.matrix[np.ix_(keep, keep)]
        return DensityMatrix(self.paths, [self.basis[i] for i in keep], sub)

    def vector(self, state: PureState) -> np.ndarray:
        """Column vector of ``state`` in this basis (kets outside it are an error)."""
        v = np.zeros(self.dim, dtype=complex)
        for k, a in state.terms.items():
            if ket_paths(k) != self.paths or any(len(k[_PATH_INDEX[p]]) != 1 for p in self.paths):
                raise StateError(f"ket {format_ket(k)} not representable on paths {self.paths}")
            label = tuple(k[_PATH_INDEX[p]][0] for p in self.paths)
            try:
                v[self.index(label)] += a
            except ValueError:
                raise StateError(f"ket {format_ket(k)} outside the basis") from None
        return v


def two_photon_basis(modes: Iterable[int]) -> list[tuple[int, int]]:
    """Lexicographic ``(ell_1, ell_2)`` basis over sorted ``modes``.

    For two modes this is ``|l1 l1>, |l1 l2>, |l2 l1>, |l2 l2>`` with ``l1 < l2``.
    """
    modes = sorted(set(modes))
    return [(a, b) for a in modes for b in modes]


def projector(state: PureState, paths: tuple[str, ...] = ("A", "D"), modes: Iterable[int] | None = None) -> DensityMatrix:
    """``|psi><psi|`` as a :class:`DensityMatrix` over the given modes."""
    state = state.normalized()
    if modes is None:
        modes = sorted({x for k in state.terms for p in paths for x in k[_PATH_INDEX[p]]})
    modes = sorted(set(modes))
    basis = [tuple(t) for t in np.array(np.meshgrid(*[modes] * len(paths), indexing="ij")).reshape(len(paths), -1).T]
    rho = DensityMatrix(paths, basis, np.zeros((len(basis), len(basis))))
    v = rho.vector(state)
    return DensityMatrix(paths, basis, np.outer(v, v.conj()))


def _split(ket: Ket, keep_idx: list[int]) -> tuple[Ket, Ket]:
    kept = tuple(ket[i] if i in keep_idx else () for i in range(len(PATHS)))
    rest = tuple(() if i in keep_idx else ket[i] for i in range(len(PATHS)))
    return kept, rest


def partial_trace(state_or_rho: Union[PureState, DensityMatrix], keep_paths: Iterable[str]) -> DensityMatrix:
    """Reduced density matrix on ``keep_paths``.

    Every kept path must hold exactly one photon in every ket.  The basis is the
    lexicographic product of the OAM values seen on each kept path.
    """
    keep = tuple(p for p in PATHS if p in set(keep_paths))
    if isinstance(state_or_rho, DensityMatrix):
        return _partial_trace_rho(state_or_rho, keep)
    state = state_or_rho
    occupied = state.paths
    if not keep or not set(keep) < set(occupied):
        raise StateError(f"keep_paths {keep} must be a nonempty proper subset of {sorted(occupied)}")
    keep_idx = [_PATH_INDEX[p] for p in keep]

    seen: list[set[int]] = [set() for _ in keep]
    env_index: dict[Ket, int] = {}
    for k in state.terms:
        kept, rest = _split(k, keep_idx)
        for j, i in enumerate(keep_idx):
            if len(kept[i]) != 1:
                raise StateError(f"path {PATHS[i]} does not hold exactly one photon in {format_ket(k)}")
            seen[j].add(kept[i][0])
        env_index.setdefault(rest, len(env_index))
    axes = [sorted(s) for s in seen]
    basis = [tuple(t) for t in _product(axes)]
    pos = {b: i for i, b in enumerate(basis)}

    amp = np.zeros((len(basis), len(env_index)), dtype=complex)
    for k, a in state.terms.items():
        kept, rest = _split(k, keep_idx)
        label = tuple(kept[i][0] for i in keep_idx)
        amp[pos[label], env_index[rest]] += a
    rho = amp @ amp.conj().T
    rho /= np.trace(rho).real
    return DensityMatrix(keep, basis, rho)


def _product(axes):
    if not axes:
        yield ()
        return
    for x in axes[0]:
        for rest in _product(axes[1:]):
            yield (x,) + rest


def _partial_trace_rho(rho: DensityMatrix, keep: tuple[str, ...]) -> DensityMatrix:
    if not keep or not set(keep) < set(rho.paths):
        raise StateError(f"keep_paths {keep} must be a nonempty proper subset of {rho.paths}")
    kidx = [rho.paths.index(p) for p in keep]
    ridx = [i for i in range(len(rho.paths)) if i not in kidx]
    axes = [sorted({b[i] for b in rho.basis}) for i in kidx]
    basis = [tuple(t) for t in _product(axes)]
    pos = {b: i for i, b in enumerate(basis)}
    out = np.zeros((len(basis), len(basis)), dtype=complex)
    for i, bi in enumerate(rho.basis):
        for j, bj in enumerate(rho.basis):
            if all(bi[r] == bj[r] for r in ridx):
                out[pos[tuple(bi[k] for k in kidx)], pos[tuple(bj[k] for k in kidx)]] += rho.matrix[i, j]
    out /= np.trace(out).real
    return DensityMatrix(keep, basis, out)
