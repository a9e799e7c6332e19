"""Independent reference implementations used only by the tests.

The circuit oracle works in first quantization: four labeled photons, a
fully symmetrized dense wavefunction over (path, OAM) per photon, the
beamsplitter as a single-photon unitary applied to every axis.  It shares
no code with the sparse Fock machinery in ``swapsim.circuit``.
"""

import itertools
import math

import numpy as np

PATHS = "ABCD"


def _single_index(n_max):
    modes = list(range(-n_max, n_max + 1))
    return modes, {(p, m): i for i, (p, m) in enumerate(itertools.product(PATHS, modes))}


def _pair(coeffs, p, q, n_max, idx):
    dim = len(idx)
    psi = np.zeros((dim, dim), dtype=complex)
    if coeffs.get(0, 0):
        psi[idx[p, 0], idx[q, 0]] += coeffs[0]
    for ell in range(1, n_max + 1):
        c = coeffs.get(ell, 0)
        psi[idx[p, -ell], idx[q, ell]] += c / math.sqrt(2)
        psi[idx[p, ell], idx[q, -ell]] += c / math.sqrt(2)
    return psi


def _bs_unitary(n_max, idx):
    dim = len(idx)
    u = np.eye(dim, dtype=complex)
    s = 1 / math.sqrt(2)
    for m in range(-n_max, n_max + 1):
        b, c = idx["B", m], idx["C", m]
        u[b, b], u[c, b] = -s, s  # |B> -> (|C> - |B>)/sqrt2
        u[b, c], u[c, c] = s, s  # |C> -> (|B> + |C>)/sqrt2
    return u


def swap_oracle(coeffs, n_max):
    """Brute-force (rho_AD over all 2N+1 modes, coincidence probability)."""
    modes, idx = _single_index(n_max)
    psi = np.einsum("ab,cd->abcd", _pair(coeffs, "A", "B", n_max, idx), _pair(coeffs, "C", "D", n_max, idx))
    sym = sum(np.transpose(psi, perm) for perm in itertools.permutations(range(4)))
    sym /= np.linalg.norm(sym)
    u = _bs_unitary(n_max, idx)
    out = np.einsum("ia,jb,kc,ld,abcd->ijkl", u, u, u, u, sym, optimize=True)
    sl = [np.array([idx[p, m] for m in modes]) for p in PATHS]
    core = out[np.ix_(*sl)]  # photon k in path PATHS[k]
    prob = 24 * float(np.sum(np.abs(core) ** 2))
    rho = np.einsum("abcd,ebcf->adef", core, core.conj())
    d = len(modes)
    rho = rho.reshape(d * d, d * d) / prob * 24
    return modes, rho, prob


def werner(visibility):
    s = np.array([0, 1, -1, 0]) / math.sqrt(2)
    return visibility * np.outer(s, s) + (1 - visibility) * np.eye(4) / 4


def concurrence_oracle(rho):
    """Concurrence from the non-Hermitian product rho * rho_tilde (general eigensolver)."""
    yy = np.kron([[0, -1j], [1j, 0]], [[0, -1j], [1j, 0]])
    lam = np.sqrt(np.clip(np.sort(np.linalg.eigvals(rho @ yy @ rho.conj() @ yy).real)[::-1], 0, None))
    return max(0.0, lam[0] - lam[1] - lam[2] - lam[3])


def random_density_matrix(rng, dim=4, rank=None):
    rank = rank or dim
    g = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = g @ g.conj().T
    return rho / np.trace(rho).real


def random_unitary(rng, dim):
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))
