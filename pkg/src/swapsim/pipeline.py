"""End-to-end runs shared by the CLI and the acceptance tests."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .circuit import beamsplitter_bc, postselect_coincidence, swap_input
from .measurement import (
    CountRecord,
    NoiseModel,
    apply_visibility_noise,
    simulate_counts,
    tomography_settings,
)
from .states import DensityMatrix, SpiralSpectrum, partial_trace, two_photon_basis
from .tomography import (
    EntanglementReport,
    ReconstructionResult,
    TomographyError,
    entanglement_of,
    error_bars,
    reconstruct,
)


def swapped_state(spectrum: SpiralSpectrum, truncation: int | None = None) -> tuple[DensityMatrix, float]:
    """Post-selected A-D state and the coincidence probability."""
    kept = postselect_coincidence(beamsplitter_bc(swap_input(spectrum, truncation)))
    return partial_trace(kept.state, {"A", "D"}), kept.probability


def subspace_state(rho_ad: DensityMatrix, subspace: Sequence[int]) -> DensityMatrix:
    """Normalized two-mode block of the swapped state; what tomography in that subspace sees."""
    sub = tuple(sorted(int(x) for x in subspace))
    basis = two_photon_basis(sub)
    block = rho_ad.embed(sorted(set(rho_ad.basis) | set(basis))).restrict(sub)
    tr = block.trace().real
    if tr <= 1e-15:
        raise TomographyError(f"subspace {sub} carries no population in the swapped state")
    return DensityMatrix(("A", "D"), block.basis, block.matrix / tr)


@dataclass(frozen=True)
class SubspaceRun:
    subspace: tuple[int, int]
    truth: DensityMatrix
    records: tuple[CountRecord, ...]
    result: ReconstructionResult
    report: EntanglementReport | None


def run_subspace(
    rho_ad: DensityMatrix,
    subspace: Sequence[int],
    visibility: float,
    rate_hz: float,
    duration_s: float,
    noise: NoiseModel,
    stream: int,
    method: str = "mle",
    n_resamples: int | None = None,
) -> SubspaceRun:
    """Simulate and reconstruct one two-mode subspace.

    ``stream`` separates the RNG streams of different subspaces sharing
    ``noise.seed``; the bootstrap uses its own stream derived from both.
    """
    truth = apply_visibility_noise(subspace_state(rho_ad, subspace), visibility)
    records = simulate_counts(truth, tomography_settings(tuple(subspace)), rate_hz, duration_s, noise, stream=stream)
    result = reconstruct(records, method)
    report = None
    if n_resamples:
        report = error_bars(records, method, n_resamples, seed=int(noise.seed) * 1_000_003 + stream)
    return SubspaceRun(tuple(sorted(subspace)), truth, tuple(records), result, report)


def _call(args):
    fn, a, kw = args
    return fn(*a, **kw)


def parallel_map(fn: Callable, arglist: Iterable[tuple], jobs: int = 1, **kwargs) -> list:
    """Ordered map; with ``jobs > 1`` tasks run in worker processes."""
    tasks = [(fn, a, kwargs) for a in arglist]
    if jobs <= 1 or len(tasks) <= 1:
        return [_call(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_call, tasks))


def table1(
    spectrum: SpiralSpectrum,
    subspaces: Sequence[Sequence[int]],
    visibility: float,
    rate_hz: float,
    duration_s: float,
    noise: NoiseModel,
    method: str = "mle",
    n_resamples: int | None = None,
    truncation: int | None = None,
    jobs: int = 1,
) -> list[SubspaceRun]:
    rho_ad, _ = swapped_state(spectrum, truncation)
    args = [(rho_ad, sub, visibility, rate_hz, duration_s, noise, i) for i, sub in enumerate(subspaces)]
    return parallel_map(run_subspace, args, jobs, method=method, n_resamples=n_resamples)


def summary(runs: Sequence[SubspaceRun]) -> dict:
    fs, cs = [], []
    for r in runs:
        f, c = entanglement_of(r.result.rho, r.subspace)
        fs.append(f)
        cs.append(c)
    return {"mean_fidelity": float(np.mean(fs)), "mean_concurrence": float(np.mean(cs)),
            "fidelities": fs, "concurrences": cs}
