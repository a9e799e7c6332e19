import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import concurrence_oracle, random_density_matrix, random_unitary, werner
from swapsim.circuit import analytic_swapped_density_matrix
from swapsim.measurement import (
    CountRecord,
    NoiseModel,
    expected_records,
    simulate_counts,
    tomography_settings,
)
from swapsim.states import DensityMatrix, SpiralSpectrum, StateError, two_photon_basis
from swapsim.tomography import (
    TomographyError,
    assemble_4d,
    concurrence,
    dump_density_matrix,
    error_bars,
    fidelity,
    fidelity_to_prediction,
    fidelity_vs_visibility,
    load_density_matrix,
    log_likelihood,
    nearest_masked_state,
    reconstruct_linear,
    reconstruct_mle,
    singlet,
    trace_distance,
    werner_concurrence,
)

SUB = (-1, 1)
SIX = ((-1, 1), (-2, 2), (-2, -1), (-2, 1), (-1, 2), (1, 2))


def dm(matrix, sub=SUB):
    return DensityMatrix(("A", "D"), two_photon_basis(sub), matrix)


def noiseless(rho, sub=SUB, total=1e4):
    return expected_records(dm(rho, sub), tomography_settings(sub), total / 4, 1.0)


def test_linear_noiseless_singlet():
    res = reconstruct_linear(noiseless(singlet(SUB).matrix))
    assert trace_distance(res.rho, singlet(SUB)) < 1e-10
    assert res.method == "linear"


def test_linear_noiseless_maximally_mixed():
    res = reconstruct_linear(noiseless(np.eye(4) / 4))
    assert np.allclose(res.rho.matrix, np.eye(4) / 4, atol=1e-12)


def test_linear_werner_poisson_calibration():
    # 3e4 expected counts per run
    truth = dm(werner(0.71))
    tds = []
    for seed in range(100):
        recs = simulate_counts(truth, tomography_settings(SUB), 3e4 / 4, 1.0, NoiseModel(seed=seed))
        tds.append(trace_distance(reconstruct_linear(recs).rho, truth))
    assert np.mean(tds) < 0.05


def test_mle_noiseless_singlet():
    res = reconstruct_mle(noiseless(singlet(SUB).matrix))
    assert fidelity(res.rho, singlet(SUB)) == pytest.approx(1, abs=1e-6)
    assert res.converged


def test_mle_with_empty_setting_stays_physical():
    recs = simulate_counts(dm(werner(0.9)), tomography_settings(SUB), 5.0, 100.0, NoiseModel(seed=7))
    recs[5] = CountRecord(recs[5].setting, 0, recs[5].duration_s)
    res = reconstruct_mle(recs)
    res.rho.check(1e-10)


def test_mle_werner_fidelity_over_seeds():
    truth = dm(werner(0.71))
    for seed in range(30):
        recs = simulate_counts(truth, tomography_settings(SUB), 3e4 / 4, 1.0, NoiseModel(seed=seed))
        f = fidelity(reconstruct_mle(recs).rho, singlet(SUB))
        assert abs(f - 0.7825) < 0.05


def test_mle_likelihood_beats_linear_and_is_monotone():
    truth = dm(werner(0.71))
    for seed in range(10):
        recs = simulate_counts(truth, tomography_settings(SUB), 60.0, 10.0, NoiseModel(seed=seed))
        lin = reconstruct_linear(recs)
        mle = reconstruct_mle(recs)
        assert mle.log_likelihood >= lin.log_likelihood - 1e-9
        h = np.array(mle.history)
        assert np.all(np.diff(h) >= -1e-9 * np.abs(h[:-1]).max())


def test_mle_iteration_cap_reports_not_converged():
    recs = simulate_counts(dm(werner(0.71)), tomography_settings(SUB), 60.0, 10.0, NoiseModel(seed=1))
    res = reconstruct_mle(recs, init="mixed", max_iter=1)
    assert not res.converged
    res.rho.check(1e-10)


def test_reconstruction_needs_counts():
    recs = [CountRecord(s, 0, 1.0) for s in tomography_settings(SUB)]
    with pytest.raises(TomographyError):
        reconstruct_linear(recs)
    with pytest.raises(TomographyError):
        reconstruct_mle(recs)
    with pytest.raises(TomographyError):
        reconstruct_linear(recs[:15])


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_linear_and_mle_agree_on_full_rank(seed):
    rho = random_density_matrix(np.random.default_rng(seed))
    recs = noiseless(rho)
    a = reconstruct_linear(recs).rho
    b = reconstruct_mle(recs, init="mixed").rho
    assert trace_distance(a, dm(rho)) < 1e-6
    assert trace_distance(a, b) < 1e-6


def test_fidelity_examples():
    w = dm(werner(0.71))
    assert fidelity(w, w) == pytest.approx(1, abs=1e-12)
    assert fidelity(w, singlet(SUB)) == pytest.approx(0.7825, abs=1e-12)
    plus = np.array([0, 1, 1, 0]) / math.sqrt(2)
    assert fidelity(singlet(SUB), np.outer(plus, plus)) == pytest.approx(0, abs=1e-12)
    with pytest.raises(StateError):
        fidelity(np.eye(4) / 4, np.eye(2) / 2)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4), st.integers(1, 4))
@settings(max_examples=50, deadline=None)
def test_fidelity_properties(seed, ra, rb):
    rng = np.random.default_rng(seed)
    a, b = random_density_matrix(rng, rank=ra), random_density_matrix(rng, rank=rb)
    f = fidelity(a, b)
    assert 0 <= f <= 1
    assert fidelity(a, a) == pytest.approx(1, abs=1e-6)
    assert f == pytest.approx(fidelity(b, a), abs=1e-6)
    # Fuchs-van de Graaf bounds tie F = 1 to zero trace distance
    t = trace_distance(a, b)
    assert 1 - math.sqrt(f) <= t + 1e-7
    assert t <= math.sqrt(1 - f) + 1e-7


def test_fidelity_with_pure_state_is_expectation():
    rng = np.random.default_rng(1)
    rho = random_density_matrix(rng)
    v = rng.normal(size=4) + 1j * rng.normal(size=4)
    v /= np.linalg.norm(v)
    assert fidelity(rho, np.outer(v, v.conj())) == pytest.approx(np.real(v.conj() @ rho @ v), abs=1e-10)


def test_concurrence_examples():
    assert concurrence(singlet(SUB)) == pytest.approx(1, abs=1e-10)
    assert concurrence(np.eye(4) / 4) == pytest.approx(0, abs=1e-12)
    assert concurrence(werner(0.71)) == pytest.approx(0.565, abs=1e-10)
    with pytest.raises(StateError):
        concurrence(np.eye(2) / 2)


@pytest.mark.parametrize("v", [0, 1 / 3, 0.5, 0.71, 1])
def test_werner_concurrence_against_eigensolver(v):
    assert concurrence(werner(v)) == pytest.approx(werner_concurrence(v), abs=1e-8)
    assert concurrence_oracle(werner(v)) == pytest.approx(werner_concurrence(v), abs=1e-8)


@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
@settings(max_examples=50, deadline=None)
def test_concurrence_matches_oracle_and_is_local_invariant(seed, rank):
    rng = np.random.default_rng(seed)
    rho = random_density_matrix(rng, rank=rank)
    c = concurrence(rho)
    assert c == pytest.approx(concurrence_oracle(rho), abs=1e-6)
    u = np.kron(random_unitary(rng, 2), random_unitary(rng, 2))
    assert concurrence(u @ rho @ u.conj().T) == pytest.approx(c, abs=1e-8)


def test_fidelity_vs_visibility_curve():
    assert fidelity_vs_visibility(0.71) == 0.7825
    assert fidelity_vs_visibility(1) == 1
    assert fidelity_vs_visibility(0) == 0.25
    curve = [fidelity_vs_visibility(v) for v in np.linspace(0, 1, 101)]
    assert np.all(np.diff(curve) > 0)
    with pytest.raises(ValueError):
        fidelity_vs_visibility(1.5)


def _ideal_six(spectrum):
    return {s: singlet(s) for s in SIX}


def test_assemble_ideal_equal_spectrum():
    sp = SpiralSpectrum({1: 1, 2: 1}).normalized()
    out = assemble_4d(_ideal_six(sp), sp)
    theory = analytic_swapped_density_matrix(sp).embed(out.basis)
    assert np.abs(out.matrix - theory.matrix).max() < 1e-14
    assert fidelity_to_prediction(out, sp) == pytest.approx(1, abs=1e-10)
    out.check(1e-10)
    assert (~out.measured).sum() > 0


@given(st.floats(0.05, 1), st.floats(0.05, 1))
@settings(max_examples=30, deadline=None)
def test_assemble_matched_spectrum_is_exact(c1, c2):
    sp = SpiralSpectrum({1: c1, 2: c2}).normalized()
    out = assemble_4d(_ideal_six(sp), sp)
    assert fidelity_to_prediction(out, sp) == pytest.approx(1, abs=1e-10)


@given(st.floats(0, 1))
@settings(max_examples=20, deadline=None)
def test_assemble_block_traces_back(v):
    sp = SpiralSpectrum({1: 1, 2: 1}).normalized()
    rhos = {s: dm(v * singlet(s).matrix + (1 - v) * np.eye(4) / 4, s) for s in SIX}
    out = assemble_4d(rhos, sp)
    out.check(1e-10)
    for s in SIX:
        assert np.abs(out.restrict(s).normalized().matrix - rhos[s].matrix).max() < 1e-12


@given(st.floats(0.05, 1), st.floats(0.05, 1))
@settings(max_examples=20, deadline=None)
def test_assemble_consistent_blocks_round_trip(c1, c2):
    sp = SpiralSpectrum({1: c1, 2: c2}).normalized()
    theory = analytic_swapped_density_matrix(sp)
    rhos = {s: theory.restrict(s).normalized() for s in SIX}
    out = assemble_4d(rhos, sp)
    assert np.abs(out.matrix - theory.embed(out.basis).matrix).max() < 1e-12


def test_assemble_noisy_inputs_stay_physical():
    sp = SpiralSpectrum({1: 1, 2: 1}).normalized()
    rng = np.random.default_rng(0)
    rhos = {}
    for i, s in enumerate(SIX):
        truth = DensityMatrix(("A", "D"), two_photon_basis(s), 0.71 * singlet(s).matrix + 0.29 * np.eye(4) / 4)
        recs = simulate_counts(truth, tomography_settings(s), 4.0, 150.0, NoiseModel(seed=int(rng.integers(1 << 30)), ), stream=i)
        rhos[s] = reconstruct_mle(recs).rho
    out = assemble_4d(rhos, sp)
    out.check(1e-10)
    assert np.all(out.matrix[~out.measured] == 0)
    assert 0.7 < fidelity_to_prediction(out, sp) < 0.95


def test_nearest_masked_state_projects():
    m = np.diag([0.6, 0.5, -0.1, 0.0]).astype(complex)
    mask = np.eye(4, dtype=bool)
    x = nearest_masked_state(m, mask)
    assert np.linalg.eigvalsh(x).min() > -1e-12
    assert np.trace(x).real == pytest.approx(1)
    assert np.all(x[~mask] == 0)
    assert np.allclose(np.diag(x).real, [0.55, 0.45, 0, 0], atol=1e-9)


def test_assemble_missing_subspace():
    sp = SpiralSpectrum({1: 1, 2: 1})
    rhos = _ideal_six(sp)
    rhos.pop((1, 2))
    with pytest.raises(TomographyError):
        assemble_4d(rhos, sp)


def test_error_bars_deterministic_and_shrinking():
    truth = dm(werner(0.9))
    errs = []
    for rate in (20.0, 200.0, 2000.0):
        recs = simulate_counts(truth, tomography_settings(SUB), rate, 10.0, NoiseModel(seed=5))
        a = error_bars(recs, "linear", 100, seed=9)
        b = error_bars(recs, "linear", 100, seed=9)
        assert a == b
        errs.append(a.fidelity_err)
    assert errs[0] > errs[1] > errs[2]


def test_error_bars_at_low_count_rate():
    # roughly 150 s per setting at 0.04 Hz
    truth = dm(werner(0.71))
    recs = simulate_counts(truth, tomography_settings(SUB), 0.04 * 4, 150.0 * 16 / 4, NoiseModel(seed=2))
    rep = error_bars(recs, "mle", 100, seed=1)
    assert 0.01 < rep.fidelity_err < 0.2


def test_error_bars_validation():
    recs = [CountRecord(s, 0, 1.0) for s in tomography_settings(SUB)]
    with pytest.raises(TomographyError):
        error_bars(recs, "mle", 100)
    with pytest.raises(ValueError):
        error_bars(noiseless(werner(0.5)), "mle", 10)


def test_density_matrix_json_round_trip_bit_exact():
    rng = np.random.default_rng(8)
    rho = dm(random_density_matrix(rng), (-2, 1))
    back = load_density_matrix(dump_density_matrix(rho))
    assert np.array_equal(back.matrix, rho.matrix)
    assert back.basis == rho.basis and back.paths == rho.paths
    sp = SpiralSpectrum({1: 0.8, 2: 0.6})
    out = assemble_4d({s: dm(random_density_matrix(rng), s) for s in SIX}, sp)
    back = load_density_matrix(dump_density_matrix(out))
    assert np.array_equal(back.matrix, out.matrix)
    assert np.array_equal(back.measured, out.measured)
    assert json.loads(dump_density_matrix(out))["measured"] is not None


def test_log_likelihood_prefers_truth():
    recs = noiseless(werner(0.71))
    assert log_likelihood(werner(0.71), recs) > log_likelihood(werner(0.5), recs)
