"""Detection chain: tomography projectors, Born probabilities, visibility noise,
Poisson count sampling, accidental-coincidence background and the HOM dip."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit

from .states import DensityMatrix, two_photon_basis

PAIR_KEYS = ("AB", "CD", "AC", "BD")
SINGLES_KEYS = ("A", "B", "C", "D")

# hologram states per arm, as amplitudes on (|l1>, |l2>)
PROJECTOR_LABELS = ("l1", "l2", "l1+l2", "l1+il2")
_PROJECTOR_AMPS = (
    (1.0, 0.0),
    (0.0, 1.0),
    (1 / math.sqrt(2), 1 / math.sqrt(2)),
    (1 / math.sqrt(2), 1j / math.sqrt(2)),
)


class MeasurementError(ValueError):
    pass


@dataclass(frozen=True)
class ProjectorSpec:
    """Single-photon projector ``|v><v|`` on the two-mode subspace ``(l1, l2)``."""

    subspace: tuple[int, int]
    kind: int  # index into PROJECTOR_LABELS

    @property
    def label(self) -> str:
        return PROJECTOR_LABELS[self.kind]

    def amplitudes(self) -> dict[int, complex]:
        a1, a2 = _PROJECTOR_AMPS[self.kind]
        l1, l2 = self.subspace
        return {l1: complex(a1), l2: complex(a2)}

    def vector(self) -> np.ndarray:
        """Vector in the ascending-mode basis of the subspace."""
        amps = self.amplitudes()
        return np.array([amps[m] for m in sorted(self.subspace)], dtype=complex)


@dataclass(frozen=True)
class MeasurementSetting:
    arm_a: ProjectorSpec
    arm_d: ProjectorSpec

    @property
    def subspace(self) -> tuple[int, int]:
        return self.arm_a.subspace

    @property
    def id(self) -> str:
        l1, l2 = self.subspace
        return f"{l1},{l2}:{self.arm_a.kind}{self.arm_d.kind}"

    @classmethod
    def from_id(cls, sid: str) -> MeasurementSetting:
        sub, kinds = sid.split(":")
        l1, l2 = (int(x) for x in sub.split(","))
        return cls(ProjectorSpec((l1, l2), int(kinds[0])), ProjectorSpec((l1, l2), int(kinds[1])))

    def operator(self) -> np.ndarray:
        """4x4 operator ``P_a (x) P_d`` in the ascending two-mode basis."""
        va, vd = self.arm_a.vector(), self.arm_d.vector()
        v = np.kron(va, vd)
        return np.outer(v, v.conj())


def tomography_settings(subspace: tuple[int, int]) -> list[MeasurementSetting]:
    """The 16 product settings over ``subspace``; arm A varies slowest."""
    l1, l2 = (int(x) for x in subspace)
    if l1 == l2:
        raise MeasurementError(f"degenerate subspace ({l1}, {l2})")
    projs = [ProjectorSpec((l1, l2), k) for k in range(4)]
    return [MeasurementSetting(a, d) for a in projs for d in projs]


def subspace_block(rho: DensityMatrix, subspace: tuple[int, int]) -> np.ndarray:
    """4x4 block of an A-D density matrix on the ascending basis of ``subspace``."""
    if rho.paths != ("A", "D"):
        raise MeasurementError(f"expected an A-D density matrix, got paths {rho.paths}")
    try:
        idx = [rho.index(b) for b in two_photon_basis(subspace)]
    except ValueError:
        raise MeasurementError(f"density matrix basis does not cover subspace {subspace}") from None
    return rho.matrix[np.ix_(idx, idx)]


def ideal_probability(rho: DensityMatrix, setting: MeasurementSetting) -> float:
    """Born probability ``Tr(rho P_a (x) P_d)``."""
    block = subspace_block(rho, setting.subspace)
    p = float(np.real(np.trace(block @ setting.operator())))
    return min(max(p, 0.0), 1.0)


def apply_visibility_noise(rho_pure: DensityMatrix, visibility: float) -> DensityMatrix:
    """``V rho + (1 - V) I/d``: interference succeeds a fraction V of the time."""
    if not 0.0 <= visibility <= 1.0:
        raise MeasurementError(f"visibility {visibility} outside [0, 1]")
    d = rho_pure.dim
    m = visibility * rho_pure.matrix + (1 - visibility) * np.eye(d) / d
    return DensityMatrix(rho_pure.paths, rho_pure.basis, m)


# --------------------------------------------------------------------------
# rates
# --------------------------------------------------------------------------


def genuine_fourfold_rate(c_ab: float, c_cd: float, c_ac: float, c_bd: float, rep_rate: float) -> float:
    """Four-fold rate from two pairs born in the same pulse, ``(C_AB C_CD + C_AC C_BD)/R``."""
    if rep_rate <= 0:
        raise MeasurementError("repetition rate must be positive")
    return (c_ab * c_cd + c_ac * c_bd) / rep_rate


def background_rate(pairs: dict[str, float], singles: dict[str, float], rep_rate: float) -> float:
    """Expected accidental four-fold rate (Hz).

    A pair coincidence accompanied by two uncorrelated singles, or four
    uncorrelated singles, all within one pulse::

        (C_AB S_C S_D + S_A S_B C_CD + C_AC S_B S_D + S_A S_C C_BD) / R^2
        + S_A S_B S_C S_D / R^3
    """
    if rep_rate <= 0:
        raise MeasurementError("repetition rate must be positive")
    c = {k: float(pairs.get(k, 0.0)) for k in PAIR_KEYS}
    s = {k: float(singles.get(k, 0.0)) for k in SINGLES_KEYS}
    two = (
        c["AB"] * s["C"] * s["D"]
        + s["A"] * s["B"] * c["CD"]
        + c["AC"] * s["B"] * s["D"]
        + s["A"] * s["C"] * c["BD"]
    )
    four = s["A"] * s["B"] * s["C"] * s["D"]
    return two / rep_rate**2 + four / rep_rate**3


@dataclass(frozen=True)
class NoiseModel:
    visibility: float = 1.0
    singles_hz: dict = field(default_factory=dict)
    pairs_hz: dict = field(default_factory=dict)
    rep_rate_hz: float = 80e6
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.visibility <= 1.0:
            raise MeasurementError(f"visibility {self.visibility} outside [0, 1]")
        if self.rep_rate_hz <= 0:
            raise MeasurementError("repetition rate must be positive")
        for v in list(self.singles_hz.values()) + list(self.pairs_hz.values()):
            if v < 0:
                raise MeasurementError("rates must be non-negative")

    def background_hz(self) -> float:
        return background_rate(self.pairs_hz, self.singles_hz, self.rep_rate_hz)


@dataclass(frozen=True)
class CountRecord:
    """Four-fold counts for one setting plus the rates needed for background subtraction.

    ``fourfold_raw`` is an integer for sampled data; expected-count records
    (see :func:`expected_records`) carry the real-valued Poisson mean instead.
    """

    setting: MeasurementSetting
    fourfold_raw: float
    duration_s: float
    singles_hz: dict = field(default_factory=dict)
    pairs_hz: dict = field(default_factory=dict)
    rep_rate_hz: float = 80e6

    def __post_init__(self):
        if self.duration_s <= 0:
            raise MeasurementError("duration must be positive")
        if self.fourfold_raw < 0:
            raise MeasurementError("counts must be non-negative")

    def expected_background(self) -> float:
        return self.duration_s * background_rate(self.pairs_hz, self.singles_hz, self.rep_rate_hz)

    def to_json(self) -> str:
        d = {
            "setting": self.setting.id,
            "fourfold_raw": self.fourfold_raw,
            "duration_s": self.duration_s,
            "singles_hz": {k: self.singles_hz[k] for k in SINGLES_KEYS if k in self.singles_hz},
            "pairs_hz": {k: self.pairs_hz[k] for k in PAIR_KEYS if k in self.pairs_hz},
            "rep_rate_hz": self.rep_rate_hz,
        }
        return json.dumps(d, separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> CountRecord:
        d = json.loads(line)
        return cls(
            setting=MeasurementSetting.from_id(d["setting"]),
            fourfold_raw=d["fourfold_raw"],
            duration_s=float(d["duration_s"]),
            singles_hz={k: float(v) for k, v in d.get("singles_hz", {}).items()},
            pairs_hz={k: float(v) for k, v in d.get("pairs_hz", {}).items()},
            rep_rate_hz=float(d["rep_rate_hz"]),
        )


def dump_records(records: Iterable[CountRecord]) -> str:
    """One JSON object per line."""
    return "".join(r.to_json() + "\n" for r in records)


def load_records(text: str) -> list[CountRecord]:
    return [CountRecord.from_json(line) for line in text.splitlines() if line.strip()]


def simulate_counts(
    rho: DensityMatrix,
    settings: Sequence[MeasurementSetting],
    fourfold_rate_at_max: float,
    duration_s: float,
    noise: NoiseModel,
    stream: int = 0,
) -> list[CountRecord]:
    """Poisson four-fold counts for each setting.

    Mean counts are ``duration * (rate_at_max * p + background)``, with ``p`` the
    Born probability of ``rho`` (noise already applied by the caller) and the
    background intensity from ``noise``.  Setting ``i`` draws from the stream
    seeded by ``(noise.seed, stream, i)``.
    """
    if duration_s <= 0:
        raise MeasurementError("duration must be positive")
    if fourfold_rate_at_max <= 0:
        raise MeasurementError("four-fold rate must be positive")
    bg = noise.background_hz()
    out = []
    for i, s in enumerate(settings):
        mean = duration_s * (fourfold_rate_at_max * ideal_probability(rho, s) + bg)
        rng = np.random.default_rng(np.random.SeedSequence([int(noise.seed), int(stream), i]))
        out.append(
            CountRecord(
                setting=s,
                fourfold_raw=int(rng.poisson(mean)),
                duration_s=duration_s,
                singles_hz=dict(noise.singles_hz),
                pairs_hz=dict(noise.pairs_hz),
                rep_rate_hz=noise.rep_rate_hz,
            )
        )
    return out


def expected_records(
    rho: DensityMatrix,
    settings: Sequence[MeasurementSetting],
    fourfold_rate_at_max: float,
    duration_s: float,
    noise: NoiseModel | None = None,
) -> list[CountRecord]:
    """Noiseless records holding the Poisson means instead of samples."""
    noise = noise or NoiseModel()
    bg = noise.background_hz()
    return [
        CountRecord(s, duration_s * (fourfold_rate_at_max * ideal_probability(rho, s) + bg), duration_s,
                    dict(noise.singles_hz), dict(noise.pairs_hz), noise.rep_rate_hz)
        for s in settings
    ]


def subtract_background(record: CountRecord) -> float:
    """Raw counts minus expected accidentals, clipped at zero."""
    return max(0.0, record.fourfold_raw - record.expected_background())


# --------------------------------------------------------------------------
# HOM dip
# --------------------------------------------------------------------------


def hom_dip_model(position, center: float, width: float, visibility: float, baseline: float):
    """``baseline * (1 - V exp(-(x - x0)^2 / (2 w^2)))``."""
    if width <= 0:
        raise MeasurementError("dip width must be positive")
    x = np.asarray(position, dtype=float)
    return baseline * (1 - visibility * np.exp(-((x - center) ** 2) / (2 * width**2)))


@dataclass(frozen=True)
class HomFit:
    center: float
    width: float
    visibility: float
    baseline: float
    center_err: float
    width_err: float
    visibility_err: float
    baseline_err: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class HomScan:
    positions: np.ndarray
    counts: np.ndarray
    fit: HomFit | None = None


class HomFitError(RuntimeError):
    pass


def fit_hom_dip(positions, counts, sigma=None) -> HomFit:
    """Weighted least-squares fit of :func:`hom_dip_model` to a delay scan.

    ``sigma`` defaults to Poisson errors ``sqrt(max(counts, 1))``.  Raises
    :class:`HomFitError` when the optimizer does not converge.
    """
    x = np.asarray(positions, dtype=float)
    y = np.asarray(counts, dtype=float)
    if x.shape != y.shape or x.size < 5:
        raise HomFitError("need at least 5 scan points with matching counts")
    if sigma is None:
        sigma = np.sqrt(np.maximum(y, 1.0))
    span = float(x.max() - x.min())
    if span <= 0:
        raise HomFitError("scan positions do not span a range")

    # start from the edges as baseline and the deepest point as centre
    order = np.argsort(x)
    xs, ys = x[order], y[order]
    k = max(1, xs.size // 10)
    base0 = float(np.mean(np.concatenate([ys[:k], ys[-k:]])))
    if base0 <= 0:
        base0 = float(max(ys.max(), 1.0))
    imin = int(np.argmin(ys))
    v0 = float(np.clip(1 - ys[imin] / base0, 0.01, 0.99))
    half = base0 * (1 - v0 / 2)
    below = xs[ys < half]
    w0 = float((below.max() - below.min()) / 2.355) if below.size >= 2 else span / 10
    w0 = max(w0, span / (4 * xs.size))
    # the dip must sit inside the scan and be resolved by it, else V is unidentifiable
    step = float(np.min(np.diff(np.unique(xs))))
    w0 = max(w0, step)
    bounds = ([x.min(), step / 2, 0.0, 0.0], [x.max(), 10 * span, 1.0, np.inf])
    p0 = [xs[imin], w0, v0, base0]

    def model(xx, c, w, v, b):
        return b * (1 - v * np.exp(-((xx - c) ** 2) / (2 * w**2)))

    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", OptimizeWarning)
            popt, pcov = curve_fit(
                model, x, y, p0=p0, sigma=sigma, absolute_sigma=True, bounds=bounds,
                method="trf", xtol=1e-14, ftol=1e-14, gtol=1e-14, max_nfev=20000,
            )
    except (RuntimeError, ValueError) as exc:
        raise HomFitError(f"HOM dip fit did not converge: {exc}") from exc
    with np.errstate(invalid="ignore"):
        err = np.sqrt(np.abs(np.diag(pcov)))
    return HomFit(*(float(v) for v in popt), *(float(e) for e in err))


def synthesize_hom_scan(
    positions, center: float, width: float, visibility: float, baseline_counts: float,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Expected (``rng=None``) or Poisson-sampled counts along a delay scan."""
    mean = hom_dip_model(positions, center, width, visibility, baseline_counts)
    if rng is None:
        return mean
    return rng.poisson(mean).astype(float)


__all__ = [
    "CountRecord",
    "HomFit",
    "HomFitError",
    "HomScan",
    "MeasurementError",
    "MeasurementSetting",
    "NoiseModel",
    "ProjectorSpec",
    "apply_visibility_noise",
    "background_rate",
    "dump_records",
    "expected_records",
    "fit_hom_dip",
    "genuine_fourfold_rate",
    "hom_dip_model",
    "ideal_probability",
    "load_records",
    "simulate_counts",
    "subspace_block",
    "subtract_background",
    "synthesize_hom_scan",
    "tomography_settings",
]
