"""``swapsim`` command-line front end.

    swapsim <swap|tomography|sweep-visibility|hom-scan|assemble4d|purify>
            --config PATH [--seed N] [--out DIR]

Exit status: 0 success, 2 configuration/input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import (
    PostSelectionError,
    analytic_swapped_density_matrix,
    beamsplitter_bc,
    mixture_components,
    postselect_coincidence,
    postselection_probability,
    swap_input,
)
from .config import ConfigError, ExperimentConfig, load_config
from .measurement import (
    HomFitError,
    MeasurementError,
    NoiseModel,
    dump_records,
    fit_hom_dip,
    hom_dip_model,
    synthesize_hom_scan,
)
from .pipeline import parallel_map, run_subspace, swapped_state, table1
from .purification import (
    FilterSpec,
    apply_filter,
    expected_filtered_coefficients,
    pair_schmidt_rank,
    purity,
    schmidt_rank,
    singlet_coefficients,
)
from .states import StateError, format_ket, projector
from .tomography import (
    TomographyError,
    assemble_4d,
    density_matrix_to_dict,
    dump_density_matrix,
    entanglement_of,
    fidelity_to_prediction,
    fidelity_vs_visibility,
    load_density_matrix,
)

log = logging.getLogger("swapsim")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class InputError(Exception):
    pass


def _clean(obj):
    """JSON-safe copy: non-finite floats become null, numpy scalars become Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if math.isfinite(f) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _report(cfg: ExperimentConfig, command: str, body: dict) -> str:
    doc = {"tool": "swapsim", "version": __version__, "command": command, "config": cfg.to_dict()}
    doc.update(body)
    return json.dumps(_clean(doc), indent=2) + "\n"


def _noise(cfg: ExperimentConfig) -> NoiseModel:
    n = cfg.noise
    return NoiseModel(n.visibility, dict(n.singles_hz), dict(n.pairs_hz), n.rep_rate_hz, cfg.run.seed)


def _sub_name(sub) -> str:
    a, b = sorted(sub)
    return f"{a}_{b}"


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_swap(cfg: ExperimentConfig, out: Path, args) -> dict:
    sp = cfg.spectrum()
    rho, prob = swapped_state(sp, cfg.source.truncation)
    closed = analytic_swapped_density_matrix(sp).embed(rho.basis)
    body = {
        "postselection_probability": prob,
        "postselection_probability_closed_form": postselection_probability(sp),
        "components": [{"pair": list(pair), "weight": w} for w, pair in mixture_components(sp)],
        "max_deviation_from_closed_form": float(np.abs(rho.matrix - closed.matrix).max()),
        "density_matrix": density_matrix_to_dict(rho),
    }
    write_atomic(out / "swap.json", _report(cfg, "swap", body))
    return body


def cmd_tomography(cfg: ExperimentConfig, out: Path, args) -> dict:
    a = cfg.acquisition
    runs = table1(
        cfg.spectrum(), [tuple(s) for s in a.subspaces], cfg.noise.visibility, a.fourfold_rate_hz, a.duration_s,
        _noise(cfg), a.method, a.n_resamples, cfg.source.truncation, cfg.run.jobs,
    )
    rows = []
    table = ["# subspace\tfidelity\tfidelity_err\tconcurrence\tconcurrence_err"]
    for r in runs:
        name = _sub_name(r.subspace)
        write_atomic(out / f"counts_{name}.jsonl", dump_records(r.records))
        write_atomic(out / f"rho_{name}.json", dump_density_matrix(r.result.rho) + "\n")
        rep = r.report
        rows.append({
            "subspace": list(r.subspace),
            "fidelity": rep.fidelity, "fidelity_err": rep.fidelity_err,
            "concurrence": rep.concurrence, "concurrence_err": rep.concurrence_err,
            "method": r.result.method, "converged": r.result.converged,
            "total_counts": float(sum(x.fourfold_raw for x in r.records)),
        })
        table.append(f"{r.subspace}\t{rep.fidelity:.6f}\t{rep.fidelity_err:.6f}\t{rep.concurrence:.6f}\t{rep.concurrence_err:.6f}")
    body = {
        "subspaces": rows,
        "mean_fidelity": float(np.mean([x["fidelity"] for x in rows])),
        "mean_concurrence": float(np.mean([x["concurrence"] for x in rows])),
    }
    write_atomic(out / "table1.tsv", "\n".join(table) + "\n")
    write_atomic(out / "tomography.json", _report(cfg, "tomography", body))
    return body


def cmd_sweep_visibility(cfg: ExperimentConfig, out: Path, args) -> dict:
    grid = sorted(float(v) for v in cfg.sweep.visibilities)
    curve = [(v, fidelity_vs_visibility(v)) for v in grid]
    write_atomic(out / "fidelity_vs_visibility.dat", "# visibility\tfidelity\n" + "".join(f"{v!r}\t{f!r}\n" for v, f in curve))
    body = {"analytic": [{"visibility": v, "fidelity": f} for v, f in curve]}
    if cfg.sweep.simulate:
        a = cfg.acquisition
        rho_ad, _ = swapped_state(cfg.spectrum(), cfg.source.truncation)
        noise = _noise(cfg)
        sub = tuple(cfg.sweep.subspace)
        runs = parallel_map(
            run_subspace,
            [(rho_ad, sub, v, a.fourfold_rate_hz, a.duration_s, noise, i) for i, v in enumerate(grid)],
            cfg.run.jobs, method=a.method, n_resamples=a.n_resamples,
        )
        pts = [{"visibility": v, "fidelity": r.report.fidelity, "fidelity_err": r.report.fidelity_err} for v, r in zip(grid, runs)]
        write_atomic(
            out / "fidelity_vs_visibility_sim.dat",
            "# visibility\tfidelity\tfidelity_err\n" + "".join(f"{p['visibility']!r}\t{p['fidelity']!r}\t{p['fidelity_err']!r}\n" for p in pts),
        )
        body["simulated"] = pts
    write_atomic(out / "sweep.json", _report(cfg, "sweep-visibility", body))
    return body


def cmd_hom_scan(cfg: ExperimentConfig, out: Path, args) -> dict:
    h = cfg.hom
    x = np.linspace(h.start_um, h.stop_um, h.points)
    rng = None if h.noiseless else np.random.default_rng(np.random.SeedSequence([cfg.run.seed, 0x40E]))
    counts = synthesize_hom_scan(x, h.center_um, h.width_um, h.visibility, h.baseline_counts, rng)
    fit = fit_hom_dip(x, counts)
    model = hom_dip_model(x, fit.center, fit.width, fit.visibility, fit.baseline)
    write_atomic(
        out / "hom_scan.dat",
        "# position_um\tcounts\tfit\n" + "".join(f"{float(p)!r}\t{float(c)!r}\t{float(m)!r}\n" for p, c, m in zip(x, counts, model)),
    )
    body = {
        "fit": {"center_um": fit.center, "width_um": fit.width, "visibility": fit.visibility, "baseline_counts": fit.baseline,
                "center_err_um": fit.center_err, "width_err_um": fit.width_err, "visibility_err": fit.visibility_err,
                "baseline_err_counts": fit.baseline_err},
        "injected": {"center_um": h.center_um, "width_um": h.width_um, "visibility": h.visibility},
    }
    write_atomic(out / "hom_fit.json", _report(cfg, "hom-scan", body))
    return body


def cmd_assemble4d(cfg: ExperimentConfig, out: Path, args) -> dict:
    sp = cfg.spectrum()
    subs = [tuple(sorted(s)) for s in cfg.acquisition.subspaces]
    if args.matrices:
        src = Path(args.matrices)
        rhos = {}
        for s in subs:
            f = src / f"rho_{_sub_name(s)}.json"
            if not f.is_file():
                raise InputError(f"missing density matrix file {f}")
            try:
                rhos[s] = load_density_matrix(f.read_text())
            except (ValueError, KeyError) as exc:
                raise InputError(f"cannot parse {f}: {exc}") from exc
        source = str(src)
    else:
        a = cfg.acquisition
        runs = table1(sp, subs, cfg.noise.visibility, a.fourfold_rate_hz, a.duration_s, _noise(cfg), a.method,
                      None, cfg.source.truncation, cfg.run.jobs)
        rhos = {r.subspace: r.result.rho for r in runs}
        source = "simulated"
    assembled = assemble_4d(rhos, sp)
    body = {
        "source": source,
        "fidelity_to_prediction": fidelity_to_prediction(assembled, sp),
        "subspace_fidelities": {_sub_name(s): entanglement_of(r, s)[0] for s, r in rhos.items()},
        "unmeasured_elements": int((~assembled.measured).sum()),
    }
    write_atomic(out / "assembled_4d.json", dump_density_matrix(assembled) + "\n")
    write_atomic(out / "assemble4d.json", _report(cfg, "assemble4d", body))
    return body


def cmd_purify(cfg: ExperimentConfig, out: Path, args) -> dict:
    sp = cfg.spectrum()
    n = cfg.purify.filter_n
    trunc = max(cfg.source.truncation, n)
    kept = postselect_coincidence(beamsplitter_bc(swap_input(sp, trunc)))
    ad, p = apply_filter(kept.state, FilterSpec.singlet_superposition(n))
    rho = projector(ad, ("A", "D"))
    coeffs = singlet_coefficients(ad, n)
    expected = expected_filtered_coefficients(sp, n)
    body = {
        "filter_n": n,
        "success_probability": p,
        "purity": purity(rho),
        "schmidt_rank": schmidt_rank(ad),
        "pair_schmidt_rank": pair_schmidt_rank(ad),
        "singlet_coefficients": [[c.real, c.imag] for c in coeffs],
        "expected_coefficients": [[c.real, c.imag] for c in expected],
        "ad_state": [{"ket": format_ket(k), "re": a.real, "im": a.imag} for k, a in sorted(ad.terms.items())],
    }
    write_atomic(out / "purify.json", _report(cfg, "purify", body))
    return body


COMMANDS = {
    "swap": cmd_swap,
    "tomography": cmd_tomography,
    "sweep-visibility": cmd_sweep_visibility,
    "hom-scan": cmd_hom_scan,
    "assemble4d": cmd_assemble4d,
    "purify": cmd_purify,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swapsim", description="OAM entanglement-swapping simulator")
    p.add_argument("--version", action="version", version=f"swapsim {__version__}")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="TOML config, or a JSON report embedding one")
    p.add_argument("--seed", type=int, default=None, help="overrides run.seed")
    p.add_argument("--out", default=None, help="output directory (overrides run.output_dir)")
    p.add_argument("--matrices", default=None, help="assemble4d: directory of rho_<a>_<b>.json files")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed, output_dir=args.out)
        out = Path(cfg.run.output_dir)
        COMMANDS[args.command](cfg, out, args)
    except (ConfigError, InputError) as exc:
        print(f"swapsim: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StateError, PostSelectionError, TomographyError, MeasurementError, HomFitError) as exc:
        print(f"swapsim: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
