"""Command-line entry point.

Subcommands: ``spectrum``, ``verify``, ``wegner``, ``ids``, ``localize`` and
``regularity``.  Exit codes: 0 success, 2 usage error, 3 verification
failure, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .ensemble import (
    ExperimentConfig,
    ids_estimate,
    lifshitz_diagnostic,
    lifshitz_to_csv,
    localization_diagnostics,
    wegner_experiment,
)
from .gauge import FluxField
from .hamiltonian import assemble_from_flux, eigendecompose
from .lattice import BoxRegion
from .linalg import ConvergenceError
from .parallel import EnsembleAborted
from .randomfield import bump_density, sample

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("randmag")


class UsageError(ValueError):
    pass


def _int_list(s: str) -> list[int]:
    try:
        return [int(x) for x in s.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {s!r}") from exc


def _float_list(s: str) -> list[float]:
    try:
        return [float(x) for x in s.split(",") if x.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated reals, got {s!r}") from exc


def _common(p: argparse.ArgumentParser, experiment: bool = True) -> None:
    p.add_argument("--config", type=Path, help="JSON config file (flags take precedence)")
    p.add_argument("--seed", type=int, dest="master_seed", help="master seed")
    p.add_argument("--b", type=float, help="flux exclusion parameter in (0, pi/2), radians")
    p.add_argument("--mode", choices=("symmetric", "single_arc", "near_zero"), help="density mode")
    p.add_argument("--out", type=Path, help="output directory (default $RANDMAG_OUTPUT_DIR or ./randmag_out)")
    p.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
    if experiment:
        p.add_argument("--L", type=_int_list, dest="L_list", help="box half-widths, comma separated")
        p.add_argument("--samples", type=int, help="disorder samples per L")
        p.add_argument("--workers", type=int, dest="worker_count", help="worker processes")
        p.add_argument("--plot-data", action="store_true", help="also write (x, y, yerr) triples")
        p.add_argument("--resume", action="store_true", help="resume from a partial-results manifest")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="randmag", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="spectrum of one disorder sample")
    _common(p, experiment=False)
    p.add_argument("--L", type=int, required=True, help="box half-width")
    p.add_argument("--index", type=int, default=0, help="sample index")
    p.add_argument("--flux-file", type=Path, help="explicit FluxField JSON (overrides sampling)")
    p.add_argument("--vectors", action="store_true", help="dump eigenvectors as little-endian complex128")
    p.add_argument("--method", choices=("lapack", "householder"), default="lapack")

    p = sub.add_parser("verify", help="run identity and inequality suites")
    _common(p, experiment=False)
    p.add_argument("--suite", action="append", help="suite name (repeatable); default all")
    p.add_argument("--L", type=_int_list, dest="L_list", default=[2, 3, 4])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--index", type=int, default=0, help="first sample index")
    p.add_argument("--inject-fault", choices=("antisymmetry",), help=argparse.SUPPRESS)

    p = sub.add_parser("wegner", help="mean eigenvalue counts in energy windows")
    _common(p)
    p.add_argument("--E", type=_float_list, dest="E_grid", help="window centres")
    p.add_argument("--eta", type=_float_list, dest="eta_grid", help="window widths")
    p.add_argument("--E-star", type=float, dest="E_star")

    p = sub.add_parser("ids", help="integrated density of states")
    _common(p)
    p.add_argument("--E", type=_float_list, dest="E_grid", help="energy grid")

    p = sub.add_parser("localize", help="IPR and decay fits of band-edge states")
    _common(p)
    p.add_argument("--window", type=float, help="energy window above E0")
    p.add_argument("--n-states", type=int, dest="n_states", help="lowest states per sample instead of a window")

    p = sub.add_parser("regularity", help="square certificates and current floor versus L")
    _common(p)
    p.add_argument("--E-star", type=float, dest="E_star")
    p.add_argument("--eps", type=float)
    return parser


_CONFIG_KEYS = ("L_list", "E_grid", "eta_grid", "samples", "b", "mode", "master_seed", "E_star",
                "worker_count", "window", "n_states", "eps")


def resolve_config(args) -> ExperimentConfig:
    """Defaults, then the config file, then explicit flags."""
    cfg = ExperimentConfig.load(args.config) if getattr(args, "config", None) else ExperimentConfig()
    over = {k: getattr(args, k) for k in _CONFIG_KEYS if getattr(args, k, None) is not None}
    return cfg.with_overrides(**over)


def _out_dir(args) -> Path:
    d = args.out if args.out is not None else io.default_output_dir()
    d.mkdir(parents=True, exist_ok=True)
    return d


def _emit(manifest: io.RunManifest, path: Path, config: dict, seed: int, **extra) -> None:
    manifest.outputs.append(str(path))
    if path.suffix == ".csv":
        manifest.outputs.append(str(io.write_sidecar(path, config, seed, **extra)))


def _plot_data(out: Path, stem: str, triples, manifest) -> None:
    path = io.write_csv(out / f"{stem}_plot.csv", ("x", "y", "yerr"), triples)
    manifest.outputs.append(str(path))


def cmd_spectrum(args) -> int:
    if args.L < 1:
        raise UsageError(f"--L must be a positive integer, got {args.L}")
    b = args.b if args.b is not None else np.pi / 4
    seed = args.master_seed if args.master_seed is not None else 0
    config = {"L": args.L, "b": b, "mode": args.mode or "symmetric", "seed": seed, "index": args.index,
              "flux_file": str(args.flux_file) if args.flux_file else None, "method": args.method}
    if args.dry_run:
        print(json.dumps(config, sort_keys=True, indent=1))
        return EXIT_OK
    out = _out_dir(args)
    man = io.RunManifest("spectrum", config, seed)
    if args.flux_file:
        omega = FluxField.load(args.flux_file)
        if omega.box != BoxRegion.centered(args.L):
            raise UsageError(f"flux file box {omega.box} does not match --L {args.L}")
    else:
        omega = sample(bump_density(b, config["mode"]), BoxRegion.centered(args.L), seed, args.index).flux_field
    spec = eigendecompose(assemble_from_flux(omega), method=args.method)
    name = io.output_name("spectrum", [args.L], seed)
    rows = ((args.index, k, w) for k, w in enumerate(spec.eigenvalues))
    path = io.write_csv(out / name, ("sample_index", "k", "eigenvalue"), rows)
    _emit(man, path, config, seed, max_residual=spec.max_residual)
    if args.vectors:
        vp = io.write_eigenvectors(out / name.replace(".csv", "_vectors.c16"), spec.eigenvectors)
        man.outputs.append(str(vp))
    man.finish()
    man.write(out)
    print(f"{len(spec.eigenvalues)} eigenvalues in [{spec.eigenvalues[0]:.6f}, {spec.eigenvalues[-1]:.6f}] -> {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .verify import SUITES, run_suite

    names = []
    for s in args.suite or list(SUITES):
        names += [x for x in s.split(",") if x]
    bad = [n for n in names if n not in SUITES]
    if bad:
        raise UsageError(f"unknown suite(s) {bad}; choose from {sorted(SUITES)}")
    b = args.b if args.b is not None else np.pi / 4
    seed = args.master_seed if args.master_seed is not None else 0
    config = {"suites": names, "L_list": list(args.L_list), "trials": args.trials, "b": b,
              "seed": seed, "start_index": args.index, "fault": args.inject_fault}
    if args.dry_run:
        print(json.dumps(config, sort_keys=True, indent=1))
        return EXIT_OK
    out = _out_dir(args)
    man = io.RunManifest("verify", config, seed)
    results = []
    for n in names:
        r = run_suite(n, L_list=args.L_list, trials=args.trials, seed=seed, b=b,
                      fault=args.inject_fault, start_index=args.index)
        print(r.line())
        results.append(r)
        man.suites[n] = "pass" if r.passed else "fail"
    rows = [(r.name, r.passed, r.trials, r.worst_margin,
             *(r.replay[k] if r.replay else None for k in ("L", "seed", "index"))) for r in results]
    path = io.write_csv(out / io.output_name("verify", args.L_list, seed),
                        ("suite", "passed", "trials", "worst_margin", "replay_L", "replay_seed", "replay_index"), rows)
    _emit(man, path, config, seed)
    ok = all(r.passed for r in results)
    man.finish("ok" if ok else "verification_failed")
    man.write(out)
    return EXIT_OK if ok else EXIT_VERIFY


def _experiment(args, name: str):
    cfg = resolve_config(args)
    if args.dry_run:
        print(json.dumps(cfg.to_json(), sort_keys=True, indent=1))
        return cfg, None, None, None
    out = _out_dir(args)
    man = io.RunManifest(name, cfg.to_json(), cfg.master_seed)
    partial = out / f"partial_{name}_seed{cfg.master_seed}.json"
    return cfg, out, man, partial


def cmd_wegner(args) -> int:
    cfg, out, man, partial = _experiment(args, "wegner")
    try:
        cfg.check_wegner()
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if out is None:
        return EXIT_OK
    table = wegner_experiment(cfg, manifest=partial, resume=args.resume)
    path = table.to_csv(out / io.output_name("wegner", cfg.L_list, cfg.master_seed))
    C_hat = table.fitted_C()
    E_grid = cfg.wegner_E_grid()
    exps = {f"E={E},eta={eta}": table.volume_exponent(E, eta) for E in E_grid for eta in cfg.eta_grid}
    _emit(man, path, cfg.to_json(), cfg.master_seed, fitted_C=C_hat, volume_exponents=exps)
    if args.plot_data:
        _plot_data(out, path.stem, table.plot_data(), man)
    man.finish()
    man.write(out)
    print(f"fitted C = {C_hat:.3e} (mean_count <= C eta L^8 on all rows)")
    for L in cfg.L_list:
        for E in E_grid:
            for d in table.doubling_ratios(L, E):
                print(f"L={L} E={E:.4f} eta {d['eta0']}->{d['eta1']}: ratio {d['ratio']:.3f} +- {d['stderr']:.3f}")
    return EXIT_OK


def cmd_ids(args) -> int:
    cfg, out, man, partial = _experiment(args, "ids")
    if out is None:
        return EXIT_OK
    curve = ids_estimate(cfg, manifest=partial, resume=args.resume)
    path = curve.to_csv(out / io.output_name("ids", cfg.L_list, cfg.master_seed))
    _emit(man, path, cfg.to_json(), cfg.master_seed, L_used=curve.L, drift_L=curve.drift_L)
    lpath = lifshitz_to_csv(lifshitz_diagnostic(curve, cfg.b), out / io.output_name("lifshitz", cfg.L_list, cfg.master_seed))
    _emit(man, lpath, cfg.to_json(), cfg.master_seed)
    if args.plot_data:
        _plot_data(out, path.stem, curve.plot_data(), man)
    man.finish()
    man.write(out)
    print(f"IDS at L={curve.L} over {curve.samples} samples -> {path}")
    return EXIT_OK


def cmd_localize(args) -> int:
    cfg, out, man, partial = _experiment(args, "localize")
    if out is None:
        return EXIT_OK
    rep = localization_diagnostics(cfg, manifest=partial, resume=args.resume)
    path = rep.to_csv(out / io.output_name("localize", cfg.L_list, cfg.master_seed))
    _emit(man, path, cfg.to_json(), cfg.master_seed)
    if args.plot_data:
        _plot_data(out, path.stem, rep.plot_data(), man)
    man.finish()
    man.write(out)
    if not rep.states:
        print("warning: no disordered eigenvalues in the selected window", file=sys.stderr)
    print(f"mean IPR by L (disordered): {rep.ipr_by_L()}")
    print(f"mean IPR by L (clean):      {rep.ipr_by_L(clean=True)}")
    print(f"fits with r^2 > 0.9: {rep.fit_fraction():.2f}")
    return EXIT_OK


def cmd_regularity(args) -> int:
    from .regularity import scaling_study

    cfg, out, man, _ = _experiment(args, "regularity")
    if out is None:
        return EXIT_OK
    rows = scaling_study(cfg.L_list, cfg.samples, cfg.E_star, cfg.b, cfg.master_seed, cfg.worker_count,
                         cfg.mode, cfg.eps)
    header = tuple(rows[0])
    path = io.write_csv(out / io.output_name("regularity", cfg.L_list, cfg.master_seed), header,
                        [tuple(r[k] for k in header) for r in rows])
    _emit(man, path, cfg.to_json(), cfg.master_seed)
    if args.plot_data:
        _plot_data(out, path.stem, [(r["L"], r["floor_min"], 0.0) for r in rows], man)
    ok = all(r["certified"] == r["pairs"] == r["bound_ok"] for r in rows)
    man.finish("ok" if ok else "verification_failed")
    man.write(out)
    for r in rows:
        print(r)
    return EXIT_OK if ok else EXIT_VERIFY


COMMANDS = {
    "spectrum": cmd_spectrum,
    "verify": cmd_verify,
    "wegner": cmd_wegner,
    "ids": cmd_ids,
    "localize": cmd_localize,
    "regularity": cmd_regularity,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"randmag: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConvergenceError, np.linalg.LinAlgError) as exc:
        print(f"randmag: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except EnsembleAborted as exc:
        print(f"randmag: {exc}; partial results in {exc.manifest}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        parser.print_usage(sys.stderr)
        print(f"randmag: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
