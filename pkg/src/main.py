"""
Main CLI Interface for SVI Lab
"""

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from .config import build_potential, load_experiment_config, output_root
from .convex_analysis import (RegularizedPotential, conjugate, eval_phi, eval_psi, moreau_psi_eps,
                              recession, recession_conjugate, resolvent, yosida_phi_eps)
from .criticality import cluster_event_log, size_histogram
from .discrete_spaces import Field, Grid, hminus1_norm
from .errors import (ConfigError, DomainTooSmall, GrowthClassError, GridMismatch, ModeOutOfRange,
                     ParamError, PotentialError, SolverError)
from .manifest import RunManifest, write_diagnostics
from .measures import (EnergyFunctional, RadonMeasure, approx_sequence, bump, energy,
                       field_pairing, measure_to_field, pairing)
from .spde_solver import PathEnsemble, coupled_simulate, energy_stats, simulate
from .svi_verifier import (build_test_process, calibrate_gronwall_rate, eps_rate_stat,
                           gronwall_table, regularity_ladder, regularity_stat, svi_margin)
from .utils import flatten_record, format_report, write_table

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SOLVER = 3
EXIT_INEQUALITY = 4

CONVEX_OPS = ['psi', 'phi', 'resolvent', 'yosida', 'moreau', 'conjugate', 'recession',
              'recession-conjugate']
EPS_OPS = {'resolvent', 'yosida', 'moreau'}
DEFAULT_LEVELS = '4,8,16,32,64,128,256'


def _configure_logging(verbose: bool = False) -> None:
    """Configure root logging once per invocation"""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(level=level, format='%(levelname)s %(name)s: %(message)s')
    logging.getLogger().setLevel(level)
    logging.captureWarnings(True)


def _banner(title: str) -> None:
    print("\n" + "=" * 80)
    print(title)
    print("=" * 80)


def _run_dir(args, name: str) -> Path:
    out = Path(args.output_dir) if args.output_dir else output_root() / name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_grid(spec: str) -> np.ndarray:
    try:
        a, b, step = (float(s) for s in spec.split(':'))
    except ValueError as e:
        raise ConfigError(f"--grid expects a:b:step, got {spec!r}") from e
    if step <= 0 or b < a:
        raise ConfigError(f"--grid needs a <= b and step > 0, got {spec!r}")
    return a + step * np.arange(int(np.floor((b - a) / step + 1e-9)) + 1)


def _parse_atom(spec: str) -> Tuple[float, float]:
    try:
        loc, mass = (float(s) for s in spec.split(':'))
    except ValueError as e:
        raise ConfigError(f"--atom expects loc:mass, got {spec!r}") from e
    return loc, mass


# ----------------------------------------------------------------------------
# convex
# ----------------------------------------------------------------------------

def _convex_column(op: str, potential, rp: Optional[RegularizedPotential],
                   xs: np.ndarray) -> dict:
    if op == 'psi':
        return {'psi': np.asarray(eval_psi(potential, xs), dtype=float)}
    if op == 'phi':
        intervals = [eval_phi(potential, float(x)) for x in xs]
        return {'phi_lower': [s.lower for s in intervals],
                'phi_upper': [s.upper for s in intervals]}
    if op == 'resolvent':
        return {'resolvent': [resolvent(rp, float(x)) for x in xs]}
    if op == 'yosida':
        return {'yosida': [yosida_phi_eps(rp, float(x)) for x in xs]}
    if op == 'moreau':
        return {'moreau': [moreau_psi_eps(rp, float(x)) for x in xs]}
    if op == 'conjugate':
        return {'conjugate': [conjugate(potential, float(x)) for x in xs]}
    if op == 'recession':
        return {'recession': [recession(potential, float(x)) for x in xs]}
    return {'recession_conjugate': [recession_conjugate(potential, float(x)) for x in xs]}


def convex_command(args) -> int:
    """Tabulate psi, phi, its regularizations, conjugate and recession"""
    potential = build_potential(args.potential)
    xs = np.array(args.at, dtype=float) if args.at else _parse_grid(args.grid)

    ops = CONVEX_OPS if args.op == 'all' else [args.op]
    rp = None
    if args.eps is not None:
        rp = RegularizedPotential(potential, args.eps)
    elif args.op in EPS_OPS:
        raise ConfigError(f"--op {args.op} needs --eps")
    if args.op == 'all':
        ops = [op for op in ops if (op not in EPS_OPS or rp is not None)
               and (op != 'recession-conjugate' or potential.is_sublinear())]

    table = {'x': xs}
    for op in ops:
        table.update(_convex_column(op, potential, rp, xs))
    df = pd.DataFrame(table)

    _banner(f"POTENTIAL {potential.label.upper()} ({potential.growth_class.value})")
    with pd.option_context('display.max_rows', None, 'display.float_format', '{:.10g}'.format):
        print(df.to_string(index=False))

    if args.output:
        write_table(df, args.output)
        print(f"\nTable saved to: {args.output}")
    return EXIT_OK


# ----------------------------------------------------------------------------
# simulate
# ----------------------------------------------------------------------------

def _snapshot_frame(ens: PathEnsemble, max_paths: int) -> pd.DataFrame:
    paths = np.flatnonzero(ens.valid)[:max_paths]
    n_snap = len(ens.times)
    nodes = ens.grid.nodes
    n = len(nodes)
    return pd.DataFrame({
        'path': np.repeat(paths, n_snap * n),
        'time': np.tile(np.repeat(ens.times, n), len(paths)),
        'x': np.tile(nodes, len(paths) * n_snap),
        'value': ens.snapshots[paths].reshape(-1),
    })


def _path_stats_frame(ens: PathEnsemble) -> pd.DataFrame:
    return pd.DataFrame({
        'path': np.arange(ens.n_paths),
        'aborted': ens.aborted.astype(int),
        'sup_l2_sq': ens.sup_l2_sq,
        'int_h10_sq': ens.int_h10_sq,
        'int_energy_eps': ens.int_energy_eps,
        'int_energy': ens.cum_energy[:, -1],
    })


def _finish(manifest: RunManifest, out_dir: Path, files: List[Path]) -> None:
    for path in files:
        manifest.add_file(path, out_dir)
    manifest.finish()
    manifest.write(out_dir)


def simulate_command(args) -> int:
    """Run the regularized equation and write snapshots, per-path stats and a summary"""
    exp = load_experiment_config(args.config, threads=args.threads)
    out_dir = _run_dir(args, exp.name)
    manifest = RunManifest('simulate', exp.record, exp.seed)

    try:
        exp.solver.validate()
    except SolverError as e:
        write_diagnostics(out_dir, e)
        _finish(manifest, out_dir, [])
        return EXIT_SOLVER

    ens = simulate(exp.solver, exp.x0, progress=args.progress)
    stats = energy_stats(ens)
    f = EnergyFunctional(exp.potential)
    reg_mean, reg_se = regularity_stat(ens, f)

    summary = dict(stats.to_dict(), int_energy=reg_mean, int_energy_stderr=reg_se,
                   eps=exp.solver.eps, h_minus1_sq_x0=hminus1_norm(exp.x0) ** 2)
    files = [
        write_table(_snapshot_frame(ens, exp.output['save_paths']), out_dir / 'snapshots.csv'),
        write_table(_path_stats_frame(ens), out_dir / 'stats.csv'),
        write_table(pd.DataFrame([summary]), out_dir / 'summary.csv'),
    ]

    print(format_report(f"SIMULATION: {exp.name}", [
        ('eps', exp.solver.eps),
        ('Paths (aborted)', f"{stats.n_paths + stats.n_aborted} ({stats.n_aborted})"),
        ('E sup ||X||^2_L2', stats.sup_l2_sq[0]),
        ('eps E int ||X||^2_H10', stats.eps_int_h10_sq[0]),
        ('E int phi^eps(X)', stats.int_energy_eps[0]),
        ('E int phi(X)', reg_mean),
        ('Output directory', str(out_dir)),
    ]))

    if ens.any_aborted():
        files.append(write_diagnostics(out_dir, 'SolverError', ens.messages))
        _finish(manifest, out_dir, files)
        return EXIT_SOLVER
    _finish(manifest, out_dir, files)
    return EXIT_OK


# ----------------------------------------------------------------------------
# verify-svi
# ----------------------------------------------------------------------------

def _calibrate_constant(exp) -> float:
    """Gronwall rate of a coupled run from x0 and from zero"""
    pair = coupled_simulate(exp.solver, exp.solver, exp.x0, Field.zeros(exp.grid))
    return calibrate_gronwall_rate(pair)


def verify_svi_command(args) -> int:
    """Estimate both sides of the variational inequality for every test process"""
    exp = load_experiment_config(args.config, threads=args.threads)
    if not exp.test_processes:
        raise ConfigError("'svi.test_processes' must name at least one test process")
    out_dir = _run_dir(args, exp.name)
    manifest = RunManifest('verify-svi', exp.record, exp.seed)

    cfg = exp.solver
    try:
        cfg.validate()
    except SolverError as e:
        write_diagnostics(out_dir, e)
        _finish(manifest, out_dir, [])
        return EXIT_SOLVER

    f = EnergyFunctional(exp.potential)
    C = exp.svi['C']
    if C is None:
        C = _calibrate_constant(exp)
        logger.info("Using calibrated C = %.6g", C)
    manifest.config = dict(exp.record, svi=dict(exp.record['svi'], C=C))

    candidate = None if exp.svi['identical'] else simulate(cfg, exp.x0, progress=args.progress)
    files, rows, messages = [], [], []
    all_passed = True
    aborted = candidate is not None and candidate.any_aborted()
    if candidate is not None:
        messages += candidate.messages

    used_names = set()
    for spec in exp.test_processes:
        z = build_test_process(spec.kind, cfg, spec.z0, spec.g, spec.inner_eps,
                               progress=args.progress)
        if z.ensemble.any_aborted():
            aborted = True
            messages += z.ensemble.messages
        report = svi_margin(z.ensemble if candidate is None else candidate, z, f, C,
                            slack=bool(exp.svi['slack']))
        passed = report.passed(exp.svi['n_sigma'])
        all_passed = all_passed and passed
        print(report.summary())

        name = f"svi_report_{spec.kind.value}"
        suffix = 1
        while name in used_names:
            suffix += 1
            name = f"svi_report_{spec.kind.value}_{suffix}"
        used_names.add(name)
        files.append(write_table(report.to_frame(), out_dir / f"{name}.csv"))

        k = report.worst_index
        rows.append({
            'report': name,
            'kind': spec.kind.value,
            'C': C,
            'worst_t': report.t_grid[k],
            'worst_margin': report.margin[k],
            'stderr': report.stderr[k],
            'n_paths': report.n_paths,
            'verdict': 'PASS' if passed else 'FAIL',
        })

    files.append(write_table(pd.DataFrame(rows), out_dir / 'summary.csv'))
    if aborted:
        files.append(write_diagnostics(out_dir, 'SolverError', messages))
        _finish(manifest, out_dir, files)
        return EXIT_SOLVER
    _finish(manifest, out_dir, files)
    return EXIT_OK if all_passed else EXIT_INEQUALITY


# ----------------------------------------------------------------------------
# approx-demo
# ----------------------------------------------------------------------------

def _demo_test_functions():
    return {
        'gap_sin1': lambda x: np.sin(np.pi * x),
        'gap_sin2': lambda x: np.sin(2 * np.pi * x),
        'gap_bump': lambda x: bump((x - 0.5) / 0.2),
    }


def approx_demo_command(args) -> int:
    """Energy and weak-pairing gaps of the smooth approximations u_n of a measure"""
    grid = Grid(0.0, 1.0, args.cells)
    potential = build_potential(args.potential)
    atoms = [_parse_atom(a) for a in (args.atom or [])]
    mu = RadonMeasure(grid, args.density, atoms)
    try:
        levels = [int(s) for s in args.levels.split(',') if s.strip()]
    except ValueError as e:
        raise ConfigError(f"--levels expects comma-separated integers, got {args.levels!r}") from e
    if not levels or min(levels) < 1:
        raise ConfigError("--levels needs positive integers")

    f = EnergyFunctional(potential)
    target = energy(f, mu)
    mu_field = measure_to_field(mu)
    tests = _demo_test_functions()

    rows = []
    for n in levels:
        u = approx_sequence(mu, n)
        row = {'n': n, 'energy': energy(f, u), 'target': target}
        for name, eta in tests.items():
            row[name] = abs(field_pairing(u, eta) - pairing(mu, eta))
        row['hminus1_dist'] = hminus1_norm(u - mu_field)
        rows.append(row)
    df = pd.DataFrame(rows)

    if args.output:
        write_table(df, args.output)
        logger.info("Approximation table saved to %s", args.output)
    else:
        df.to_csv(sys.stdout, index=False, float_format='%.12e', lineterminator='\n')
    return EXIT_OK


# ----------------------------------------------------------------------------
# soc-stats
# ----------------------------------------------------------------------------

def soc_stats_command(args) -> int:
    """Supercritical cluster event log and size histogram"""
    exp = load_experiment_config(args.config, threads=args.threads)
    if exp.potential.label != 'psi1':
        raise ConfigError(f"soc-stats needs the psi1 potential, got {exp.potential.label}")
    if exp.solver.noise.multiplier.value != 'additive':
        raise ConfigError("soc-stats needs additive noise")
    out_dir = _run_dir(args, exp.name)
    manifest = RunManifest('soc-stats', exp.record, exp.seed)

    try:
        exp.solver.validate()
    except SolverError as e:
        write_diagnostics(out_dir, e)
        _finish(manifest, out_dir, [])
        return EXIT_SOLVER

    ens = simulate(exp.solver, exp.x0, progress=args.progress)
    events = cluster_event_log(ens, exp.soc['threshold'])
    hist = size_histogram(events, exp.grid.cells)
    files = [
        write_table(events, out_dir / 'cluster_events.csv'),
        write_table(hist, out_dir / 'size_histogram.csv'),
    ]

    print(format_report(f"SUPERCRITICAL CLUSTERS: {exp.name}", [
        ('Threshold', exp.soc['threshold']),
        ('Events', len(events)),
        ('Largest cluster', int(events['size'].max()) if len(events) else 0),
        ('Output directory', str(out_dir)),
    ]))

    if ens.any_aborted():
        files.append(write_diagnostics(out_dir, 'SolverError', ens.messages))
        _finish(manifest, out_dir, files)
        return EXIT_SOLVER
    _finish(manifest, out_dir, files)
    return EXIT_OK


# ----------------------------------------------------------------------------
# stability
# ----------------------------------------------------------------------------

def _stability_runs(exp, progress: bool):
    """Every ensemble the selected checks need, keyed by check name"""
    cfg = exp.solver
    checks = exp.stability['checks']
    runs = {}
    if 'regularity' in checks:
        configs = [cfg.with_eps(eps) for eps in exp.stability['regularity_eps']]
        for c in configs:
            c.validate()
        runs['regularity'] = [simulate(c, exp.x0, progress=progress) for c in configs]
    if 'eps_rate' in checks:
        rungs = [(cfg.with_eps(eps), cfg.with_eps(eps / 2)) for eps in exp.stability['eps_ladder']]
        for coarse, fine in rungs:
            coarse.validate()
            fine.validate()
        runs['eps_rate'] = [coupled_simulate(coarse, fine, exp.x0, exp.x0, progress=progress)
                            for coarse, fine in rungs]
    if 'gronwall' in checks:
        cfg.validate()
        seeds = [cfg.noise.seed + r for r in range(exp.stability['replicates'])]
        configs = [replace(cfg, noise=replace(cfg.noise, seed=s)) for s in seeds]
        runs['gronwall'] = [coupled_simulate(c, c, exp.x0, exp.y0, progress=progress)
                            for c in configs]
    return runs


def _ensembles(runs) -> List[PathEnsemble]:
    out = []
    for items in runs.values():
        for item in items:
            out.extend([item] if isinstance(item, PathEnsemble) else [item.first, item.second])
    return out


def stability_command(args) -> int:
    """Regularity across eps, the eps-rate ladder and the Gronwall bound over seed replicates"""
    exp = load_experiment_config(args.config, threads=args.threads)
    out_dir = _run_dir(args, exp.name)
    manifest = RunManifest('stability', exp.record, exp.seed)

    try:
        runs = _stability_runs(exp, args.progress)
    except SolverError as e:
        write_diagnostics(out_dir, e)
        _finish(manifest, out_dir, [])
        return EXIT_SOLVER

    files, summary, passed = [], {}, True
    rows = []
    if 'regularity' in runs:
        table = regularity_ladder(runs['regularity'])
        files.append(write_table(table.frame, out_dir / 'regularity.csv'))
        summary['regularity'] = {'variation': table.variation, 'passed': table.passed()}
        passed = passed and table.passed()
        rows.append(('Regularity variation', f"{table.variation:.3f}"))
    if 'eps_rate' in runs:
        table = eps_rate_stat(runs['eps_rate'])
        files.append(write_table(table.frame, out_dir / 'eps_rate.csv'))
        summary['eps_rate'] = {'monotone': table.monotone, 'warnings': len(table.warnings),
                               'passed': table.passed}
        passed = passed and table.passed
        rows.append(('D(eps) strictly decreasing', table.monotone))
    if 'gronwall' in runs:
        table = gronwall_table(runs['gronwall'])
        files.append(write_table(table.frame, out_dir / 'gronwall.csv'))
        summary['gronwall'] = {'max_ratio': float(table.frame['ratio'].max()),
                               'bound': float(table.frame['bound'].min()),
                               'passed': table.passed}
        passed = passed and table.passed
        rows.append(('Gronwall replicates within bound', table.passed))
    files.append(write_table(pd.DataFrame([flatten_record(summary)]), out_dir / 'summary.csv'))

    print(format_report(f"STABILITY: {exp.name}", rows + [
        ('Verdict', 'PASS' if passed else 'FAIL'),
        ('Output directory', str(out_dir)),
    ]))

    ensembles = _ensembles(runs)
    if any(ens.any_aborted() for ens in ensembles):
        messages = [m for ens in ensembles for m in ens.messages]
        files.append(write_diagnostics(out_dir, 'SolverError', messages))
        _finish(manifest, out_dir, files)
        return EXIT_SOLVER
    _finish(manifest, out_dir, files)
    return EXIT_OK if passed else EXIT_INEQUALITY


# ----------------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--threads', type=int, default=1,
                        help='Worker threads over Monte-Carlo paths (0 = auto, default: 1)')
    common.add_argument('--progress', action='store_true', help='Show a progress bar over paths')
    common.add_argument('--verbose', '-v', action='store_true', help='Debug logging')
    common.add_argument('--output-dir', help='Run directory (default: $SVI_LAB_OUTPUT_ROOT/<name>)')

    parser = argparse.ArgumentParser(
        description="SVI Lab - stochastic porous-medium equations and their variational inequality",
        formatter_class=argparse.RawDescriptionHelpFormatter
    )
    subparsers = parser.add_subparsers(dest='command', help='Available commands')

    convex_parser = subparsers.add_parser('convex', parents=[common],
                                          help='Tabulate convex-analysis primitives')
    convex_parser.add_argument('--potential', required=True,
                               help='Builtin name (psi1, psi2, quadratic, zero) or JSON record')
    convex_parser.add_argument('--op', choices=CONVEX_OPS + ['all'], default='all',
                               help='Quantity to tabulate (default: all)')
    convex_parser.add_argument('--eps', type=float, help='Regularization parameter')
    convex_parser.add_argument('--grid', default='-2:2:0.5', help='Points as a:b:step')
    convex_parser.add_argument('--at', type=float, action='append', help='Single point (repeatable)')
    convex_parser.add_argument('--output', '-o', help='Save table to CSV file')
    convex_parser.set_defaults(func=convex_command)

    sim_parser = subparsers.add_parser('simulate', parents=[common],
                                       help='Simulate the regularized equation')
    sim_parser.add_argument('config', help='Experiment config (JSON)')
    sim_parser.set_defaults(func=simulate_command)

    svi_parser = subparsers.add_parser('verify-svi', parents=[common],
                                       help='Estimate the variational inequality margins')
    svi_parser.add_argument('config', help='Experiment config (JSON)')
    svi_parser.set_defaults(func=verify_svi_command)

    approx_parser = subparsers.add_parser('approx-demo', parents=[common],
                                          help='Smooth approximation of a measure')
    approx_parser.add_argument('--atom', action='append', help='Atom as loc:mass (repeatable)')
    approx_parser.add_argument('--density', type=float, default=0.0,
                               help='Constant density (default: 0)')
    approx_parser.add_argument('--potential', default='psi1', help='Potential (default: psi1)')
    approx_parser.add_argument('--cells', type=int, default=1024, help='Grid cells (default: 1024)')
    approx_parser.add_argument('--levels', default=DEFAULT_LEVELS,
                               help=f'Comma-separated levels n (default: {DEFAULT_LEVELS})')
    approx_parser.add_argument('--output', '-o', help='Save table to CSV file')
    approx_parser.set_defaults(func=approx_demo_command)

    soc_parser = subparsers.add_parser('soc-stats', parents=[common],
                                       help='Supercritical cluster statistics')
    soc_parser.add_argument('config', help='Experiment config (JSON)')
    soc_parser.set_defaults(func=soc_stats_command)

    stability_parser = subparsers.add_parser('stability', parents=[common],
                                             help='Regularity, eps-rate and Gronwall checks')
    stability_parser.add_argument('config', help='Experiment config (JSON)')
    stability_parser.set_defaults(func=stability_command)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point; returns the exit code"""
    parser = build_parser()
    args = parser.parse_args(argv)

    if not args.command:
        parser.print_help()
        return EXIT_USAGE

    _configure_logging(args.verbose)
    try:
        return args.func(args)
    except (ConfigError, PotentialError, ParamError, GrowthClassError, DomainTooSmall,
            ModeOutOfRange, GridMismatch) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as e:
        print(f"Solver error: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
