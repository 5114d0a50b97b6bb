"""Command-line front end: one subcommand per computation, CSV out, JSON manifest alongside.

Exit codes: 0 success, 2 configuration error, 3 numerical-policy violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .config import (ConfigError, RunConfig, parse_conditional, parse_grid, parse_packet,
                     parse_times, parse_units, write_packet_config)
from .state import MomentumGrid, WavePacket, superposition, time_grid, to_energy_channels, translate, write_csv

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


def _numeric_errors():
    from .conditional import NoArrivalError, NumericalPolicyError
    from .kernelcore import GridError, SpectralError
    from .scatter1d import BranchError, RegularizationError
    return (NumericalPolicyError, NoArrivalError, GridError, SpectralError, BranchError, RegularizationError)


def _manifest_path(out) -> Path:
    return Path(out).with_suffix(".manifest.json")


def write_manifest(out, subcommand, cfg: RunConfig, outputs, results, seed=None, extra_config=None):
    resolved = cfg.as_dict()
    if extra_config:
        resolved["resolved"] = extra_config
    man = {"subcommand": subcommand, "config": resolved, "config_path": cfg.path,
           "outputs": [str(p) for p in outputs], "results": results, "seed": seed, "version": __version__}
    path = _manifest_path(out)
    path.write_text(json.dumps(man, indent=2, sort_keys=True, default=float) + "\n")
    return path


def _need_config(args) -> RunConfig:
    if not args.config:
        raise ConfigError(f"{args.command}: --config is required")
    return RunConfig.load(args.config)


def _arrival_times(args, cfg, packet, units):
    from .freearrival import free_arrival_basis
    from .kernelcore import auto_window
    t = parse_times(args.times, cfg)
    if t is None:
        phi = to_energy_channels(packet, units)
        t = auto_window(free_arrival_basis(packet, units), phi, "arrival", units)
    return t


def _plane_shift(cfg, packet):
    """Move the packet so that the plane at ``x`` becomes the origin."""
    x = cfg.get("plane", "x", float, 0.0)
    return (translate(packet, -x) if x else packet), x


def _summary(dist):
    return {"integral": dist.total(), "mean": dist.mean(), "variance": dist.variance(),
            "peak_time": dist.peak_time(), "min": float(dist.values.min())}


# -- subcommands -----------------------------------------------------------------------

def cmd_kijowski1d(args, units):
    from .freearrival import kijowski_1d
    cfg = _need_config(args)
    packet = parse_packet(cfg)
    shifted, x = _plane_shift(cfg, packet)
    t = _arrival_times(args, cfg, shifted, units)
    dist = kijowski_1d(shifted, t, units)
    dist.to_csv(args.out, {"subcommand": "kijowski1d", "plane_x": x})
    return cfg, [args.out], _summary(dist), None


def _transverse_factor(sigma, n):
    q = np.linspace(-6 * sigma, 6 * sigma, n)
    dq = q[1] - q[0]
    qx, qy = np.meshgrid(q, q, indexing="ij")
    chi = np.exp(-(qx**2 + qy**2) / (4 * sigma**2))
    w = np.full(chi.size, dq * dq)
    chi = chi.ravel() / np.sqrt(np.sum(w * chi.ravel() ** 2))
    return np.column_stack([qx.ravel(), qy.ravel()]), w, chi


def cmd_kijowski_plane(args, units):
    from .freearrival import PlanePacket3D, kijowski_plane_3d
    cfg = _need_config(args)
    packet = parse_packet(cfg)
    a = cfg.get("plane", "x", float, 0.0)
    sig = cfg.positive("transverse", "sigma_k", float, 1.0)
    n = cfg.positive("transverse", "n", int, 21)
    tk, tw, chi = _transverse_factor(sig, n)
    pp = PlanePacket3D.from_factors(packet, chi, tk, tw)
    t = _arrival_times(args, cfg, translate(packet, -a), units)
    dist = kijowski_plane_3d(pp, t, a, units)
    dist.to_csv(args.out, {"subcommand": "kijowski-plane", "plane_x": a})
    return cfg, [args.out], _summary(dist), None


def cmd_current_compare(args, units):
    from .freearrival import comparison_table
    cfg = _need_config(args)
    packet = parse_packet(cfg)
    x = cfg.get("plane", "x", float, 0.0)
    t = _arrival_times(args, cfg, translate(packet, -x), units)
    tab = comparison_table(packet, t, x, units)
    write_csv(args.out, ["t", "pi_kijowski", "j_current"], tab, {"subcommand": "current-compare", "plane_x": x})
    res = {"min_j": float(tab[:, 2].min()), "min_pi_kijowski": float(tab[:, 1].min()),
           "t_at_min_j": float(tab[np.argmin(tab[:, 2]), 0]), "backflow": bool(tab[:, 2].min() < 0),
           "integral_pi_kijowski": float(np.trapezoid(tab[:, 1], tab[:, 0])),
           "integral_j_current": float(np.trapezoid(tab[:, 2], tab[:, 0]))}
    return cfg, [args.out], res, None


def cmd_clock_scatter(args, units):
    from .kernelcore import auto_window, time_distribution
    from .scatter1d import (clock_kernel_scattering, delta_potential_amplitudes, sign_flips,
                            square_well_amplitudes)
    cfg = _need_config(args)
    packet = parse_packet(cfg)
    if not packet.grid.is_symmetric:
        raise ConfigError(f"{cfg.where('grid')}: clock-scatter needs a symmetric grid (kmin = -kmax)")
    kind = cfg.choice("potential", "kind", {"delta", "square", "free"})
    if kind == "delta":
        amps = delta_potential_amplitudes(cfg.get("potential", "strength"), packet.grid, units)
    elif kind == "square":
        amps = square_well_amplitudes(cfg.get("potential", "V0"), cfg.positive("potential", "a"), packet.grid, units)
    else:
        from .scatter1d import free_amplitudes
        amps = free_amplitudes(packet.grid)
    b = clock_kernel_scattering(amps, packet.grid, units)
    phi = to_energy_channels(packet, units)
    t = parse_times(args.times, cfg)
    if t is None:
        t = auto_window(b, phi, "clock", units)
    dist = time_distribution(b, phi, t, "clock", units)
    dist.to_csv(args.out, {"subcommand": "clock-scatter", "potential": kind})
    res = _summary(dist)
    res["unitarity_defect"] = amps.unitarity_defect()
    res["sign_flips"] = [list(f) for f in sign_flips(amps)]
    return cfg, [args.out], res, None


def cmd_partialwave(args, units):
    from .kernelcore import auto_window
    from .partialwave3d import (PhaseShiftTable, clock_distribution_3d, induced_basis, partial_wave_packet,
                                spherical_well_phase_shifts)
    cfg = _need_config(args)
    grid = parse_grid(cfg)
    if not grid.is_positive:
        raise ConfigError(f"{cfg.where('grid', 'kmin')}: partial waves need kmin >= 0")
    comps = {}
    for s in cfg.sections("channel"):
        parts = s.split(".")
        try:
            l, m = int(parts[1]), int(parts[2])
        except (IndexError, ValueError):
            raise ConfigError(f"{cfg.where(s)}: channel sections are named [channel.l.m]") from None
        comps[(l, m)] = (cfg.get(s, "k0"), cfg.positive(s, "sigma_k"), cfg.get(s, "r0", float, 0.0),
                         cfg.get(s, "weight", float, 1.0))
    if not comps:
        raise ConfigError(f"{cfg.path}: need at least one [channel.l.m] section")
    try:
        state = partial_wave_packet(grid, comps)
    except ValueError as e:
        raise ConfigError(f"{cfg.where(cfg.sections('channel')[0])}: {e}") from None
    l_need = max(l for l, _ in state.channels)
    l_max = cfg.get("potential", "l_max", int, max(l_need, 8))
    if l_max < l_need:
        raise ConfigError(f"{cfg.where('potential', 'l_max')}: l_max = {l_max} below the largest channel l = {l_need}")
    V0 = cfg.get("potential", "V0", float, 0.0)
    shifts = (spherical_well_phase_shifts(V0, cfg.positive("potential", "a"), l_max, grid, units) if V0
              else PhaseShiftTable.zero(grid.k_values, l_max))
    t = parse_times(args.times, cfg)
    if t is None:
        t = auto_window(induced_basis(state, shifts, units), state.to_energy_channels(units), "clock", units)
    dist = clock_distribution_3d(state, shifts, t, units)
    dist.to_csv(args.out, {"subcommand": "partialwave", "V0": V0})
    out = [args.out]
    if args.out:
        pth = Path(args.out).with_suffix(".phaseshifts.csv")
        shifts.to_csv(pth)
        out.append(str(pth))
    return cfg, out, _summary(dist), None


def cmd_conditional(args, units):
    from .conditional import (arrival_distribution_raw, conditional_distribution, propagate_with_absorber)
    cfg = _need_config(args)
    setup = parse_conditional(cfg)
    packet = parse_packet(cfg)
    run = propagate_with_absorber(packet, setup.space, setup.potential, setup.absorber, setup.dt, setup.steps, units)
    raw = arrival_distribution_raw(run)
    order = slice(None, None, -1) if setup.dt < 0 else slice(None)
    data = np.column_stack([raw.t_values, run.norm[1:][order], raw.values])
    write_csv(args.out, ["t", "norm", "rate"], data,
              {"subcommand": "conditional", "norm": "after the step centred at t"})
    N = raw.total()
    res = {"initial_norm": float(run.norm[0]), "absorbed": run.absorbed, "surviving": float(run.norm[-1]),
           "bookkeeping_defect": float(run.norm[0] - run.absorbed - run.norm[-1]), "total_arrival": N}
    try:
        pc = conditional_distribution(raw)
        res.update(conditional_mean=pc.mean(), conditional_variance=pc.variance())
    except Exception as e:  # noqa: BLE001 -- reported, not fatal: the raw rate is still valid
        res["conditional"] = str(e)
    return cfg, [args.out], res, None


def cmd_opnorm(args, units):
    from .conditional import (arrival_distribution_raw, conditional_distribution, gram_operator, gram_to_csv,
                              operator_normalized_distribution, operator_normalized_kernel, propagate_with_absorber)
    from .freearrival import kijowski_1d
    cfg = _need_config(args)
    setup = parse_conditional(cfg)
    grid = parse_grid(cfg)
    basis = []
    for s in cfg.sections("basis"):
        try:
            basis.append(superposition(grid, parse_components_section(cfg, s)))
        except ValueError as e:
            raise ConfigError(f"{cfg.where(s)}: {e}") from None
    if not basis:
        raise ConfigError(f"{cfg.path}: need at least one [basis.N] section")
    c = np.array([cfg.get("coefficients", f"c{i}", complex, 1.0) for i in range(1, len(basis) + 1)])
    G = gram_operator(basis, setup.space, setup.potential, setup.absorber, setup.dt, setup.steps, units)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        on = operator_normalized_distribution(G, c)
        PiN, proj, rep = operator_normalized_kernel(G)
    psi = G.combine(c)
    run = propagate_with_absorber(psi, setup.space, setup.potential, setup.absorber, setup.dt, setup.steps, units)
    pc = conditional_distribution(arrival_distribution_raw(run))
    # ideal free arrival at the detector centre, for the same state re-expressed in momentum space
    k = grid.k_values
    x = setup.space.x_values
    amps = np.exp(-1j * np.outer(k, x)) @ psi * setup.space.dx / np.sqrt(2 * np.pi)
    free_pkt = translate(WavePacket(grid, amps).normalize(), -setup.absorber.center)
    kij = kijowski_1d(free_pkt, pc.t_values, units)
    data = np.column_stack([on.t_values, on.values, pc.values, kij.values])
    write_csv(args.out, ["t", "pi_opnorm", "pi_conditional", "pi_kijowski"], data, {"subcommand": "opnorm"})
    gpath = Path(args.out).with_suffix(".gram.csv")
    gram_to_csv(G, gpath)
    scale = max(np.max(np.abs(pc.values)), 1e-300)
    res = {"gram_eigenvalues": G.eigenvalues().tolist(), "retained": rep.retained,
           "dropped_eigenvalues": list(rep.dropped_eigenvalues),
           "c5_max_rel_defect": float(np.max(np.abs(on.values - pc.values)) / scale),
           "integral_opnorm_minus_projector": float(np.max(np.abs(PiN.sum(axis=0) * abs(G.dt) - proj))),
           "mean_conditional": pc.mean(), "variance_conditional": pc.variance(),
           "kijowski_norm_in_window": kij.total(), "mean_kijowski": kij.mean(), "variance_kijowski": kij.variance(),
           "warnings": [str(w.message) for w in caught]}
    return cfg, [args.out, str(gpath)], res, None


def parse_components_section(cfg, section):
    wt = cfg.get(section, "weight", float, 1.0) * np.exp(1j * cfg.get(section, "phase", float, 0.0))
    from .state import GaussianComponent
    return [GaussianComponent(cfg.get(section, "k0"), cfg.positive(section, "sigma_k"),
                              cfg.get(section, "x0", float, 0.0), wt)]


def cmd_schmidt_demo(args, units):
    from .kernelcore import KernelBasis, kernel_matrix, schmidt_basis, time_distribution
    from .state import gaussian_packet
    cfg = RunConfig.load(args.config) if args.config else RunConfig.empty()
    n_e = cfg.positive("schmidt", "n_e", int, 64)
    rank = cfg.positive("schmidt", "rank", int, 8)
    seed = args.seed if args.seed is not None else cfg.get("schmidt", "seed", int, 0)
    kmax = cfg.positive("schmidt", "kmax", float, 4.0)
    grid = MomentumGrid.symmetric(kmax, 2 * n_e)
    phi = to_energy_channels(gaussian_packet(grid, 0.5 * kmax, kmax / 16, -4.0), units)
    rng = np.random.default_rng(seed)
    f = rng.normal(size=(rank, n_e, 2)) + 1j * rng.normal(size=(rank, n_e, 2))
    b0 = KernelBasis(phi.E_values, phi.weights, phi.channels, f / np.sqrt(rank))
    K = kernel_matrix(b0, units)
    bs = schmidt_basis(K, units)
    Q, _ = np.linalg.qr(rng.normal(size=(rank, rank)) + 1j * rng.normal(size=(rank, rank)))
    br = KernelBasis(phi.E_values, phi.weights, phi.channels, np.einsum("ij,jea->iea", Q, b0.functions))
    t = parse_times(args.times, cfg)
    if t is None:
        t = time_grid(-5.0, 15.0, 401)
    d0, ds, dr = (time_distribution(b, phi, t, "clock", units, validate=False) for b in (b0, bs, br))
    write_csv(args.out, ["t", "pi_original", "pi_schmidt", "pi_rotated"],
              np.column_stack([t, d0.values, ds.values, dr.values]), {"subcommand": "schmidt-demo", "seed": seed})
    recon = kernel_matrix(bs, units).matrix
    scale = np.max(np.abs(K.matrix))
    sup = max(np.max(np.abs(d0.values)), 1e-300)
    res = {"rank": bs.size, "reconstruction_rel_error": float(np.max(np.abs(recon - K.matrix)) / scale),
           "schmidt_vs_original_rel": float(np.max(np.abs(ds.values - d0.values)) / sup),
           "rotated_vs_original_rel": float(np.max(np.abs(dr.values - d0.values)) / sup)}
    return cfg, [args.out], res, seed


def cmd_backflow_scan(args, units):
    from .freearrival import backflow_scan, current_at_plane, kijowski_1d
    cfg = RunConfig.load(args.config) if args.config else RunConfig.empty()
    k1 = cfg.positive("scan", "k1", float, 1.5)
    k2 = cfg.positive("scan", "k2", float, 4.0)
    sig = cfg.positive("scan", "sigma_k", float, 0.2)
    kmax = cfg.positive("scan", "kmax", float, 8.0)
    n = cfg.positive("scan", "n", int, 1600)
    ratios = np.linspace(cfg.positive("scan", "ratio_min", float, 0.3), cfg.positive("scan", "ratio_max", float, 1.5),
                         cfg.positive("scan", "n_ratio", int, 5))
    phases = np.linspace(0, 2 * np.pi, cfg.positive("scan", "n_phase", int, 8), endpoint=False)
    t = parse_times(args.times, cfg)
    if t is None:
        t = time_grid(-2.0, 2.0, 201)
    grid = MomentumGrid.uniform(0.0, kmax, n)
    scan = backflow_scan(grid, k1, k2, sig, ratios, phases, t, 0.0, 0.0, units)
    best = scan.best
    comps = scan.components()
    write_packet_config(args.out, {"kmin": 0.0, "kmax": kmax, "n": n}, comps, positive_only=True,
                        extra={"times": {"tmin": t[0], "tmax": t[-1], "n": t.size}},
                        header=f"backflow fixture from backflow-scan (tempus {__version__})\n"
                               f"min current {float(best[2])!r} at t = {float(best[3])!r}")
    table = Path(args.out).with_suffix(".scan.csv")
    write_csv(table, ["ratio", "phase", "min_j", "t_min"], scan.table, {"subcommand": "backflow-scan"})
    p = superposition(grid, comps, positive_only=True)
    res = {"ratio": float(best[0]), "phase": float(best[1]), "min_j": float(best[2]), "t_min": float(best[3]),
           "min_pi_kijowski": float(kijowski_1d(p, t, units).values.min()),
           "check_min_j": float(current_at_plane(p, t, 0.0, units).min())}
    return cfg, [args.out, str(table)], res, None


COMMANDS = {
    "kijowski1d": (cmd_kijowski1d, "free arrival distribution at a plane (1D)"),
    "kijowski-plane": (cmd_kijowski_plane, "arrival at a plane for a factorized 3D packet"),
    "current-compare": (cmd_current_compare, "Kijowski distribution next to the probability current"),
    "clock-scatter": (cmd_clock_scatter, "minimal-variance clock distribution for a 1D scatterer"),
    "partialwave": (cmd_partialwave, "rotation-invariant clock distribution for a spherical well"),
    "conditional": (cmd_conditional, "absorbing-potential detection run: t, norm, rate"),
    "opnorm": (cmd_opnorm, "Gram operator and operator-normalized distribution on a packet basis"),
    "schmidt-demo": (cmd_schmidt_demo, "random kernel: Schmidt reconstruction and decomposition independence"),
    "backflow-scan": (cmd_backflow_scan, "search two-Gaussian states for current backflow; writes a fixture"),
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI run config")
    common.add_argument("--out", help="output path (CSV; config for backflow-scan)")
    common.add_argument("--times", help="time grid tmin:tmax:n; write --times=-5:5:n when tmin < 0 (default: automatic window)")
    common.add_argument("--units", help="override units, e.g. hbar=1,mass=2")
    common.add_argument("--threads", type=int, help="worker threads (fallback: TEMPUS_THREADS)")
    common.add_argument("--seed", type=int, help="RNG seed for tools that sample")
    p = argparse.ArgumentParser(prog="tempus", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"tempus {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="subcommand")
    for name, (_, help_) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_, description=help_)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.threads is not None:
        if args.threads < 1:
            print("tempus: error: --threads must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        os.environ["TEMPUS_THREADS"] = str(args.threads)
    if not args.out:
        args.out = f"{args.command}.cfg" if args.command == "backflow-scan" else f"{args.command}.csv"
    func = COMMANDS[args.command][0]
    try:
        base = RunConfig.load(args.config) if args.config else RunConfig.empty()
        units = parse_units(base, args.units)
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        cfg, outputs, results, seed = func(args, units)
    except ConfigError as e:
        print(f"tempus {args.command}: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except _numeric_errors() as e:
        print(f"tempus {args.command}: numerical policy violation: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"tempus {args.command}: config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    man = write_manifest(args.out, args.command, cfg, outputs, results, seed,
                         {"hbar": units.hbar, "mass": units.mass, "threads": os.environ.get("TEMPUS_THREADS")})
    print(json.dumps({"outputs": outputs + [str(man)], **{k: v for k, v in results.items() if np.isscalar(v)}},
                     default=float))
    return EXIT_OK


def main(argv=None) -> int:
    return run(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
