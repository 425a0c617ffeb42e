"""Command line entry points.

Subcommands: gs, gap, quench, lightcone, heatwave, collapse, oracle-check.
Each writes CSV tables, rendered figures and a manifest into its run
directory.  Exit codes: 0 success, 2 configuration error, 3 convergence
or check failure, 4 resource cap exceeded.
"""

import argparse
import json
import os
import sys
import time

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CONVERGENCE = 3
EXIT_RESOURCE = 4


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stquench",
        description="Spatiotemporal quenches of the 2D transverse-field "
                    "Ising model on cylinders")
    parser.add_argument("--threads", type=int, default=None,
                        help="pin BLAS/OpenMP thread count (deterministic runs)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("-c", "--config", required=True, help="run config file")
        p.add_argument("-s", "--set", action="append", default=[],
                       metavar="KEY=VALUE", help="override a config key")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--force", action="store_true",
                       help="ignore the memory-cap estimate")

    common(sub.add_parser("gs", help="ground state of the configured model"))
    common(sub.add_parser("gap", help="ground and first excited energies"))
    q = sub.add_parser("quench", help="spatiotemporal quench run")
    common(q)
    q.add_argument("--oracle", action="store_true",
                   help="also run the dense oracle and report deviations")
    q.add_argument("--resume", action="store_true",
                   help="continue from the checkpoint in the output directory")
    common(sub.add_parser("lightcone", help="perturbation light cone and speed fit"))
    common(sub.add_parser("heatwave", help="analytic Doppler cooling curves"))
    col = sub.add_parser("collapse", help="finite-size scaling collapses")
    common(col)
    col.add_argument("--data", nargs="+", required=True,
                     help="run directories holding the input tables")
    common(sub.add_parser("oracle-check", help="exact-diagonalization cross-checks"))
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    handler = {
        "gs": cmd_gs,
        "gap": cmd_gap,
        "quench": cmd_quench,
        "lightcone": cmd_lightcone,
        "heatwave": cmd_heatwave,
        "collapse": cmd_collapse,
        "oracle-check": cmd_oracle_check,
    }[args.command]
    from .config import ConfigError
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # pragma: no cover - crash reporting
        print(f"error: {exc}", file=sys.stderr)
        raise


def _setup(args, default_name, needs_mps=True):
    """Load config, apply overrides, resolve output dir, check resources."""
    from .config import RunConfig, check_resources
    cfg = RunConfig.from_file(args.config, overrides=args.set)
    out = args.out or cfg.output_dir(default_name)
    if not needs_mps:
        return cfg, out, True
    projected, cap = check_resources(cfg)
    if projected > cap and not args.force:
        print(f"projected memory {projected:.0f} MiB exceeds the configured "
              f"cap {cap:.0f} MiB; rerun with --force or raise "
              "resources.memoryCapMb", file=sys.stderr)
        return cfg, out, False
    if projected > cap:
        print(f"warning: projected memory {projected:.0f} MiB over cap; "
              "forced", file=sys.stderr)
    return cfg, out, True


def _write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def cmd_gs(args):
    import numpy as np
    from . import figures, store
    from .config import to_dmrg_settings
    from .dmrg import ground_state, spectral_bandwidth
    from .driver import ObservableSeries, measure_correlation_row
    from .lattice import TfiMpoTemplate, static_field_grid

    started = time.time()
    cfg, out, ok = _setup(args, "gs")
    if not ok:
        return EXIT_RESOURCE
    lattice = cfg.lattice()
    settings = to_dmrg_settings(cfg)
    rng = np.random.default_rng(cfg.get("seed"))
    mpo = TfiMpoTemplate(lattice, cfg.get("model.J")).with_fields(
        static_field_grid(lattice, cfg.gc()))
    psi, e0, info = ground_state(mpo, settings, rng=rng)

    with store.RunDirectory(out) as run:
        store.write_csv(run.file("dmrg_convergence.csv"),
                        ("sweep", "E", "maxTruncErr", "maxChi"),
                        [(s["sweep"], s["energy"], s["max_trunc_err"],
                          s["max_chi"]) for s in info["sweep_stats"]])
        series = ObservableSeries()
        for cut, pos in zip(lattice.column_cuts(),
                            [lattice.bond_x_position(i)
                             for i in range(lattice.lx - 1)]):
            series.entropy.append((0.0, pos, psi.entanglement_entropy(cut)))
        for r, c in sorted(measure_correlation_row(psi, lattice).items()):
            series.correlations.append((0.0, r, c))
        store.write_series(run, series)
        psi.save(run.file("gs.mps"))
        summary = {"E0": e0, "converged": info["converged"],
                   "sweeps": info["sweeps"], "max_chi": psi.max_bond_dim,
                   "g": cfg.gc(), "Lx": lattice.lx, "Ly": lattice.ly}
        _write_json(run.file("summary.json"), summary)
        figures.plot_dmrg_convergence(info["sweep_stats"],
                                      run.file("convergence.png"))
        if series.correlations:
            figures.plot_correlations(series.correlations,
                                      run.file("correlations.png"))
        store.write_manifest(run, "gs", cfg.resolved_dict(),
                             extra={"summary": summary}, started=started)
    print(f"E0 = {e0:.12g}  (sweeps: {info['sweeps']}, "
          f"converged: {info['converged']})")
    return EXIT_OK if info["converged"] else EXIT_CONVERGENCE


def cmd_gap(args):
    import numpy as np
    from . import figures, store
    from .config import to_dmrg_settings
    from .dmrg import energy_gap
    from .lattice import TfiMpoTemplate, static_field_grid

    started = time.time()
    cfg, out, ok = _setup(args, "gap")
    if not ok:
        return EXIT_RESOURCE
    lattice = cfg.lattice()
    settings = to_dmrg_settings(cfg)
    rng = np.random.default_rng(cfg.get("seed"))
    g_values = cfg.get("sweep.gValues") or (cfg.gc(),)
    template = TfiMpoTemplate(lattice, cfg.get("model.J"))
    rows = []
    all_converged = True
    for g in g_values:
        mpo = template.with_fields(static_field_grid(lattice, g))
        _, _, e0, e1, gap, info = energy_gap(mpo, settings, rng=rng)
        rows.append((lattice.ly, g, e0, e1, gap, float(info["degenerate"])))
        all_converged &= (info["ground"]["converged"]
                          and info["excited"]["converged"])
        print(f"g = {g:.6g}: E0 = {e0:.10g}, E1 = {e1:.10g}, gap = {gap:.6g}")
    with store.RunDirectory(out) as run:
        store.write_csv(run.file("gap.csv"),
                        ("Ly", "g", "E0", "E1", "gap", "degenerate"), rows)
        figures.plot_gap_curve(rows, run.file("gap_vs_g.png"))
        store.write_manifest(run, "gap", cfg.resolved_dict(), started=started)
    return EXIT_OK if all_converged else EXIT_CONVERGENCE


def cmd_quench(args):
    import numpy as np
    from . import figures, store
    from .config import to_dmrg_settings, to_protocol, to_tdvp_settings
    from .dmrg import InstantaneousGroundStates
    from .driver import compare_series, oracle_quench, run_quench
    from .oracle import N_CAP

    started = time.time()
    cfg, out, ok = _setup(args, "quench")
    if not ok:
        return EXIT_RESOURCE
    protocol = to_protocol(cfg)
    dmrg_settings = to_dmrg_settings(cfg)
    tdvp_settings = to_tdvp_settings(cfg)
    rng = np.random.default_rng(cfg.get("seed"))
    cache = InstantaneousGroundStates(protocol.lattice, protocol.params,
                                      dmrg_settings, uniform=protocol.uniform,
                                      rng=rng)
    every = cfg.get("schedule.checkpointEvery")

    with store.RunDirectory(out) as run:
        initial_state = cursor = None
        if args.resume:
            psi0, cursor = store.load_checkpoint(run)
            initial_state = psi0
            print(f"resuming from step {cursor['step']} (t = {cursor['t']:.4g})")

        def checkpoint_cb(psi_t, t, step):
            store.save_checkpoint(run, psi_t, step, t)

        series, psi, info = run_quench(
            protocol, dmrg_settings, tdvp_settings, rng=rng, ground_cache=cache,
            initial_state=initial_state, checkpoint=cursor,
            checkpoint_cb=checkpoint_cb if every else None,
            checkpoint_every=every)

        if args.resume:
            prior = store.read_series(run)
            for name in ("energy", "local_energy", "correlations", "entropy",
                         "truncation"):
                merged = getattr(prior, name) + getattr(series, name)
                setattr(series, name, merged)
        store.write_series(run, series)
        psi.save(run.file("final.mps"))
        store.save_checkpoint(run, psi, info["n_steps"], info["t_end"])

        if series.energy:
            figures.plot_energy_series(series.energy, run.file("energy.png"))
        if series.local_energy:
            figures.plot_local_energy(series.local_energy,
                                      run.file("local_energy.png"))
        if series.entropy:
            times, bonds, mat = series.entropy_map()
            figures.plot_entropy_map(times, bonds, mat,
                                     run.file("entropy_map.png"))
        if series.correlations:
            figures.plot_correlations(series.correlations,
                                      run.file("correlations.png"))

        extra = {"tq": info["tq"], "t_end": info["t_end"],
                 "n_steps": info["n_steps"],
                 "max_chi": int(max(info["evolution"]["max_chi"], default=0))}
        if args.oracle:
            if protocol.lattice.n_sites > N_CAP:
                print(f"--oracle needs at most {N_CAP} sites", file=sys.stderr)
                return EXIT_CONFIG
            oracle_series, _, _ = oracle_quench(protocol, ground_cache=cache)
            store.write_series(run, oracle_series, source="oracle",
                               prefix="oracle_")
            devs = compare_series(series, oracle_series)
            _write_json(run.file("deviation_report.json"), devs)
            extra["oracle_deviation"] = devs
            print("oracle deviations:",
                  {k: f"{v:.3e}" for k, v in devs.items()})
        store.write_manifest(run, "quench", cfg.resolved_dict(), extra=extra,
                             started=started)
    eps_final = series.energy[-1][3] if series.energy else float("nan")
    print(f"done: t_end = {info['t_end']:.4g}, eps(t_end) = {eps_final:.6g}")
    return EXIT_OK


def cmd_lightcone(args):
    import numpy as np
    from . import figures, store
    from .config import to_dmrg_settings, to_tdvp_settings
    from .driver import light_cone_experiment

    started = time.time()
    cfg, out, ok = _setup(args, "lightcone")
    if not ok:
        return EXIT_RESOURCE
    lattice = cfg.lattice()
    site = cfg.get("lightcone.site")
    perturb = None
    if site != "auto":
        col, row = (int(x) for x in site.split(","))
        perturb = (col, row)
    threshold = cfg.get("lightcone.threshold")
    rng = np.random.default_rng(cfg.get("seed"))
    result = light_cone_experiment(
        lattice, cfg.gc(), to_dmrg_settings(cfg), to_tdvp_settings(cfg),
        perturb_site=perturb, kick=cfg.get("lightcone.kick"),
        t_end=cfg.get("lightcone.tEnd"), rng=rng,
        threshold=None if threshold == "auto" else threshold)

    with store.RunDirectory(out) as run:
        rows = [(t, x, result.entropy[i, j])
                for i, t in enumerate(result.times)
                for j, x in enumerate(result.bond_positions)]
        store.write_csv(run.file("entropy.csv"), ("t", "xbond", "svn"), rows)
        summary = {"ground_energy": result.ground_energy,
                   "threshold": result.threshold}
        if result.fit is not None:
            summary.update({"c": result.fit.velocity,
                            "c_uncertainty": result.fit.uncertainty})
            print(f"c = {result.fit.velocity:.4f} "
                  f"± {result.fit.uncertainty:.4f}")
        _write_json(run.file("summary.json"), summary)
        figures.plot_entropy_map(result.times, result.bond_positions,
                                 result.entropy, run.file("lightcone.png"),
                                 fit=result.fit)
        store.write_manifest(run, "lightcone", cfg.resolved_dict(),
                             extra={"summary": summary}, started=started)
    return EXIT_OK if result.fit is not None else EXIT_CONVERGENCE


def cmd_heatwave(args):
    import numpy as np
    from . import figures, store
    from .heatwave import (HeatwaveParams, spatial_energy_profile,
                           total_energy_vs_velocity)

    started = time.time()
    cfg, out, ok = _setup(args, "heatwave", needs_mps=False)
    if not ok:
        return EXIT_RESOURCE
    lattice = cfg.lattice()
    c = cfg.get("heatwave.c")
    base = HeatwaveParams(c=c, v=2 * c, m=cfg.get("heatwave.m"),
                          tau=cfg.get("heatwave.tau"))
    n_grid = cfg.get("heatwave.grid")
    factors = cfg.get("heatwave.vFactors")
    half = lattice.lx / 2.0

    with store.RunDirectory(out) as run:
        profiles, labels = [], []
        x_centers = None
        rows = []
        for f in factors:
            params = HeatwaveParams(c=c, v=f * c, m=base.m, tau=base.tau)
            tq = half / params.v
            edges = np.linspace(-half, half, n_grid + 1)
            x, prof = spatial_energy_profile(edges, tq, params,
                                             plateau_reference=1.0)
            x_centers = x
            profiles.append(prof)
            labels.append(f"v = {f:g} c")
            rows.extend((tq, xi, 0.0, pi) for xi, pi in zip(x, prof))
        store.write_csv(run.file("local_energy.csv"),
                        ("t", "x", "y", "eps_xy"), rows, source="theory")

        velocities = np.array([f * c for f in factors] + [np.inf])
        full = total_energy_vs_velocity(velocities, base, lattice.lx)
        central = total_energy_vs_velocity(velocities, base, lattice.lx,
                                           region=(-lattice.ly, lattice.ly))
        store.write_csv(run.file("velocity_curve.csv"),
                        ("v", "eps_full", "eps_central"),
                        [(v if np.isfinite(v) else float("inf"), a, b)
                         for v, a, b in zip(velocities, full, central)],
                        source="theory")
        figures.plot_theory_profile(x_centers, profiles,
                                    run.file("theory_profile.png"),
                                    labels=labels)
        figures.plot_velocity_curve(velocities, [full, central],
                                    run.file("velocity_curve.png"),
                                    labels=["full system", "central region"])
        store.write_manifest(run, "heatwave", cfg.resolved_dict(),
                             started=started)
    print(f"wrote theory curves for v/c in {list(factors)} (+ uniform limit)")
    return EXIT_OK


def cmd_collapse(args):
    import numpy as np
    from . import figures, store
    from .analysis import (CRITICAL, correlation_collapse, gap_collapse,
                           pseudo_critical_field)

    started = time.time()
    cfg, out, ok = _setup(args, "collapse", needs_mps=False)
    if not ok:
        return EXIT_RESOURCE
    kind = cfg.get("collapse.kind")
    with store.RunDirectory(out) as run:
        if kind == "gap":
            dataset = {}
            for d in args.data:
                _, rows, _ = store.read_csv(os.path.join(d, "gap.csv"))
                for ly, g, e0, e1, gap, _deg in rows:
                    dataset.setdefault(int(ly), []).append((g, gap))
            data = [(ly, np.array([p[0] for p in pts]),
                     np.array([p[1] for p in pts]))
                    for ly, pts in sorted(dataset.items())]
            res = gap_collapse(data, CRITICAL.gc_inf, CRITICAL.nu, CRITICAL.z,
                               fit=cfg.get("collapse.fit"))
            rows = [(ly, x, y) for (ly, *_), (xs, ys) in zip(data, res.curves)
                    for x, y in zip(xs, ys)]
            store.write_csv(run.file("collapse_gap.csv"),
                            ("Ly", "x_rescaled", "gap_rescaled"), rows)
            summary = {"kind": kind, "residual": res.residual, "gc": res.gc,
                       "nu": res.nu, "fitted": res.fitted}
            figures.plot_collapse(res.curves, run.file("collapse.png"),
                                  xlabel="$(g - g_c)\\,L_y^{1/\\nu}$",
                                  ylabel="$\\mathrm{gap}\\cdot L_y^{z}$",
                                  labels=[f"Ly={ly}" for ly, *_ in data],
                                  residual=res.residual)
        elif kind == "corr":
            data = []
            for d in args.data:
                man = store.read_manifest(d)
                ly = int(man["config"]["geometry.Ly"])
                _, rows, _ = store.read_csv(os.path.join(d, "correlations.csv"))
                t_last = max(r[0] for r in rows)
                pts = [(r, c) for t, r, c in rows if t == t_last]
                data.append((ly, np.array([p[0] for p in pts]),
                             np.array([p[1] for p in pts])))
            res = correlation_collapse(data, CRITICAL.two_delta)
            rows = [(ly, x, y) for (ly, *_), (xs, ys) in zip(data, res.curves)
                    for x, y in zip(xs, ys)]
            store.write_csv(run.file("collapse_corr.csv"),
                            ("Ly", "r_over_Ly", "cx_rescaled"), rows)
            summary = {"kind": kind, "residual": res.residual,
                       "two_delta": res.two_delta}
            figures.plot_collapse(res.curves, run.file("collapse.png"),
                                  xlabel="$r / L_y$",
                                  ylabel="$L_y^{2\\Delta} C_x$",
                                  labels=[f"Ly={ly}" for ly, *_ in data],
                                  residual=res.residual, logy=True)
        elif kind == "energy":
            c_by_ly = cfg.get("collapse.cByLy")
            rows = []
            for d in args.data:
                man = store.read_manifest(d)
                ly = int(man["config"]["geometry.Ly"])
                v = man["config"]["quench.v"]
                v = float("inf") if v == "inf" else float(v)
                tau = float(man["config"]["quench.tau"])
                _, erows, _ = store.read_csv(os.path.join(d, "energy.csv"))
                eps = [r[3] for r in erows if np.isfinite(r[3])]
                if not eps:
                    raise ValueError(f"{d}: no excitation energies recorded")
                eps_final = eps[-1]
                c_ly = c_by_ly.get(ly)
                if c_ly is None:
                    raise ValueError(f"collapse.cByLy has no entry for Ly={ly}")
                rows.append((ly, v, tau, v / c_ly, eps_final,
                             eps_final * ly ** (2 - CRITICAL.nu)))
            rows.sort()
            store.write_csv(run.file("collapse_energy.csv"),
                            ("Ly", "v", "tau", "v_over_c", "eps",
                             "eps_rescaled"), rows)
            curves, labels = [], []
            for ly in sorted({r[0] for r in rows}):
                pts = sorted((r[3], r[5]) for r in rows
                             if r[0] == ly and np.isfinite(r[3]))
                if pts:
                    curves.append((np.array([p[0] for p in pts]),
                                   np.array([p[1] for p in pts])))
                    labels.append(f"Ly={int(ly)}")
            summary = {"kind": kind, "points": len(rows)}
            if len(curves) >= 2:
                from .analysis import collapse_residual
                summary["residual"] = collapse_residual(curves)
            if curves:
                figures.plot_collapse(curves, run.file("collapse.png"),
                                      xlabel="$v / c(L_y)$",
                                      ylabel="$\\bar\\epsilon\\,"
                                             "L_y^{2-\\nu}$",
                                      labels=labels,
                                      residual=summary.get("residual"))
        else:
            print(f"unknown collapse.kind {kind!r}", file=sys.stderr)
            return EXIT_CONFIG
        _write_json(run.file("summary.json"), summary)
        store.write_manifest(run, "collapse", cfg.resolved_dict(),
                             extra={"summary": summary}, started=started)
    print(json.dumps(summary, indent=2, default=str))
    return EXIT_OK


def cmd_oracle_check(args):
    import numpy as np
    from . import store
    from .config import to_dmrg_settings, to_protocol, to_tdvp_settings
    from .dmrg import InstantaneousGroundStates, energy_gap
    from .driver import compare_series, oracle_quench, run_quench
    from .lattice import (TfiMpoTemplate, build_tfi_mpo,
                          evaluate_local_energies, local_energy_operators,
                          static_field_grid)
    from .mps import Mps
    from .oracle import N_CAP, FreeFermionChain, dense_spectrum
    from .oracle import independent_bonds

    started = time.time()
    cfg, out, ok = _setup(args, "oracle-check")
    if not ok:
        return EXIT_RESOURCE
    lattice = cfg.lattice()
    if lattice.n_sites > N_CAP:
        print(f"oracle-check needs at most {N_CAP} sites", file=sys.stderr)
        return EXIT_CONFIG
    rng = np.random.default_rng(cfg.get("seed"))
    settings = to_dmrg_settings(cfg)
    g = cfg.gc()
    checks = {}

    bonds_a = sorted(tuple(sorted((lattice.site(*a), lattice.site(*b))))
                     for a, b in lattice.bonds())
    bonds_b = independent_bonds(lattice.lx, lattice.ly, lattice.y_periodic)
    checks["bond_enumeration"] = {"pass": bonds_a == bonds_b}

    fields = static_field_grid(lattice, g)
    mpo = build_tfi_mpo(lattice, fields, cfg.get("model.J"))
    _, _, e0, e1, gap, info = energy_gap(mpo, settings, rng=rng)
    w, _ = dense_spectrum(lattice, fields, k=2, J=cfg.get("model.J"))
    e0_dev = abs(e0 - w[0]) / abs(w[0])
    gap_dev = abs(gap - (w[1] - w[0]))
    checks["ground_energy"] = {"dmrg": e0, "exact": w[0],
                               "rel_dev": e0_dev, "pass": e0_dev < 1e-8}
    checks["gap"] = {"dmrg": gap, "exact": w[1] - w[0],
                     "abs_dev": gap_dev, "pass": gap_dev < 1e-6}

    psi = Mps.random(lattice.n_sites, 8, rng)
    ops = local_energy_operators(lattice, fields, cfg.get("model.J"))
    total = sum(evaluate_local_energies(psi, ops).values())
    sum_dev = abs(total - float(np.real(psi.expectation(mpo))))
    checks["local_energy_sum_rule"] = {"abs_dev": sum_dev,
                                       "pass": sum_dev < 1e-10}

    if lattice.ly == 1:
        ff = FreeFermionChain(lattice.lx, g, cfg.get("model.J"))
        ff_dev = abs(ff.ground_energy - w[0]) / abs(w[0])
        checks["free_fermion_energy"] = {"rel_dev": ff_dev,
                                         "pass": ff_dev < 1e-10}

    if lattice.n_sites <= 12:
        protocol = to_protocol(cfg)
        cache = InstantaneousGroundStates(lattice, protocol.params, settings,
                                          uniform=protocol.uniform, rng=rng)
        tdvp_settings = to_tdvp_settings(cfg)
        series_m, _, _ = run_quench(protocol, settings, tdvp_settings,
                                    rng=rng, ground_cache=cache)
        series_o, _, _ = oracle_quench(protocol, ground_cache=cache)
        devs = compare_series(series_m, series_o)
        worst = max(v for v in devs.values() if np.isfinite(v))
        checks["quench_dynamics"] = {"deviations": devs,
                                     "max_dev": worst, "pass": worst < 1e-6}

    all_pass = all(c["pass"] for c in checks.values())
    with store.RunDirectory(out) as run:
        _write_json(run.file("oracle_check.json"),
                    {"checks": checks, "all_pass": all_pass})
        store.write_manifest(run, "oracle-check", cfg.resolved_dict(),
                             extra={"all_pass": all_pass}, started=started)
    for name, c in checks.items():
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {name}")
    return EXIT_OK if all_pass else EXIT_CONVERGENCE


if __name__ == "__main__":
    sys.exit(main())
