"""Command-line front end: ``cacc-safety {gains,campaign,validate}``."""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
import warnings
from pathlib import Path

from . import __version__
from . import config as C
from .dynamics import TrajectoryRecorder, simulate_run
from .errors import BudgetExceededError, ConfigError, DivergedRunError, InfeasibleGainsError
from .gains import headway_lower_bound, hinf_check, region_boundary, region_check, transfer_function
from .montecarlo import RESULT_COLUMNS, check_gains, compare_results, hoeffding_min_samples, run_campaign
from .oracle import enumerate_exact, mc_vs_oracle
from .stochastic import generate_matrix

log = logging.getLogger("cacc_safety")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_DIVERGED = 4
EXIT_VALIDATION = 5


def fmt(x) -> str:
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    return format(float(x), ".6g")


def write_table(path: Path, header, rows, delimiter=",") -> None:
    with open(path, "w", newline="") as fh:
        fh.write(delimiter.join(header) + "\n")
        for row in rows:
            fh.write(delimiter.join(fmt(v) for v in row) + "\n")


def write_manifest(out_dir: Path, command: str, cfg: dict, outputs: list) -> Path:
    path = out_dir / f"manifest_{command}.json"
    manifest = {
        "command": command,
        "tool_version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "seed": cfg["mc"]["seed"],
        "config": cfg,
        "outputs": sorted(str(Path(p).relative_to(out_dir)) for p in outputs),
    }
    path.write_text(json.dumps(manifest, indent=2) + "\n")
    return path


# ---------------------------------------------------------------------------


def resolve(args) -> dict:
    cfg = C.load(args.config) if args.config else C.merge(None)
    if args.seed is not None:
        cfg["mc"]["seed"] = args.seed
    if args.iterations is not None:
        if args.command == "validate":
            cfg["validate"]["n"] = args.iterations
        else:
            cfg["mc"]["n"] = args.iterations
    if args.mode is not None:
        cfg["scenario"]["mode"] = args.mode
    if args.threads is not None:
        cfg["mc"]["threads"] = args.threads
    if args.output is not None:
        cfg["output"]["dir"] = args.output
    if args.allow_infeasible_gains:
        cfg["mc"]["allow_infeasible_gains"] = True
    if args.dump_trajectories:
        cfg["output"]["dump_trajectories"] = True
    for spec in args.sweep or []:
        C.apply_sweep(cfg, spec)
    if cfg["mc"]["seed"] < 0 or cfg["mc"]["seed"] >= 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if cfg["mc"]["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    return cfg


def _out_dir(cfg) -> Path:
    out = Path(cfg["output"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gains(cfg: dict) -> int:
    g = cfg["gains"]
    tau0, tau = float(cfg["scenario"]["tau0"]), float(cfg["scenario"]["tau"])
    waiver = cfg["mc"]["allow_infeasible_gains"]
    out = _out_dir(cfg)
    outputs, status = [], EXIT_OK
    print(f"gains ka={g['ka']} kv={g['kv']} kp={g['kp']} hw={g['hw']} tau0={tau0}")
    for r in [int(x) for x in C._as_list(cfg["region"]["r"])]:
        gs = C.build_gains(cfg, r)
        try:
            bound = headway_lower_bound(tau0, gs.ka, r)
        except InfeasibleGainsError as exc:
            print(f"r={r}: no admissible region: {exc}")
            status = EXIT_INFEASIBLE
            continue
        boundary = region_boundary(gs.ka, r, gs.hw, tau0, int(cfg["region"]["samples"]))
        if boundary.empty:
            print(f"r={r}: {boundary.diagnostic}")
            status = EXIT_INFEASIBLE
            continue
        path = out / f"region_r{r}.txt"
        with open(path, "w") as fh:
            fh.write("# kv kp\n")
            for kv, kp in boundary.points:
                fh.write(f"{kv:.12g} {kp:.12g}\n")
        outputs.append(path)
        rep = region_check(gs, tau0)
        hinf = hinf_check(transfer_function(gs, tau), r, omega_max=max(1e4, 100 / gs.hw))
        mark = "feasible" if rep.feasible else "INFEASIBLE"
        print(
            f"r={r}: hw bound {bound:.6g} s; (kv, kp)=({gs.kv}, {gs.kp}) {mark} "
            f"margin1={rep.margin1:.6g} margin2={rep.margin2:.6g}; "
            f"max|rH(jw)|={hinf.max_gain:.6g} at w={hinf.arg_omega:.4g} rad/s -> {path.name}"
        )
        if not rep.feasible:
            if waiver:
                print(f"warning: gains infeasible for r={r} (waived by --allow-infeasible-gains)")
            elif status == EXIT_OK:
                status = EXIT_INFEASIBLE
    write_manifest(out, "gains", cfg, outputs)
    return status


def cmd_campaign(cfg: dict, explicit_variants=None) -> int:
    dist = C.build_distribution(cfg)
    pairs = C.variants(cfg, explicit_variants)
    camps = [C.build_campaign(cfg, r, d, dist) for r, d in pairs]
    for camp in camps:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            check_gains(camp)
        for w in caught:
            print(f"warning: {w.message}", file=sys.stderr)

    threads = int(cfg["mc"]["threads"])
    metrics = []
    for (r, d), camp in zip(pairs, camps):
        log.info("running r=%d d=%g (%d D0 values x %d iterations)", r, d, len(camp.D0_sweep), camp.n)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            metrics.append(run_campaign(camp, threads=threads))

    out = _out_dir(cfg)
    outputs = []
    results = out / "results.csv"
    write_table(results, RESULT_COLUMNS, [m.row() for ms in metrics for m in ms])
    outputs.append(results)

    # one wide file per figure analog: metric vs D0 at fixed d, one column per r
    for d in sorted({d for _, d in pairs}):
        idx = [k for k, (_, dd) in enumerate(pairs) if dd == d]
        for name, attr in (("P", "P"), ("N_expected", "Nexp"), ("S_sum", "S_sum"), ("S_per_collision", "S_per_collision")):
            path = out / f"fig_{name}_d{fmt(d)}.csv"
            header = ["D0_mps2"] + [f"r{pairs[k][0]}" for k in idx]
            rows = [
                [camps[idx[0]].D0_sweep[j]] + [getattr(metrics[k][j], attr) for k in idx]
                for j in range(len(camps[idx[0]].D0_sweep))
            ]
            write_table(path, header, rows)
            outputs.append(path)

    if len(pairs) > 1:
        comp = compare_results(pairs, metrics)
        rows = comp.delta_rows()
        path = out / "deltas.csv"
        header = list(rows[0].keys())
        write_table(path, header, [[row[h] for h in header] for row in rows])
        outputs.append(path)

    if cfg["output"]["dump_trajectories"]:
        tdir = out / "trajectories"
        tdir.mkdir(exist_ok=True)
        for (r, d), camp in zip(pairs, camps):
            for j, D0 in enumerate(camp.D0_sweep):
                first = generate_matrix(dist, camp.n, camp.scenario.N, camp.seed, stream=j, rows=range(1))
                rec = TrajectoryRecorder()
                simulate_run(camp.scenario.replace(D0=D0), first.values[0], recorder=rec)
                path = tdir / f"traj_r{r}_d{fmt(d)}_D0_{fmt(D0)}.csv"
                rec.write(path)
                outputs.append(path)

    write_manifest(out, "campaign", cfg, outputs)
    print(",".join(RESULT_COLUMNS))
    for ms in metrics:
        for m in ms:
            print(",".join(fmt(v) for v in m.row()))
    return EXIT_OK


def cmd_validate(cfg: dict) -> int:
    v = cfg["validate"]
    dist = C.build_distribution(cfg)
    delta = float(v["delta"])
    n = int(v["n"]) if v["n"] is not None else hoeffding_min_samples(0.02, delta)
    r = int(C._as_list(cfg["topology"]["r"])[0])
    d = float(C._as_list(cfg["platoon"]["d"])[0])
    scen = C.build_scenario(cfg, r, d, N=int(v["N"]))
    out = _out_dir(cfg)
    reports = []
    for D0 in C._as_list(v["D0"]):
        exact = enumerate_exact(scen, dist, float(D0))
        rep = mc_vs_oracle(scen, dist, float(D0), n, int(cfg["mc"]["seed"]), delta=delta, exact=exact)
        reports.append(rep)
        print(rep.text())
        print()
    ok = all(rep.passed for rep in reports)
    path = out / "validation.txt"
    path.write_text("\n\n".join(rep.text() for rep in reports) + f"\n\noverall: {'PASS' if ok else 'FAIL'}\n")
    write_manifest(out, "validate", cfg, [path])
    print(f"overall: {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_VALIDATION


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML config file or a run manifest")
    common.add_argument("--seed", type=int, metavar="U64")
    common.add_argument("--iterations", type=int, metavar="N", help="Monte Carlo iterations per D0")
    common.add_argument("--sweep", action="append", metavar="KEY=V1,V2,...", help="sweep d, r or D0")
    common.add_argument("--mode", choices=["coordinated", "uncoordinated"])
    common.add_argument("--allow-infeasible-gains", action="store_true")
    common.add_argument("--dump-trajectories", action="store_true")
    common.add_argument("--output", metavar="DIR")
    common.add_argument("--threads", type=int, metavar="N")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="cacc-safety", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("gains", parents=[common], help="admissible (kv, kp) regions and feasibility")
    camp = sub.add_parser("campaign", parents=[common], help="Monte Carlo safety campaign")
    camp.add_argument(
        "--variant", action="append", metavar="r=INT,d=NUM", help="explicit (r, d) variant; repeatable"
    )
    sub.add_parser("validate", parents=[common], help="Monte Carlo vs exact enumeration")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = resolve(args)
        if args.command == "gains":
            return cmd_gains(cfg)
        if args.command == "campaign":
            explicit = [C.parse_variant(s) for s in args.variant] if args.variant else None
            return cmd_campaign(cfg, explicit)
        return cmd_validate(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BudgetExceededError as exc:
        print(f"validation budget exceeded: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleGainsError as exc:
        print(f"infeasible gains: {exc} (pass --allow-infeasible-gains to run anyway)", file=sys.stderr)
        return EXIT_INFEASIBLE
    except DivergedRunError as exc:
        print(f"diverged: {exc} (D0={exc.D0}, iteration={exc.iteration}, step={exc.step})", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
