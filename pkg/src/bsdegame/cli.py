"""Command-line front end: scenario solves, simulation, verification suites.

Commands
--------
``riccati``   solve every gain system and write riccati.csv plus residuals.
``simulate``  reconstruct the equilibrium on a path batch; write
              realization.csv (a capped number of paths) and the cost report.
``verify``    run one verification suite (nash | filter | oracle | girsanov |
              info-value); exit 0 iff every assertion holds at its tolerance,
              1 on a tolerance breach, 2 on a usage or scenario error.

Every output file starts with ``#``-prefixed manifest lines (tool version,
command, scenario, pattern, seed, paths, steps).  The manifest deliberately
excludes wall-clock timing so identical invocations produce byte-identical
files; the duration is printed to stdout instead.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__, equilibrium, girsanov, riccati, stochastic, verification
from .errors import GameError
from .model import InformationPattern, ValidatedModel
from .scenario import Scenario, load_scenario

SUITES = ("nash", "filter", "oracle", "girsanov", "info-value")

# suite tolerances
NASH_SIGMA = 3.0
FILTER_SIGMA = 3.0
FILTER_MIN_FRACTION = 0.9
ORACLE_TOL = 1e-3
GIRSANOV_SIGMA = 3.0
IDENTITY_TOL = 1e-12
INFO_VALUE_SIGMA = 3.0

# observation data used by the girsanov suite (the game scenario file only
# carries the state model, so these are fixed, documented choices)
GIRSANOV_H = 0.3
GIRSANOV_HBAR = (0.25, -0.4)
GIRSANOV_ROTATION = math.pi / 6


@dataclass(frozen=True)
class RunManifest:
    """Provenance recorded at the top of every output file.

    Wall-clock duration is deliberately not part of the header (it would
    break byte-identical reruns); ``main`` prints it to stdout instead.
    """

    command: str
    scenario: str
    pattern: str
    seed: int
    paths: int
    steps: int
    out_dir: str

    def header_lines(self) -> tuple[str, ...]:
        return (f"tool=bsdegame {__version__}",
                f"command={self.command}",
                f"scenario={self.scenario}",
                f"pattern={self.pattern}",
                f"seed={self.seed}",
                f"paths={self.paths}",
                f"steps={self.steps}",
                f"out={self.out_dir}")


def _write_report(path: Path, manifest: RunManifest, lines: list[str]) -> None:
    with path.open("w") as stream:
        for line in manifest.header_lines():
            stream.write(f"# {line}\n")
        for line in lines:
            stream.write(line + "\n")


def _build_model(args) -> tuple[Scenario, ValidatedModel]:
    scenario = load_scenario(args.scenario)
    override = InformationPattern(args.pattern_override) if args.pattern_override else None
    model = scenario.build(pattern=override, steps=args.steps)
    return scenario, model


def _reconstruct(model: ValidatedModel, seed: int, paths: int):
    ric = riccati.solve(model)
    batch = stochastic.sample_brownian(model.grid, seed, paths)
    return ric, batch, equilibrium.reconstruct(model, ric, batch)


def cmd_riccati(args, out_dir: Path) -> int:
    _, model = _build_model(args)
    manifest = RunManifest("riccati", args.scenario, model.pattern.value,
                           args.seed, 0, model.grid.steps, str(out_dir))
    solution = riccati.solve(model)
    with (out_dir / "riccati.csv").open("w") as stream:
        riccati.write_csv(solution, stream, manifest.header_lines())
    gaps = riccati.decomposition_gaps(solution)
    residuals = riccati.coupled_residuals(model, solution)
    lines = [f"decomposition_alpha={gaps['alpha']:.17g}",
             f"decomposition_beta={gaps['beta']:.17g}"]
    lines += [f"coupled_residual_{name}={value:.17g}"
              for name, value in residuals.items()]
    _write_report(out_dir / "report.txt", manifest, lines)
    return 0


def cmd_simulate(args, out_dir: Path) -> int:
    _, model = _build_model(args)
    manifest = RunManifest("simulate", args.scenario, model.pattern.value,
                           args.seed, args.paths, model.grid.steps, str(out_dir))
    ric, batch, real = _reconstruct(model, args.seed, args.paths)
    with (out_dir / "realization.csv").open("w") as stream:
        equilibrium.write_csv(real, model, stream, manifest.header_lines(),
                              max_paths=args.max_csv_paths)
    if args.dump_paths:
        with (out_dir / "paths.csv").open("w") as stream:
            for line in manifest.header_lines():
                stream.write(f"# {line}\n")
            stream.write("path,t,w1,w2\n")
            w1, w2 = batch.w1(), batch.w2()
            ts = model.grid.nodes()
            for p in range(min(args.max_csv_paths, batch.paths)):
                for k, t in enumerate(ts):
                    stream.write(f"{p},{t:.17g},{w1[p, k]:.17g},{w2[p, k]:.17g}\n")
    report = verification.mc_cost(model, real)
    _write_report(out_dir / "report.txt", manifest, report.lines())
    return 0


def _suite_nash(model: ValidatedModel, args, lines: list[str]) -> bool:
    ric, batch, real = _reconstruct(model, args.seed, args.paths)
    ts = model.grid.nodes()
    horizon = model.grid.horizon
    directions = (("const", np.ones_like(ts)),
                  ("ramp", ts / horizon),
                  ("cosine", np.cos(math.pi * ts / horizon)))
    epsilons = (0.5, -0.5, 1.0, -1.0)
    ok = True
    for player in (1, 2):
        for name, phi in directions:
            rep = verification.perturbation_test(model, real, player, phi, epsilons)
            theta, theta_se = verification.orthogonality_statistic(model, ric, real,
                                                                   player, phi)
            cond = (abs(theta) <= NASH_SIGMA * theta_se or theta == 0.0) \
                and rep.kappa >= -rep.theta_se \
                and all(dj >= -NASH_SIGMA * se if se > 0 else dj >= -1e-15
                        for dj, se in zip(rep.delta_j, rep.delta_j_se))
            ok &= cond
            lines += [f"direction={name}", f"player={player}",
                      f"theta={theta:.17g}", f"theta_SE={theta_se:.17g}",
                      f"dJde={rep.theta:.17g}", f"dJde_SE={rep.theta_se:.17g}",
                      f"kappa={rep.kappa:.17g}"]
            for eps, dj, se in zip(rep.epsilons, rep.delta_j, rep.delta_j_se):
                lines.append(f"dJ({eps:g})={dj:.17g} SE={se:.17g}")
            lines.append(f"pass={int(cond)}")
    return ok


def _suite_filter(model: ValidatedModel, args, lines: list[str]) -> bool:
    ric = riccati.solve(model)
    w2 = stochastic.sample_brownian(model.grid, args.seed, 1)
    n = model.grid.steps
    checkpoints = np.linspace(n // 10, n, 10).astype(int)
    inner = max(args.paths, 1000)
    report = verification.filter_check(model, ric, w2.dw2[0], inner,
                                       checkpoints, seed=args.seed + 1)
    lines.extend(report.lines())
    need = math.ceil(FILTER_MIN_FRACTION * len(checkpoints))
    ok = report.within(FILTER_SIGMA) >= need
    lines.append(f"checkpoints_within_{FILTER_SIGMA:g}sigma={report.within(FILTER_SIGMA)}")
    return ok


def _suite_oracle(model: ValidatedModel, args, lines: list[str]) -> bool:
    oracle = verification.deterministic_oracle(model)
    zero = np.zeros((1, model.grid.steps))
    batch = stochastic.BrownianPathBatch(grid=model.grid, seed=args.seed,
                                         dw1=zero, dw2=zero)
    model_sym = model.with_pattern(InformationPattern.SYMMETRIC_W2)
    real = equilibrium.reconstruct_case_i(model_sym, riccati.solve(model_sym), batch)
    gap1 = float(np.max(np.abs(real.u1[0] - oracle.u1)))
    gap2 = float(np.max(np.abs(real.u2[0] - oracle.u2)))
    cost = verification.mc_cost(model_sym, real)
    jgap1 = abs(cost.j1 - oracle.j1) / max(abs(oracle.j1), 1e-300)
    jgap2 = abs(cost.j2 - oracle.j2) / max(abs(oracle.j2), 1e-300)
    lines += [f"oracle_gap={max(gap1, gap2):.17g}",
              f"oracle_gap_u1={gap1:.17g}", f"oracle_gap_u2={gap2:.17g}",
              f"oracle_J1={oracle.j1:.17g}", f"formula_J1={cost.j1:.17g}",
              f"oracle_J2={oracle.j2:.17g}", f"formula_J2={cost.j2:.17g}",
              f"cost_relative_gap={max(jgap1, jgap2):.17g}"]
    return max(gap1, gap2) <= ORACLE_TOL and max(jgap1, jgap2) <= ORACLE_TOL


def _suite_girsanov(model: ValidatedModel, args, out_dir: Path,
                    manifest: RunManifest, lines: list[str]) -> bool:
    theta = GIRSANOV_ROTATION
    scenario = girsanov.GirsanovScenario(
        h=GIRSANOV_H, hbar1=GIRSANOV_HBAR[0], hbar2=GIRSANOV_HBAR[1],
        sigma=np.array([[math.cos(theta), -math.sin(theta)],
                        [math.sin(theta), math.cos(theta)]]),
        orthogonal=True)
    batch = stochastic.sample_brownian(model.grid, args.seed, args.paths)
    x_path = np.zeros(model.grid.steps + 1)
    rho1, rho1_inv = girsanov.density_rho1(scenario, model.grid, batch.dw2, x_path)
    rho2, rho2_inv = girsanov.density_rho2(scenario, model.grid, batch.dw1,
                                           batch.dw2, x_path)

    def mean_dev(rho):
        mean = float(rho[:, -1].mean())
        se = float(rho[:, -1].std(ddof=1) / math.sqrt(rho.shape[0]))
        return mean, se, abs(mean - 1.0) / se

    m1, se1, d1 = mean_dev(rho1)
    m2, se2, d2 = mean_dev(rho2)
    recip = max(float(np.max(np.abs(rho1 * rho1_inv - 1.0))),
                float(np.max(np.abs(rho2 * rho2_inv - 1.0))))
    transform = girsanov.transform_observation(scenario)
    rng = np.random.default_rng(args.seed)
    z1, z2 = rng.standard_normal(256), rng.standard_normal(256)
    big1, big2 = transform.rotate(z1, z2)
    back1, back2 = transform.unrotate(big1, big2)
    round_trip = max(float(np.max(np.abs(back1 - z1))), float(np.max(np.abs(back2 - z2))))

    with (out_dir / "girsanov.csv").open("w") as stream:
        for line in manifest.header_lines():
            stream.write(f"# {line}\n")
        stream.write("path,t,rho1,rho2\n")
        ts = model.grid.nodes()
        for p in range(min(args.max_csv_paths, batch.paths)):
            for k, t in enumerate(ts):
                stream.write(f"{p},{t:.17g},{rho1[p, k]:.17g},{rho2[p, k]:.17g}\n")

    lines += [f"rho1_mean={m1:.17g}", f"rho1_SE={se1:.17g}",
              f"rho2_mean={m2:.17g}", f"rho2_SE={se2:.17g}",
              f"reciprocal_identity={recip:.17g}",
              f"rotation_round_trip={round_trip:.17g}"]
    return (d1 <= GIRSANOV_SIGMA and d2 <= GIRSANOV_SIGMA
            and recip <= IDENTITY_TOL and round_trip <= IDENTITY_TOL)


def _suite_info_value(model: ValidatedModel, args, lines: list[str]) -> bool:
    report = verification.information_value(model, args.seed, args.paths)
    lines.extend(report.lines())
    return report.difference <= INFO_VALUE_SIGMA * report.difference_se


def cmd_verify(args, out_dir: Path) -> int:
    _, model = _build_model(args)
    manifest = RunManifest(f"verify:{args.suite}", args.scenario, model.pattern.value,
                           args.seed, args.paths, model.grid.steps, str(out_dir))
    lines: list[str] = []
    if args.suite == "nash":
        ok = _suite_nash(model, args, lines)
    elif args.suite == "filter":
        ok = _suite_filter(model, args, lines)
    elif args.suite == "oracle":
        ok = _suite_oracle(model, args, lines)
    elif args.suite == "girsanov":
        ok = _suite_girsanov(model, args, out_dir, manifest, lines)
    else:
        ok = _suite_info_value(model, args, lines)
    lines.append(f"suite={args.suite}")
    lines.append(f"passed={int(ok)}")
    _write_report(out_dir / "report.txt", manifest, lines)
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bsdegame",
        description="Feedback Nash equilibria for linear-quadratic games of "
                    "backward SDEs: solve, simulate, verify.")
    parser.add_argument("--version", action="version", version=f"bsdegame {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--scenario", required=True, help="scenario config file")
        p.add_argument("--pattern-override", choices=[x.value for x in InformationPattern],
                       help="use this information pattern instead of the scenario's")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--paths", type=int, default=10000)
        p.add_argument("--steps", type=int, default=None,
                       help="override the scenario's grid resolution")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--threads", type=int, default=1,
                       help="worker cap; results are bit-identical for any value")
        p.add_argument("--repeat", type=int, default=1,
                       help="repeat with seeds seed..seed+R-1 in rep###/ subdirs")
        p.add_argument("--max-csv-paths", type=int, default=8,
                       help="number of paths written to per-path CSV files")

    p_ric = sub.add_parser("riccati", help="solve gain systems, write riccati.csv")
    common(p_ric)
    p_sim = sub.add_parser("simulate", help="reconstruct the equilibrium on a path batch")
    common(p_sim)
    p_sim.add_argument("--dump-paths", action="store_true",
                       help="also write cumulative Brownian paths to paths.csv")
    p_ver = sub.add_parser("verify", help="run a verification suite")
    common(p_ver)
    p_ver.add_argument("--suite", choices=SUITES, required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    if args.repeat < 1:
        print("error: --repeat must be >= 1", file=sys.stderr)
        return 2

    dispatch = {"riccati": cmd_riccati, "simulate": cmd_simulate, "verify": cmd_verify}
    worst = 0
    base_seed = args.seed
    base_out = Path(args.out)
    for rep in range(args.repeat):
        out_dir = base_out if args.repeat == 1 else base_out / f"rep{rep:03d}"
        out_dir.mkdir(parents=True, exist_ok=True)
        args.seed = base_seed + rep
        started = time.perf_counter()
        try:
            code = dispatch[args.command](args, out_dir)
        except GameError as exc:
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
            return 2
        duration = time.perf_counter() - started
        print(f"{args.command} seed={args.seed} -> {out_dir} "
              f"({duration:.2f}s, exit {code})")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
