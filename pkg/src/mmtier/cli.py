"""Experiment orchestration and the ``mmtier`` command line.

Subcommands: ``coverage`` and ``throughput`` (analytic sweep over the
(tau, k) grid with optional Monte Carlo columns), ``topology`` (point dump of
one realized tiered network) and ``validate`` (the full analytic-vs-simulation
cross-check suite).

Exit codes: 0 success, 1 configuration error, 2 numerical failure,
3 validation failure. Output files contain no timestamps and are byte
identical for identical configurations; MMTIER_THREADS only changes speed.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import os
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from . import analytics, geometry, montecarlo
from .analytics import QuadratureError
from .channel import LOS, NLOS
from .config import ConfigError, ExperimentConfig, parse_config
from .montecarlo import SimulationError

log = logging.getLogger("mmtier")


def _threads_from_env() -> int:
    raw = os.environ.get("MMTIER_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        log.warning("ignoring unparsable MMTIER_THREADS=%r", raw)
        return 1


def _db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def _fmt(value) -> str:
    """Shortest round-trip decimal for floats; empty cell for None."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    """One (tau, k) grid point: analytic columns plus optional Monte Carlo ones."""

    tau_db: float
    k: int
    coverage_analytic: float
    coverage_mc: float | None
    mc_ci: float | None
    latency: float
    throughput: float
    quad_error: float


SWEEP_HEADER = "tau_db,k,coverage_analytic,coverage_mc,mc_ci,latency_hops,throughput_bps,quad_error"


def run_sweep(cfg: ExperimentConfig, threads: int = 1) -> list[SweepRow]:
    """Evaluate the full (tau, k) grid in deterministic grid order.

    Per-row quadrature failures are recorded (NaN coverage, infinite error)
    and the sweep continues. Monte Carlo columns are filled when
    ``mc_trials > 0``; the SINR draws are reused across thresholds for each k.
    """
    net = cfg.network()
    channel = cfg.channel()
    beam = cfg.beam()
    quad = cfg.quad()
    sim = cfg.sim() if cfg.mc_trials > 0 else None

    rows = []
    for tau_db in cfg.tau_db_list:
        tau = _db_to_linear(tau_db)
        for k in cfg.k_list:
            try:
                point = analytics.evaluate_point(tau, k, net, channel, beam, quad)
                cov, thr, err = point.coverage, point.throughput, point.quad_error
                latency = point.latency
            except QuadratureError as exc:
                log.error("grid point tau=%.3g dB k=%d failed: %s", tau_db, k, exc)
                cov, thr, err = math.nan, math.nan, math.inf
                latency = (net.lambda_total - net.lambda_tier0) / (k * net.lambda_tier0)
            cov_mc = ci = None
            if sim is not None:
                cov_mc, ci = montecarlo.empirical_coverage(
                    tau, k, net.lambda_tier0, channel, beam, sim, threads=threads)
            rows.append(SweepRow(tau_db=tau_db, k=k, coverage_analytic=cov,
                                 coverage_mc=cov_mc, mc_ci=ci, latency=latency,
                                 throughput=thr, quad_error=err))
    return rows


def sweep_to_csv(rows: list[SweepRow]) -> str:
    lines = [SWEEP_HEADER]
    for r in rows:
        lines.append(",".join([
            _fmt(r.tau_db), str(r.k), _fmt(r.coverage_analytic), _fmt(r.coverage_mc),
            _fmt(r.mc_ci), _fmt(r.latency), _fmt(r.throughput), _fmt(r.quad_error),
        ]))
    return "\n".join(lines) + "\n"


def sweep_to_json(cfg: ExperimentConfig, rows: list[SweepRow]) -> str:
    config = dataclasses.asdict(cfg)
    config.pop("out_dir")  # not experiment provenance; keeps outputs location-independent
    doc = {
        "config": config,
        "rows": [dataclasses.asdict(r) for r in rows],
    }
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=True) + "\n"


# ---------------------------------------------------------------------------
# Topology dump
# ---------------------------------------------------------------------------


def emit_topology(cfg: ExperimentConfig, out_dir: Path) -> list[Path]:
    """Realize one topology and write the CSV dump plus a gnuplot column file."""
    window = geometry.Window(geometry.Point(0.0, 0.0), cfg.topology_window_m)
    rng = montecarlo.trial_stream(cfg.seed, 0, substream=17)
    topo = geometry.build_tier_topology(cfg.network(), cfg.channel(), window, rng,
                                        allow_residual=cfg.floor_hops, quad=cfg.quad())
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "topology.csv"
    dat_path = out_dir / "topology.dat"
    csv_path.write_text(geometry.topology_to_csv(topo), encoding="utf-8")
    dat_path.write_text(geometry.topology_to_gnuplot(topo), encoding="utf-8")
    if topo.residual_intensity > 0.0:
        log.warning("floored hop count leaves residual intensity %.3g per m^2",
                    topo.residual_intensity)
    return [csv_path, dat_path]


# ---------------------------------------------------------------------------
# Validation suite
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    measured: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: measured={self.measured:.6g} threshold={self.threshold:.6g}{extra}"


def run_validate(cfg: ExperimentConfig, threads: int = 1,
                 corrupt_alpha_nlos: float = 0.0,
                 laplace_tuples: int = 20) -> list[CheckResult]:
    """Cross-check every analytical quantity against its simulation twin.

    ``corrupt_alpha_nlos`` perturbs the NLOS exponent on the analytics side
    only; it exists to prove the coverage-agreement check has teeth.
    """
    if cfg.mc_trials < 10_000:
        raise ConfigError("validate mode needs mc_trials >= 10000")
    channel = cfg.channel()
    channel_analytic = channel if corrupt_alpha_nlos == 0.0 else dataclasses.replace(
        channel, alpha_nlos=channel.alpha_nlos + corrupt_alpha_nlos)
    beam = cfg.beam()
    net = cfg.network()
    quad = cfg.quad()
    sim = cfg.sim()
    lam0 = cfg.lambda0
    checks: list[CheckResult] = []

    # 1. The association-distance law integrates to one.
    table = analytics.tabulate_serving_distance(lam0, channel_analytic, quad)
    mass_err = abs(table.total_mass - 1.0)
    checks.append(CheckResult("serving-distance-mass", mass_err <= 1e-3, mass_err, 1e-3))

    # 2/3. Simulated association distances match the law (KS) and its LOS split.
    dist, is_los = montecarlo.serving_distance_samples(lam0, channel, sim, threads)
    ks = stats.ks_1samp(dist, table.cdf_at)
    checks.append(CheckResult("association-distance-ks", ks.pvalue > 0.01,
                              ks.pvalue, 0.01, f"D={ks.statistic:.4g}"))
    los_frac = float(np.mean(is_los))
    split_se = math.sqrt(max(table.los_mass * (1 - table.los_mass), 1e-12) / sim.trials)
    split_err = abs(los_frac - table.los_mass / table.total_mass)
    checks.append(CheckResult("association-los-split", split_err <= 4 * split_se + 1e-6,
                              split_err, 4 * split_se + 1e-6))

    # 4. Interference Laplace functional vs conditioned simulation.
    tuple_rng = montecarlo.trial_stream(cfg.seed, 0, substream=23)
    worst = 0.0
    detail = ""
    for i in range(laplace_tuples):
        tau_db = float(tuple_rng.uniform(-10.0, 25.0))
        q = float(tuple_rng.uniform(0.1, 0.9))
        r = float(np.interp(q, table.cdf, table.radii))
        state = LOS if tuple_rng.random() < table.los_mass / table.total_mass else NLOS
        k = int(tuple_rng.integers(1, cfg.rf_chains + 1))
        alpha0 = channel.alpha_los if state == LOS else channel.alpha_nlos
        s = r**alpha0 * _db_to_linear(tau_db) / (beam.g_main**2 * channel.beta)
        lap, lap_err = analytics.laplace_interference(
            s, r, state, k, lam0, channel_analytic, beam, quad, full_output=True)
        emp, se = montecarlo.empirical_laplace(s, r, state, k, lam0, channel, beam,
                                               sim, threads)
        tol = 3.0 * se + lap_err + 1e-9
        score = abs(lap - emp) / tol
        if score > worst:
            worst = score
            detail = f"worst tuple: s={s:.4g} r={r:.4g} {state} k={k}"
    checks.append(CheckResult("laplace-agreement", worst <= 1.0, worst, 1.0, detail))

    # 5. Coverage agreement on the configured grid, plus analytic monotonicity.
    cov_grid: dict[tuple[float, int], float] = {}
    worst_gap = 0.0
    worst_detail = ""
    agree = True
    for tau_db in cfg.tau_db_list:
        tau = _db_to_linear(tau_db)
        for k in cfg.k_list:
            cov = analytics.coverage_probability(tau, k, lam0, channel_analytic, beam, quad)
            cov_grid[(tau_db, k)] = cov
            est, ci = montecarlo.empirical_coverage(tau, k, lam0, channel, beam, sim,
                                                    threads=threads)
            tol = max(0.02, 2.0 * ci)
            gap = abs(cov - est)
            if gap / tol > worst_gap:
                worst_gap = gap / tol
                worst_detail = f"tau={tau_db:g} dB k={k}: analytic={cov:.4f} mc={est:.4f}"
            if gap > tol:
                agree = False
    checks.append(CheckResult("coverage-agreement", agree, worst_gap, 1.0, worst_detail))

    mono_tau = all(
        cov_grid[(cfg.tau_db_list[i], k)] >= cov_grid[(cfg.tau_db_list[i + 1], k)] - 1e-9
        for k in cfg.k_list for i in range(len(cfg.tau_db_list) - 1))
    checks.append(CheckResult("coverage-monotone-tau", mono_tau, float(mono_tau), 1.0))
    mono_k = all(
        cov_grid[(tau_db, cfg.k_list[i])] >= cov_grid[(tau_db, cfg.k_list[i + 1])] - 1e-9
        for tau_db in cfg.tau_db_list for i in range(len(cfg.k_list) - 1))
    checks.append(CheckResult("coverage-monotone-gain", mono_k, float(mono_k), 1.0))

    # 6/7. Topology statistics: CSR without multiplexing, clustering with it.
    checks.extend(topology_checks(cfg, threads))
    return checks


def topology_checks(cfg: ExperimentConfig, threads: int = 1,
                    window_factor: float = 8.0) -> list[CheckResult]:
    """Spatial-statistics checks of the realized topology.

    Per-tier CSR with multiplexing disabled (every tier is a displaced PPP,
    so each must pass a global Ripley test) and a clustering check with
    multiplexing on (some relay tier must break the CSR envelope at small
    radii). Realizations are built on a guard-padded window and analyzed on
    the nominal one, so edge depletion of the displacement chain stays out of
    the statistics. Ripley's K is quadratic in the point count, hence the
    dedicated ``window_factor`` window rather than the simulation one.
    """
    channel = cfg.channel()
    quad = cfg.quad()
    r0 = cfg.r0_m
    nominal = geometry.Window(geometry.Point(0.0, 0.0), window_factor * r0)
    csr_radii = r0 * np.array([0.25, 0.5, 0.75, 1.0, 1.5, 2.0])
    sampler = geometry.RadialSampler.from_serving_distance(cfg.lambda0, channel, quad)
    checks = []

    net1 = dataclasses.replace(cfg.network(), gain_per_hop=1)
    hops1 = analytics.hop_count(net1.lambda_total, net1.lambda_tier0, 1)
    build_window = nominal.with_guard(hops1, sampler.rms)
    rng = montecarlo.trial_stream(cfg.seed, 1, substream=29)
    topo1 = geometry.build_tier_topology(net1, channel, build_window, rng, sampler=sampler)
    for label, tier in (("first", topo1.tiers[1]), ("last", topo1.tiers[-1])):
        pts = geometry.points_in_window(tier, nominal)
        env_rng = montecarlo.trial_stream(cfg.seed, 2, substream=29)
        observed, bound = geometry.csr_global_test(pts, nominal, csr_radii, 200, env_rng)
        checks.append(CheckResult(f"topology-csr-{label}-tier-k1", observed <= bound,
                                  observed, bound, "studentized max K deviation"))

    k_cluster = min(6, cfg.rf_chains)
    feasible = analytics.feasible_gains(cfg.network())
    if k_cluster not in feasible and feasible:
        candidates = [g for g in feasible if g > 1]
        k_cluster = max(candidates) if candidates else feasible[-1]
    net6 = dataclasses.replace(cfg.network(), gain_per_hop=k_cluster)
    hops6 = analytics.hop_count(net6.lambda_total, net6.lambda_tier0, k_cluster)
    build_window = nominal.with_guard(hops6, sampler.rms)
    rng = montecarlo.trial_stream(cfg.seed, 3, substream=29)
    topo6 = geometry.build_tier_topology(net6, channel, build_window, rng, sampler=sampler)
    cluster_radii = r0 * np.array([0.2, 0.3, 0.4, 0.48])
    exceeds = -math.inf
    for tier in topo6.tiers[1:]:
        pts = geometry.points_in_window(tier, nominal)
        if len(pts) < 2:
            continue
        k_tier = geometry.ripley_k(pts, nominal, cluster_radii)
        env_rng = montecarlo.trial_stream(cfg.seed, 4, substream=29)
        lo, hi = geometry.csr_envelope(len(pts) / nominal.area, nominal,
                                       cluster_radii, 200, env_rng)
        exceeds = max(exceeds, float(np.nanmax((k_tier - hi) / np.maximum(hi, 1e-12))))
    checks.append(CheckResult("topology-clustering-k>1", exceeds > 0.0, exceeds, 0.0,
                              f"relative excess above CSR envelope at r < r0/2, k={k_cluster}"))
    return checks


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are configuration errors: exit 1
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None,
                        help="path to a key = value config file (defaults used if omitted)")
    parser.add_argument("--out", type=Path, default=None,
                        help="output directory (overrides config out_dir)")
    parser.add_argument("--seed", type=int, default=None,
                        help="master seed override")
    parser.add_argument("--trials", type=int, default=None,
                        help="Monte Carlo trials override")
    parser.add_argument("--quiet", action="store_true",
                        help="suppress informational output")


def load_config(path: Path | None, mode: str, args) -> ExperimentConfig:
    if path is None:
        cfg = ExperimentConfig()
        cfg = dataclasses.replace(cfg, mode=mode)
    else:
        cfg = parse_config(path.read_text(encoding="utf-8"))
        cfg = dataclasses.replace(cfg, mode=mode)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    if args.trials is not None:
        cfg = dataclasses.replace(cfg, mc_trials=args.trials)
    if args.out is not None:
        cfg = dataclasses.replace(cfg, out_dir=str(args.out))
    return cfg


def main(argv=None) -> int:
    parser = _Parser(prog="mmtier", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("coverage", "throughput", "topology", "validate"):
        p = sub.add_parser(name)
        p.error = parser.error  # keep exit-code 1 on subcommand usage errors
        _add_common(p)
    sub.choices["validate"].add_argument(
        "--corrupt-analytics-alpha-nlos", type=float, default=0.0,
        help=argparse.SUPPRESS)  # debug hook: desync the analytics side

    args = parser.parse_args(argv)
    logging.basicConfig(format="%(levelname)s %(name)s: %(message)s",
                        level=logging.ERROR if args.quiet else logging.INFO)
    threads = _threads_from_env()

    try:
        cfg = load_config(args.config, args.command, args)
        out_dir = Path(cfg.out_dir)
        if args.command in ("coverage", "throughput"):
            rows = run_sweep(cfg, threads=threads)
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "sweep.csv").write_text(sweep_to_csv(rows), encoding="utf-8")
            (out_dir / "sweep.json").write_text(sweep_to_json(cfg, rows), encoding="utf-8")
            if not args.quiet:
                print(f"wrote {len(rows)} rows to {out_dir / 'sweep.csv'}")
            if any(math.isnan(r.coverage_analytic) for r in rows):
                return 2
            return 0
        if args.command == "topology":
            paths = emit_topology(cfg, out_dir)
            if not args.quiet:
                print("wrote " + ", ".join(str(p) for p in paths))
            return 0
        # validate
        checks = run_validate(cfg, threads=threads,
                              corrupt_alpha_nlos=args.corrupt_analytics_alpha_nlos)
        report = "\n".join(c.line() for c in checks) + "\n"
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "validation.txt").write_text(report, encoding="utf-8")
        if not args.quiet:
            print(report, end="")
        return 0 if all(c.passed for c in checks) else 3
    except (OSError, ConfigError) as exc:
        log.error("%s", exc)
        return 1
    except (QuadratureError, SimulationError) as exc:
        log.error("numerical failure: %s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
