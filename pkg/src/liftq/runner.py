"""Seeded execution of the experiments and their file outputs."""

from __future__ import annotations

import csv
import json
import logging
import os
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, iq, naive, supply, twostate
from .config import ExperimentConfig
from .core import TabularEnvironment, flow, integrated_reward
from .grids import PolicyGrid, SimplexGrid

log = logging.getLogger(__name__)


def derive_seed(base_seed: int, repeat: int) -> int:
    """Seed for one repeat: first 64-bit word of ``SeedSequence([base_seed, repeat])``."""
    return int(np.random.SeedSequence([base_seed, repeat]).generate_state(1, np.uint64)[0])


@dataclass
class RunManifest:
    config: dict
    seeds: list
    files: list = field(default_factory=list)
    elapsed: float = 0.0
    version: str = __version__
    status: str = "ok"
    error: str | None = None
    timings: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.__dict__, fh, indent=2, sort_keys=True)


def _twostate_params(cfg: ExperimentConfig) -> twostate.TwoStateParams:
    return twostate.TwoStateParams(cfg.lambda0, cfg.lambda1, cfg.p, cfg.penalty, cfg.gamma)


def _supply_params(cfg: ExperimentConfig) -> supply.SupplyParams:
    return supply.SupplyParams(demand_mean=cfg.demand_mean, demand_var=cfg.demand_var, cost=cfg.cost,
                               kappa=cfg.kappa, gamma=cfg.gamma)


def twostate_metric(params: twostate.TwoStateParams, h_grid: PolicyGrid):
    cell = h_grid.project(twostate.optimal_policy(params))
    return lambda Q: iq.error_metric(Q, lambda mu: twostate.optimal_value(params, float(mu[0])), cell)


# Each repeat function returns (files, summary, timings) and writes into ``out``.

def _repeat_naive(cfg, k, seed, out: Path):
    env = twostate.build_env(_twostate_params(cfg), mean_field_terms=cfg.mean_field)
    t0 = time.perf_counter()
    results = naive.run_time_inconsistency_experiment(env, cfg.p0_list, cfg.T, cfg.epsilon,
                                                      np.random.default_rng(seed))
    path = out / f"naive_table_r{k}.csv"
    naive.write_table_csv(results, path)
    q00 = [t.values[0, 0] for t in results.values()]
    return [path], {"q00_spread": float(max(q00) - min(q00))}, {"run": time.perf_counter() - t0}


def _repeat_iq(cfg, k, seed, out: Path):
    params = _twostate_params(cfg)
    env = twostate.build_env(params)
    mu_grid, h_grid = SimplexGrid(2, cfg.N_s), PolicyGrid(2, 2, cfg.N_a)
    Q, report = iq.run_algorithm1(env, mu_grid, h_grid, cfg.T, cfg.l, np.random.default_rng(seed),
                                  metric=twostate_metric(params, h_grid))
    conv = out / f"iq_convergence_r{k}.csv"
    table = out / f"iq_table_r{k}.txt"
    report.write_csv(conv, timing=False)
    Q.save(table)
    b = mu_grid.project(params.target)
    summary = {"E": report.errors, "best_at_target": float(Q.values[b].max())}
    return [conv, table], summary, {"per_iteration": report.seconds}


def _repeat_value_iteration(cfg, k, seed, out: Path):
    params = _twostate_params(cfg)
    env = twostate.build_env(params)
    mu_grid, h_grid = SimplexGrid(2, cfg.N_s), PolicyGrid(2, 2, cfg.N_a)
    Q, report = iq.value_iteration(env, mu_grid, h_grid, tol=cfg.tol, max_iters=cfg.max_iters,
                                   metric=twostate_metric(params, h_grid))
    conv = out / f"vi_convergence_r{k}.csv"
    table = out / f"vi_table_r{k}.txt"
    report.write_csv(conv, timing=False)
    Q.save(table)
    b = mu_grid.project(params.target)
    greedy = h_grid.policy(iq.greedy_policy(Q, b))
    summary_path = out / f"vi_summary_r{k}.csv"
    with open(summary_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["quantity", "value"])
        w.writerow(["best_value_at_target", f"{Q.values[b].max():.17g}"])
        w.writerow(["oracle_value_at_target", f"{twostate.optimal_value(params, params.p):.17g}"])
        w.writerow(["greedy_stay_state0", f"{greedy[0, 0]:.17g}"])
        w.writerow(["greedy_stay_state1", f"{greedy[1, 0]:.17g}"])
        w.writerow(["converged", int(report.converged)])
        w.writerow(["sweeps", len(report) - 1])
    if not report.converged:
        raise RuntimeError(f"value iteration did not converge within {cfg.max_iters} sweeps")
    return [conv, table, summary_path], {"sweeps": len(report) - 1}, {"per_iteration": report.seconds}


def random_mean_field_free_mdp(rng: np.random.Generator, num_states=2, num_actions=2, gamma=0.5):
    P = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    r = rng.uniform(-1.0, 1.0, size=(num_states, num_actions))
    return TabularEnvironment(P, r, gamma)


def lifted_residual(env: TabularEnvironment, q_single: np.ndarray, mu, h) -> float:
    """Bellman residual of the integrated single-agent table at ``(mu, h)``.

    The supremum over next local policies is attained by the row-wise
    greedy policy, which gives ``sum_s' Phi(mu, h)(s') max_a' Q(s', a')``.
    """
    lhs = iq.lifted_from_single(q_single, mu, h)
    nxt = flow(env, mu, h)
    sup = float(nxt @ q_single.max(axis=1))
    return abs(lhs - (integrated_reward(env, mu, h) + env.gamma * sup))


def identity_residuals(rng: np.random.Generator, num_mdps: int, num_pairs: int, gamma: float,
                       tol: float) -> np.ndarray:
    out = np.empty((num_mdps, num_pairs))
    for m in range(num_mdps):
        env = random_mean_field_free_mdp(rng, gamma=gamma)
        q = iq.solve_single_agent_q(env.P, env.r, gamma, tol=tol)
        for j in range(num_pairs):
            mu = rng.dirichlet(np.ones(env.num_states))
            h = rng.dirichlet(np.ones(env.num_actions), size=env.num_states)
            out[m, j] = lifted_residual(env, q, mu, h)
    return out


def _repeat_identity(cfg, k, seed, out: Path):
    res = identity_residuals(np.random.default_rng(seed), cfg.num_mdps, cfg.num_pairs, cfg.gamma, cfg.tol)
    path = out / f"identity_check_r{k}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mdp", "max_residual"])
        for m, row in enumerate(res):
            w.writerow([m, f"{row.max():.6e}"])
    return [path], {"max_residual": float(res.max())}, {}


def _train_mkv(cfg, rng):
    return supply.run_algorithm2(_supply_params(cfg), cfg.N_a, cfg.T, cfg.l, rng, mode=cfg.mode)


def _repeat_supply_mkv(cfg, k, seed, out: Path):
    Q, report = _train_mkv(cfg, np.random.default_rng(seed))
    conv = out / f"supply_convergence_r{k}.csv"
    table = out / f"supply_table_r{k}.txt"
    means = out / f"mean_actions_mkv_r{k}.csv"
    report.write_csv(conv, timing=False)
    Q.save(table)
    mkv = supply.mean_action_table(Q)
    supply.write_mean_actions_csv(means, {"mkv": mkv})
    return [conv, table, means], {"mean_actions": mkv.tolist()}, {"per_iteration": report.seconds}


def _repeat_supply_mfg(cfg, k, seed, out: Path):
    result = supply.mfg_solve(_supply_params(cfg), cfg.beta, cfg.tol, np.random.default_rng(seed))
    means = out / f"mean_actions_mfg_r{k}.csv"
    qpath = out / f"mfg_q_r{k}.csv"
    mfg = result.policy.mean_actions()
    supply.write_mean_actions_csv(means, {"mfg": mfg})
    with open(qpath, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["price"] + [f"Q_a{a}" for a in range(result.q.shape[1])])
        for s, row in enumerate(result.q):
            w.writerow([s] + [f"{v:.17g}" for v in row])
    if not result.converged:
        raise RuntimeError("mean-field game iteration did not converge")
    return [means, qpath], {"mean_actions": mfg.tolist(), "outer": result.outer_iterations}, {}


def _repeat_head_to_head(cfg, k, seed, out: Path):
    rng = np.random.default_rng(seed)
    train_rng, mfg_rng, sim_rng = rng.spawn(3)
    params = _supply_params(cfg)
    Q, _ = _train_mkv(cfg, train_rng)
    mkv = supply.greedy_price_policy(Q)
    mfg = supply.mfg_solve(params, cfg.beta, cfg.tol, mfg_rng).policy
    cum_mkv, cum_mfg = supply.head_to_head(params, mkv, mfg, cfg.rounds, sim_rng, cfg.initial_price)
    curves = out / f"head_to_head_r{k}.csv"
    means = out / f"mean_actions_r{k}.csv"
    supply.write_head_to_head_csv(curves, cum_mkv, cum_mfg)
    supply.write_mean_actions_csv(means, {"mkv": mkv.mean_actions(), "mfg": mfg.mean_actions()})
    summary = {"cum_mkv": float(cum_mkv[-1]), "cum_mfg": float(cum_mfg[-1]),
               "mkv_means": mkv.mean_actions().tolist(), "mfg_means": mfg.mean_actions().tolist()}
    return [curves, means], summary, {}


_REPEATS = {
    "naive-inconsistency": _repeat_naive,
    "iq-twostate": _repeat_iq,
    "value-iteration": _repeat_value_iteration,
    "identity-check": _repeat_identity,
    "supply-mkv": _repeat_supply_mkv,
    "supply-mfg": _repeat_supply_mfg,
    "head-to-head": _repeat_head_to_head,
}


def _run_one(args):
    cfg, k, seed, out = args
    files, summary, timings = _REPEATS[cfg.experiment](cfg, k, seed, Path(out))
    return [str(f) for f in files], summary, timings


def _aggregate_iq(out: Path, summaries: list) -> Path:
    errors = np.array([s["E"] for s in summaries])
    path = out / "iq_convergence_summary.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "E_mean", "E_std"])
        std = errors.std(axis=0, ddof=1) if len(errors) > 1 else np.zeros(errors.shape[1])
        for t, (m, s) in enumerate(zip(errors.mean(axis=0), std)):
            w.writerow([t, f"{m:.17g}", f"{s:.17g}"])
    return path


def _render_figures(cfg: ExperimentConfig, out: Path, files: list, summaries: list) -> list:
    from . import plotting

    made = []
    exp = cfg.experiment
    if exp == "iq-twostate":
        errors = np.array([s["E"] for s in summaries])
        std = errors.std(axis=0, ddof=1) if len(errors) > 1 else np.zeros(errors.shape[1])
        path = out / "iq_error.png"
        plotting.plot_error_curves(path, np.arange(errors.shape[1]), errors.mean(axis=0), std)
        made.append(path)
        Q = iq.IQTable.load(out / "iq_table_r0.txt")
        cells = [Q.mu_grid.project([x, 1 - x]) for x in (0.3, 0.5, 0.9)]
        path = out / "iq_slices.png"
        plotting.plot_policy_slices(path, Q.values, len(Q.h_grid.row_grid), cells,
                                    [f"mu(0) = {x}" for x in (0.3, 0.5, 0.9)])
        made.append(path)
    elif exp == "naive-inconsistency":
        for k in range(cfg.repeats):
            rows = np.loadtxt(out / f"naive_table_r{k}.csv", delimiter=",", skiprows=1, ndmin=2)
            path = out / f"naive_table_r{k}.png"
            plotting.plot_naive_tables(path, rows[:, 0], rows[:, 1:])
            made.append(path)
    elif exp in ("value-iteration", "supply-mkv"):
        stem = "vi_convergence_r0" if exp == "value-iteration" else "supply_convergence_r0"
        data = np.genfromtxt(out / f"{stem}.csv", delimiter=",", names=True)
        path = out / f"{stem}.png"
        plotting.plot_supnorm(path, data["iteration"], data["supnorm_change"])
        made.append(path)
        if exp == "supply-mkv":
            path = out / "mean_actions_mkv_r0.png"
            plotting.plot_mean_actions(path, {"mkv": np.array(summaries[0]["mean_actions"])})
            made.append(path)
    elif exp == "supply-mfg":
        path = out / "mean_actions_mfg_r0.png"
        plotting.plot_mean_actions(path, {"mfg": np.array(summaries[0]["mean_actions"])})
        made.append(path)
    elif exp == "head-to-head":
        data = np.genfromtxt(out / "head_to_head_r0.csv", delimiter=",", names=True)
        path = out / "head_to_head_r0.png"
        plotting.plot_head_to_head(path, data["cum_reward_mkv"], data["cum_reward_mfg"])
        made.append(path)
        path = out / "mean_actions_r0.png"
        plotting.plot_mean_actions(path, {"mkv": np.array(summaries[0]["mkv_means"]),
                                          "mfg": np.array(summaries[0]["mfg_means"])})
        made.append(path)
    return made


def run(cfg: ExperimentConfig, plot: bool = False) -> RunManifest:
    """Run every repeat of ``cfg.experiment`` and write outputs plus ``manifest.json`` into ``cfg.out``.

    Failures are recorded in the manifest with ``status="failed"``.
    """
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    seeds = [derive_seed(cfg.seed, k) for k in range(cfg.repeats)]
    manifest = RunManifest(config=cfg.as_dict(), seeds=seeds)
    start = time.perf_counter()
    jobs = [(cfg, k, seed, str(out)) for k, seed in enumerate(seeds)]
    try:
        if cfg.workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
                results = list(pool.map(_run_one, jobs))
        else:
            results = [_run_one(job) for job in jobs]
        summaries = [r[1] for r in results]
        for k, (files, summary, timings) in enumerate(results):
            manifest.files.extend(files)
            manifest.timings[f"r{k}"] = timings
            manifest.summary[f"r{k}"] = {key: v for key, v in summary.items() if key != "E"}
        if cfg.experiment == "iq-twostate":
            manifest.files.append(str(_aggregate_iq(out, summaries)))
        if plot:
            manifest.files.extend(str(p) for p in _render_figures(cfg, out, manifest.files, summaries))
    except Exception as exc:  # recorded, then surfaced through the exit status
        log.error("experiment %s failed: %s", cfg.experiment, exc)
        manifest.status = "failed"
        manifest.error = "".join(traceback.format_exception_only(type(exc), exc)).strip()
    manifest.elapsed = time.perf_counter() - start
    manifest.write(out / "manifest.json")
    return manifest


def resolve_out_dir(cfg_out: str, flag: str | None) -> str:
    """Output directory precedence: ``--out`` flag, then ``LIFTQ_OUT``, then the config value."""
    if flag:
        return flag
    return os.environ.get("LIFTQ_OUT") or cfg_out
