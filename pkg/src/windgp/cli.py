"""Command-line driver: ``windgp <command> [--config FILE] [--seed N] [--out DIR] [--threads N]``.

Commands
--------
ingest     CSV -> error-panel bundle (``<out>/bundle``)
fit        bundle -> ``<out>/model.json`` and ``<out>/fit_report.json``
eval       bundle + model -> ``<out>/metrics.json``
simulate   bundle + model -> scenario and band CSVs for one day
synth      run a synthetic study -> table CSV and summary JSON
variogram  bundle -> variogram and ACF CSVs

Results go to files (and a short JSON summary on stdout); diagnostics go to
stderr. Exit status is 0 on success, 1 on a data/model error and 2 on a
usage error.
"""

import argparse
import json
import logging
import os
import sys

from . import synth
from .config import RunConfig, load_config
from .data_panel import (
    SplitSpec,
    compute_error_panel,
    ingest_panel,
    load_bundle,
    make_split,
    regional_acf,
    save_bundle,
    spatial_variogram,
    temporal_variogram,
    write_acf_csv,
)
from .errors import EmptyInput, UnknownDay, WindGPError
from .metrics import evaluate_predictions
from .params import ModelConfig
from .predict import (
    aggregate_zone,
    band_rows,
    posterior,
    sample_scenarios,
    test_panel_predictions,
    to_power_ratio,
    write_bands_csv,
    write_scenarios_csv,
)
from .training import OptimizerConfig, fit, load_model, save_model


log = logging.getLogger("windgp")


class Context:
    def __init__(self, cfg: RunConfig, seed: int, out: str, threads: int):
        self.cfg = cfg
        self.seed = seed
        self.out = out
        self.threads = threads

    def path(self, name: str) -> str:
        return name if os.path.isabs(name) else os.path.join(self.out, name)

    @property
    def bundle_dir(self) -> str:
        return self.path(self.cfg.paths.bundle)

    @property
    def model_path(self) -> str:
        return self.path(self.cfg.paths.model)


def _dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _require(path, what):
    if not os.path.exists(path):
        raise WindGPError(f"{what} not found: {path}")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_ingest(ctx: Context, args) -> dict:
    d = ctx.cfg.data
    if not d.panel_csv:
        raise WindGPError("config data.panel_csv is required for ingest")
    _require(d.panel_csv, "panel CSV")
    panel = ingest_panel(d.panel_csv, d.n_hours, d.exclude_sites)
    sp = ctx.cfg.split
    site_ids = [s.site_id for s in panel.sites]
    if sp.test_site_ids is not None or sp.test_day_ids is not None:
        split = SplitSpec(sp.test_site_ids or [], sp.test_day_ids or [], None)
    else:
        split = make_split(site_ids, panel.days, sp.n_test_sites, sp.n_test_days, ctx.seed)
    ep = compute_error_panel(panel, split, d.eps)
    save_bundle(ep, ctx.bundle_dir)
    M, T, N = ep.y.shape
    return {"bundle": ctx.bundle_dir, "M": M, "T": T, "N": N, "clamped": ep.clamp_count}


def _optimizer(ctx: Context) -> OptimizerConfig:
    o = ctx.cfg.optimizer
    return OptimizerConfig(
        learning_rate=o.learning_rate,
        max_iters=o.max_iters,
        convergence_tol=o.convergence_tol,
        convergence_window=o.convergence_window,
        restart_cap=o.restart_cap,
        gradient_mode=o.gradient_mode,
        likelihood_path=o.likelihood_path,
        threads=ctx.threads,
    )


def cmd_fit(ctx: Context, args) -> dict:
    _require(ctx.bundle_dir, "bundle")
    ep = load_bundle(ctx.bundle_dir)
    m = ctx.cfg.model
    config = ModelConfig.from_name(m.name, periodic=m.periodic, temporal_family=m.temporal_family)
    model = fit(ep, config, _optimizer(ctx), seed=ctx.seed)
    save_model(model, ctx.model_path)
    report = {
        "model_name": config.name,
        "n_params": config.n_params,
        "loss": model.training_loss,
        "log_likelihood": model.log_likelihood,
        "loss_per_day": model.training_loss / model.n_days,
        "bic": model.bic,
        "iters": model.iters,
        "loss_trace": model.loss_trace,
        "restarts": model.restarts,
    }
    _dump(report, ctx.path("fit_report.json"))
    return {"model": ctx.model_path, "name": config.name, "loss": model.training_loss, "bic": model.bic}


def cmd_eval(ctx: Context, args) -> dict:
    _require(ctx.bundle_dir, "bundle")
    _require(ctx.model_path, "model file")
    ep = load_bundle(ctx.bundle_dir)
    model = load_model(ctx.model_path)
    pred = test_panel_predictions(model, ep)
    mc = ctx.cfg.metrics
    report = evaluate_predictions(pred.actual, pred.mean, pred.sigma_full, mc.coverage_levels, mc.interval_levels)
    out = report.to_dict()
    out["bic"] = model.bic
    out["model_name"] = model.config.name
    _dump(out, ctx.path("metrics.json"))
    return out


def _site_list(ep, ids, what):
    unknown = [s for s in ids if s not in ep.site_ids]
    if unknown:
        raise WindGPError(f"unknown {what} sites: {unknown}")
    return list(ids)


def cmd_simulate(ctx: Context, args) -> dict:
    _require(ctx.bundle_dir, "bundle")
    _require(ctx.model_path, "model file")
    ep = load_bundle(ctx.bundle_dir)
    model = load_model(ctx.model_path)
    sc = ctx.cfg.simulate
    if ep.forecast_ratio is None:
        raise WindGPError("bundle carries no forecast ratios; ingest from a CSV first")
    day = sc.day if sc.day is not None else ep.day_ids[-1]
    if day not in ep.day_ids:
        raise UnknownDay(f"day {day!r} is not in the panel")
    n = ep.day_index(day)
    T = ep.y.shape[1]
    if sc.mode == "conditional":
        default_targets = sorted(ep.split.test_site_ids) or ep.site_ids[:1]
        targets = _site_list(ep, sc.targets if sc.targets is not None else default_targets, "target")
        observed_sites = _site_list(
            ep, sc.observed if sc.observed is not None else [s for s in ep.site_ids if s not in targets], "observed"
        )
        if set(observed_sites) & set(targets):
            raise WindGPError("a site cannot be both observed and a target")
        observed = [((s, t), float(ep.y[ep.site_index(s), t, n])) for s in observed_sites for t in range(T)]
        conditioning = {"mode": "conditional", "day": day, "observed": observed_sites}
    else:
        targets = _site_list(ep, sc.targets if sc.targets is not None else ep.site_ids, "target")
        observed = []
        conditioning = {"mode": "unconditional"}
    pairs = [(s, t) for s in targets for t in range(T)]
    dist = posterior(model, observed, pairs)
    scen = sample_scenarios(dist, sc.n_scenarios, ctx.seed, sc.include_nugget, ctx.threads, conditioning)
    rows = [ep.site_index(s) for s, _ in pairs]
    hours = [t for _, t in pairs]
    forecast = ep.forecast_ratio[rows, hours, n]
    ratios = to_power_ratio(scen, forecast, ep.site_means[rows])

    write_scenarios_csv(ctx.path("scenarios.csv"), ratios, day)
    write_bands_csv(ctx.path("bands_sites.csv"), band_rows(pairs, ratios.samples, sc.band_levels, day), "site_id")
    zone_of = dict(zip(ep.site_ids, ep.zones))
    caps = dict(zip(ep.site_ids, ep.capacities)) if ep.capacities is not None else {}
    zonal = aggregate_zone(ratios, caps, zone_of)
    labels = [(z, h) for z in zonal.zones for h in zonal.hours]
    flat = zonal.values.reshape(zonal.values.shape[0], -1)
    write_bands_csv(ctx.path("bands_zones.csv"), band_rows(labels, flat, sc.band_levels, day), "zone")
    return {
        "day": day,
        "mode": sc.mode,
        "n_scenarios": sc.n_scenarios,
        "n_targets": len(pairs),
        "zones": zonal.zones,
        "files": [ctx.path(f) for f in ("scenarios.csv", "bands_sites.csv", "bands_zones.csv")],
    }


def cmd_synth(ctx: Context, args) -> dict:
    sc = ctx.cfg.synth
    study = args.study or sc.study
    opt = _optimizer(ctx)
    seeds = [ctx.seed] if args.seed is not None else list(sc.master_seeds)
    rows = []
    for s in seeds:
        if study == "kernel_eval":
            rows += synth.kernel_eval_study(s, opt, sc.sigma2)
        else:
            rows += synth.warp_recovery_study(study, s, opt, sc.sigma2)
    table = ctx.path(f"synth_{study}.csv")
    synth.write_rows_csv(rows, table)
    summary = synth.summarize(study, rows)
    summary.update({"study": study, "master_seeds": seeds, "sigma2": sc.sigma2, "table": table})
    _dump(summary, ctx.path(f"synth_{study}_summary.json"))
    return summary


def cmd_variogram(ctx: Context, args) -> dict:
    _require(ctx.bundle_dir, "bundle")
    ep = load_bundle(ctx.bundle_dir)
    if ep.y.size == 0:
        raise EmptyInput("panel is empty")
    sv = spatial_variogram(ep)
    tv = temporal_variogram(ep)
    sv.write_csv(ctx.path("variogram_spatial.csv"))
    tv.write_csv(ctx.path("variogram_temporal.csv"))
    max_lag = min(ctx.cfg.variogram.max_lag, ep.y.shape[1] - 1)
    write_acf_csv(regional_acf(ep, max_lag), ctx.path("acf_regional.csv"))
    return {"spatial_pairs": len(sv), "temporal_pairs": len(tv), "max_lag": max_lag}


COMMANDS = {
    "ingest": cmd_ingest,
    "fit": cmd_fit,
    "eval": cmd_eval,
    "simulate": cmd_simulate,
    "synth": cmd_synth,
    "variogram": cmd_variogram,
}


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _global_flags(parser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=default, help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=default, help="master seed (overrides config)")
    parser.add_argument("--out", default=default, help="output directory (overrides config)")
    parser.add_argument("--threads", type=int, default=default, help="worker threads (overrides config)")
    parser.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="windgp", description="Warped spatiotemporal GP for wind forecast errors")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__name__.replace("cmd_", ""))
        _global_flags(p, suppress=True)
        if name == "synth":
            p.add_argument("--study", choices=["kernel_eval", "w1", "w2"], default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = load_config(args.config)
        seed = args.seed if args.seed is not None else cfg.seed
        if seed < 0:
            raise WindGPError("seed must be non-negative")
        threads = args.threads if args.threads is not None else cfg.threads
        if threads < 1:
            raise WindGPError("threads must be at least 1")
        out = args.out if args.out is not None else cfg.output_dir
        os.makedirs(out, exist_ok=True)
        result = COMMANDS[args.command](Context(cfg, seed, out, threads), args)
    except (WindGPError, ValueError, KeyError, OSError) as exc:
        print(f"windgp {args.command}: error: {exc}", file=sys.stderr)
        return 1
    json.dump(result, sys.stdout, indent=2, sort_keys=True, default=float)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
