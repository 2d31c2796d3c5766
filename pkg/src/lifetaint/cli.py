"""Batch driver: load models, apps and config, run the m-escalating analysis.

Per app, all components are analyzed iteratively at m=1; if nothing is found
and m < m-max, m is raised by one and the app is analyzed again.  Any warning
stops the escalation for that app and the run moves on to the next one.
"""

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources

from .analysis import AnalysisContext, analyze_component, load_config
from .cfg import build_cfg, remove_back_edges, to_dot
from .detectors import Report, dedup_warnings, render_report
from .errors import ConfigError, LifetaintError
from .ir import load_app
from .lifecycle import load_model
from .sequences import build_plan, receiver_plan


@dataclass
class RunConfig:
    app_paths: list
    models_dir: str = None
    config_path: str = None
    m_max: int = 2
    budget_secs: float = 600.0
    jobs: int = 1
    fmt: str = "json"
    dump_cfg: bool = False
    out: object = None  # stream; defaults to stdout

    def __post_init__(self):
        if self.m_max < 1:
            raise ConfigError("m-max must be >= 1")
        if self.budget_secs <= 0:
            raise ConfigError("budget-secs must be > 0")
        if self.fmt not in ("json", "table"):
            raise ConfigError("format must be json or table")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")


def _data_path(*parts):
    return resources.files("lifetaint").joinpath("data", *parts)


def load_models(models_dir=None):
    """The bundled (or overridden) activity and service machines."""
    if models_dir is None:
        base = _data_path("models")
    else:
        base = models_dir
        if not os.path.isdir(base):
            raise ConfigError("models directory %r does not exist" % base)
    models = {}
    for kind, fname in (("ACTIVITY", "activity.json"), ("SERVICE", "service.json")):
        path = os.path.join(str(base), fname)
        models[kind] = load_model(path)
    return models


def default_config():
    return load_config(str(_data_path("config", "default_config.json")))


def analyze_app(app, models, config, m_max=2, budget_secs=600.0, clock=time.monotonic):
    """Escalating analysis of one app; returns its Report."""
    started = clock()
    ctx = AnalysisContext(app, config, budget_secs, clock)
    m_reached = 0
    for m in range(1, m_max + 1):
        m_reached = m
        for component in app.components:
            if component.kind == "RECEIVER":
                plan = receiver_plan(component, m)
            else:
                plan = build_plan(models[component.kind], component, m)
            if not plan.units or m > len(plan.units):
                continue
            analyze_component(app, component, plan, ctx)
            if ctx.killed:
                break
        if ctx.warnings or ctx.killed:
            break
    return Report(
        app.app_id,
        dedup_warnings(ctx.warnings),
        m_reached,
        ctx.sequences_analyzed,
        clock() - started,
        finished=not ctx.killed,
    )


def _dump_cfgs(app, out):
    for klass in app.classes:
        for m in klass.methods:
            out.write(to_dot(remove_back_edges(build_cfg(m))))
            out.write("\n")


def run(config):
    """Run the batch; exit status 0, or 2 if any app was killed, 1 on bad config."""
    out = config.out if config.out is not None else sys.stdout
    try:
        models = load_models(config.models_dir)
        ss_config = (load_config(config.config_path) if config.config_path
                     else default_config())
    except (ConfigError, LifetaintError, OSError) as exc:
        print("configuration error: %s" % exc, file=sys.stderr)
        return 1

    def run_one(path):
        try:
            app = load_app(path)
        except (LifetaintError, OSError) as exc:
            return Report(os.path.basename(path), [], 0, 0, 0.0, True,
                          error=str(exc)), None
        try:
            report = analyze_app(app, models, ss_config, config.m_max,
                                 config.budget_secs)
        except LifetaintError as exc:
            # internal contract violation: abort this app with a diagnostic,
            # keep analyzing the rest
            report = Report(app.app_id, [], 0, 0, 0.0, True, error=str(exc))
        return report, app

    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(run_one, config.app_paths))
    else:
        results = [run_one(p) for p in config.app_paths]

    any_killed = False
    for (report, app) in results:
        if config.dump_cfg and app is not None:
            _dump_cfgs(app, out)
        out.write(render_report(report, config.fmt))
        out.write("\n")
        any_killed = any_killed or not report.finished
    return 2 if any_killed else 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="lifetaint",
        description="Life-cycle-aware static taint analysis over the mini bytecode IR",
    )
    parser.add_argument("--app", action="append", required=True, metavar="PATH",
                        help="app IR file; repeat for several apps")
    parser.add_argument("--models", metavar="DIR", default=None,
                        help="directory with activity.json/service.json (default: bundled)")
    parser.add_argument("--config", metavar="PATH", default=None,
                        help="source/sink configuration (default: bundled)")
    parser.add_argument("--m-max", type=int, default=2, metavar="N")
    parser.add_argument("--budget-secs", type=float, default=600.0, metavar="N")
    parser.add_argument("--format", choices=("json", "table"), default="json")
    parser.add_argument("--jobs", type=int, default=1, metavar="N")
    parser.add_argument("--dump-cfg", action="store_true",
                        help="emit de-looped CFGs in DOT before each report")
    args = parser.parse_args(argv)

    level = os.environ.get("LIFETAINT_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))

    try:
        cfg = RunConfig(
            app_paths=args.app, models_dir=args.models, config_path=args.config,
            m_max=args.m_max, budget_secs=args.budget_secs, fmt=args.format,
            jobs=args.jobs, dump_cfg=args.dump_cfg,
        )
    except ConfigError as exc:
        print("configuration error: %s" % exc, file=sys.stderr)
        return 1
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
