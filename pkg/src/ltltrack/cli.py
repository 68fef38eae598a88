"""Command line entry point: ``ltltrack plan|run|verify|replot``.

Exit codes: 0 success, 1 mission or check failure, 2 input error.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import csv
import hashlib
import json
import os
import platform
import sys

import numpy as np

from . import __version__, automaton, barrier, expr, ltl, verify
from .engine import run_mission, write_csv
from .mission import MissionError, load_json, merge, parse_mission, resolve

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2
MANIFEST_SCHEMA = "ltltrack.manifest/1"
INPUT_ERRORS = (MissionError, ltl.LTLError, automaton.AutomatonError, automaton.MissionRejected,
                barrier.SafetyDomainError, expr.ExpressionError)


class InputError(Exception):
    pass


def _dump(obj, fh=None):
    fh = fh or sys.stdout
    json.dump(obj, fh, indent=2, sort_keys=False, allow_nan=False, default=_jsonable)
    fh.write("\n")


def _jsonable(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(f"cannot serialize {type(v).__name__}")


def _sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _canonical_hash(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=_jsonable).encode()).hexdigest()


def parse_seeds(text):
    """``"3"`` or an inclusive range ``"0..9"``."""
    try:
        if ".." in text:
            a, b = text.split("..", 1)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise ValueError
            return list(range(lo, hi + 1))
        return [int(text)]
    except ValueError:
        raise InputError(f"bad seed range {text!r}; expected N or A..B") from None


# ------------------------------------------------------------------- plan

def cmd_plan(spec_path):
    """Decomposition of a mission file as a JSON-ready dict."""
    ms = _load(spec_path)
    try:
        plan = ms.plan()
    except automaton.NoAcceptingPath as exc:
        raise InputError(f"no accepting path: {exc}") from None
    out = plan.to_json()
    out["mission"] = ms.name
    if not plan.path:
        out["notice"] = "empty path: the initial automaton state is already accepting"
    return out


# -------------------------------------------------------------------- run

def _load(spec_path, doc=None):
    if doc is None:
        path = resolve(spec_path)
        doc = load_json(path)
    else:
        path = spec_path
    return parse_mission(doc, source=path)


def trace_table(logs):
    """Column name -> stacked array over all segments, plus ``segment``."""
    cols = {}
    seg = []
    for i, log in enumerate(logs):
        seg.append(np.full(len(log.t), float(i)))
        for name, c in log.columns():
            cols.setdefault(name, []).append(c[:, 0])
    table = {"segment": np.concatenate(seg) if seg else np.zeros(0)}
    for name, parts in cols.items():
        table[name] = np.concatenate(parts)
    return table


def read_trace(path):
    """Inverse of ``write_csv``: column name -> float array."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise InputError(f"{path} is empty")
    header = rows[0]
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    except ValueError as exc:
        raise InputError(f"{path}: malformed trace: {exc}") from None
    return {name: data[:, j] for j, name in enumerate(header)}


def _write_columns(path, names, arrays):
    with open(path, "w") as fh:
        fh.write("# " + " ".join(names) + "\n")
        for row in zip(*arrays):
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")


PLOT_FILES = ("tracking_error.dat", "control.dat", "events.dat")


def write_plot_data(table, out_dir):
    """Figure-ready text columns taken verbatim from a trace table.

    ``tracking_error.dat``: segment, t, err.  ``control.dat``: segment, t,
    applied and sampled inputs, event flag.  ``events.dat``: the rows of
    ``control.dat`` where an event fired.
    """
    for need in ("segment", "t", "err", "event"):
        if need not in table:
            raise InputError(f"trace has no {need!r} column")
    u_names = sorted((k for k in table if k.startswith("u") and k[1:].isdigit()), key=lambda k: int(k[1:]))
    uh_names = [f"u_hat{k[1:]}" for k in u_names]
    paths = {}
    p = os.path.join(out_dir, "tracking_error.dat")
    _write_columns(p, ["segment", "t", "err"], [table["segment"], table["t"], table["err"]])
    paths["tracking_error"] = p
    names = ["segment", "t"] + u_names + uh_names + ["event"]
    arrays = [table[n] for n in names]
    p = os.path.join(out_dir, "control.dat")
    _write_columns(p, names, arrays)
    paths["control"] = p
    ev = table["event"] > 0.5
    p = os.path.join(out_dir, "events.dat")
    _write_columns(p, names, [a[ev] for a in arrays])
    paths["events"] = p
    return paths


def run_one(mission_doc, spec_label, overrides, seed, out_dir):
    """One seeded mission run writing every artifact into ``out_dir``.
    Returns ``(exit_code, summary)``."""
    ms = _load(spec_label, doc=mission_doc)
    plan = ms.plan()
    cfg = ms.sim_config(overrides, seed=seed)
    res = run_mission(plan, ms.plant, ms.refs, ms.preds, ms.x0, cfg, ms.phi_c, ms.phi_s)
    summary = dict(res.summary, mission=ms.name, seed=seed)
    code = EXIT_OK if res.success else EXIT_FAIL
    if out_dir is None:
        return code, summary
    os.makedirs(out_dir, exist_ok=True)
    logs = [r.log for r in res.segments]
    outputs = {}
    trace = os.path.join(out_dir, "trace.csv")
    write_csv(logs, trace)
    outputs["trace"] = trace
    outputs.update(write_plot_data(trace_table(logs), out_dir))
    with open(os.path.join(out_dir, "plan.json"), "w") as fh:
        _dump(plan.to_json(), fh)
    outputs["plan"] = os.path.join(out_dir, "plan.json")
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        _dump(summary, fh)
    outputs["summary"] = os.path.join(out_dir, "summary.json")
    manifest = run_manifest(mission_doc, spec_label, overrides, seed, cfg, outputs, summary)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        _dump(manifest, fh)
    return code, summary


def versions():
    return {"ltltrack": __version__, "numpy": np.__version__, "python": platform.python_version()}


def run_manifest(mission_doc, spec_label, overrides, seed, cfg, outputs, summary):
    """Everything needed to regenerate a run: the full mission document,
    the overrides and the seed, hashed together with the package versions."""
    inputs = {"mission": mission_doc, "overrides": overrides, "seed": seed, "versions": versions()}
    return {
        "schema": MANIFEST_SCHEMA,
        "config_sha256": _canonical_hash(inputs),
        "sim_config_sha256": cfg.digest(),
        "spec": spec_label,
        "seed": seed,
        "versions": inputs["versions"],
        "mission": mission_doc,
        "overrides": overrides,
        "outputs": {k: {"path": os.path.basename(v), "sha256": _sha256_file(v)} for k, v in outputs.items()},
        "verdict": summary["verdict"],
        "trace_sha256": summary["trace_sha256"],
    }


def _run_job(args):
    doc, label, overrides, seed, out = args
    try:
        return seed, run_one(doc, label, overrides, seed, out)
    except INPUT_ERRORS as exc:
        return seed, (EXIT_INPUT, {"error": str(exc)})


def cmd_run(spec_path=None, config_path=None, seeds=None, out=None, jobs=None, manifest=None):
    """Run a mission for one or more seeds.  Returns ``(exit_code, report)``."""
    if manifest is not None:
        m = load_json(manifest)
        if m.get("schema") != MANIFEST_SCHEMA:
            raise InputError(f"{manifest} is not a run manifest")
        doc, label, overrides = m["mission"], m.get("spec", manifest), m.get("overrides", {})
        seeds = [int(m["seed"])] if seeds is None else seeds
    else:
        if spec_path is None:
            raise InputError("run needs --spec or --manifest")
        label = spec_path
        doc = load_json(resolve(spec_path))
        overrides = load_json(config_path) if config_path else {}
        if not isinstance(overrides, dict):
            raise InputError("--config must hold a JSON object")
    base = parse_mission(doc, source=label)
    seeds = list(seeds) if seeds is not None else [int(merge(base.config, overrides).get("seed", 0))]
    base.sim_config(overrides)  # fail fast on bad overrides
    if len(seeds) == 1:
        jobs_list = [(doc, label, overrides, seeds[0], out)]
    else:
        jobs_list = [(doc, label, overrides, s, os.path.join(out, f"seed_{s}") if out else None)
                     for s in seeds]
    workers = min(len(jobs_list), jobs or os.cpu_count() or 1)
    if workers <= 1:
        results = [_run_job(j) for j in jobs_list]
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_job, jobs_list))
    codes = [code for _, (code, _) in results]
    code = max(codes)
    if len(results) == 1:
        report = results[0][1][1]
    else:
        report = {"mission": base.name, "runs": [
            {"seed": s, "exit_code": c, **_brief(summ)} for s, (c, summ) in results]}
        if out:
            os.makedirs(out, exist_ok=True)
            with open(os.path.join(out, "sweep.json"), "w") as fh:
                _dump(report, fh)
    return code, report


def _brief(summary):
    if "error" in summary:
        return summary
    keys = ("verdict", "success", "fsa_state", "trace_sha256")
    out = {k: summary.get(k) for k in keys}
    out["segments"] = [{k: s.get(k) for k in ("exit", "events", "reach_time", "tail_max_error",
                                                "min_margin", "post_noise_event_ratio")}
                       for s in summary.get("segments", [])]
    return out


# ----------------------------------------------------------------- verify

def cmd_verify(suite, seeds=None, spec=None):
    kw = {}
    if suite == "mission":
        if seeds is not None:
            kw["seeds"] = tuple(seeds)
        if spec is not None:
            kw["spec"] = spec
    checks = verify.run_suite(suite, **kw)
    passed = all(c.passed for c in checks)
    return (EXIT_OK if passed else EXIT_FAIL), {
        "suite": suite, "passed": passed, "checks": [c.to_json() for c in checks]}


# ----------------------------------------------------------------- replot

def cmd_replot(trace_path, out_dir):
    table = read_trace(trace_path)
    os.makedirs(out_dir, exist_ok=True)
    paths = write_plot_data(table, out_dir)
    return EXIT_OK, {"trace": trace_path, "outputs": paths}


# ------------------------------------------------------------------- main

def build_parser():
    ap = argparse.ArgumentParser(prog="ltltrack", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"ltltrack {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", help="compile the mission formula and print the decomposition")
    p.add_argument("--spec", required=True, help="mission file or bundled mission name")
    p.add_argument("--out", help="write the JSON here instead of stdout")

    p = sub.add_parser("run", help="execute a mission")
    p.add_argument("--spec", help="mission file or bundled mission name")
    p.add_argument("--config", help="JSON object merged over the mission's config")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--seed", type=int)
    g.add_argument("--seeds", help="inclusive range A..B, one worker per seed")
    p.add_argument("--out", help="artifact directory")
    p.add_argument("--jobs", type=int, help="worker processes for seed sweeps")
    p.add_argument("--manifest", help="re-run from a manifest.json")

    p = sub.add_parser("verify", help="run a self-check suite")
    p.add_argument("--suite", required=True, choices=verify.SUITES)
    p.add_argument("--seeds", help="seeds for the mission suite (default 0)")
    p.add_argument("--spec", help="mission for the mission suite")

    p = sub.add_parser("replot", help="regenerate plot-data files from a trace CSV")
    p.add_argument("--trace", required=True)
    p.add_argument("--out", required=True)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "plan":
            report = cmd_plan(args.spec)
            code = EXIT_OK
            if "notice" in report:
                print(report["notice"], file=sys.stderr)
            if args.out:
                with open(args.out, "w") as fh:
                    _dump(report, fh)
                return code
        elif args.command == "run":
            seeds = parse_seeds(args.seeds) if args.seeds else ([args.seed] if args.seed is not None else None)
            code, report = cmd_run(args.spec, args.config, seeds, args.out, args.jobs, args.manifest)
        elif args.command == "verify":
            seeds = parse_seeds(args.seeds) if args.seeds else None
            code, report = cmd_verify(args.suite, seeds, args.spec)
        else:
            code, report = cmd_replot(args.trace, args.out)
    except (InputError, *INPUT_ERRORS) as exc:
        print(f"ltltrack: error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    _dump(report)
    return code


if __name__ == "__main__":
    sys.exit(main())
