"""Command-line entry point.

Subcommands: ``gen-network``, ``synth``, ``verify``, ``simulate``,
``freqresp``, ``compare``.  Every run that writes files also writes a
``<output>.manifest.json`` listing the config and controller hashes.

Exit codes: 0 success, 1 usage or IO error, 2 infeasible synthesis or failed
certificate, 3 numerical divergence.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from importlib import metadata
from pathlib import Path

import numpy as np
import yaml

from . import config as config_mod
from . import freq, lmi, netgen
from . import simulation as sim
from .dhs import closed_loop
from .model import assemble

EXIT_OK, EXIT_USAGE, EXIT_FAILED, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def tool_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    subcommand: str
    parameters: dict
    config_sha256: str | None = None
    controllers: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    started: str = ""
    finished: str = ""
    version: str = field(default_factory=tool_version)

    def add_output(self, path) -> None:
        self.outputs[str(path)] = sha256_file(path)

    def write(self, path) -> Path:
        self.finished = _now()
        path = Path(path)
        path.write_text(json.dumps(self.__dict__, indent=1, sort_keys=True) + "\n")
        return path


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _manifest_path(out) -> Path:
    out = Path(out)
    return out.with_name(out.name + ".manifest.json")


# ---------------------------------------------------------------------------
# controller files


def load_controller(path) -> lmi.SynthesisResult | np.ndarray:
    """Read a controller file: a full synthesis result or a bare ``{"K": ...}``."""
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read controller {path}: {exc}") from None
    if "K" not in raw:
        raise UsageError(f"controller {path} has no gain K")
    if "X" in raw:
        return lmi.SynthesisResult.from_dict(raw)
    return np.asarray(raw["K"], dtype=float)


def _gain(ctrl) -> np.ndarray:
    return ctrl.K if isinstance(ctrl, lmi.SynthesisResult) else ctrl


def _check_shape(cm, ctrl) -> None:
    K = _gain(ctrl)
    if K.shape != (cm.n_g, cm.n_aug):
        raise UsageError(f"controller gain is {K.shape[0]}x{K.shape[1]}, config needs {cm.n_g}x{cm.n_aug}")


def _load_cfg(path):
    try:
        return config_mod.load_config(path)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None


def _closed_loop_checks(cm, K) -> dict:
    """Certificate checks that need only the gain."""
    clp = closed_loop(cm, K)
    checks = {"hurwitz": clp.abscissa < 0}
    if checks["hurwitz"]:
        checks["positive real on grid"] = freq.positive_real_margin(clp, freq.default_verification_grid()) >= 0
        checks["dc gain = gamma_E"] = float(np.linalg.norm(freq.transfer_at(clp, 0.0) - cm.gamma_e)) <= 1e-6
    return checks


def certify(cfg, ctrl) -> tuple[bool, list[str]]:
    cm = assemble(cfg)
    _check_shape(cm, ctrl)
    if isinstance(ctrl, lmi.SynthesisResult):
        rep = lmi.verify_certificates(ctrl, cm)
        return rep.passed, rep.lines() + [f"abscissa {rep.abscissa:.6g}", f"pr_margin {rep.pr_margin:.6g}",
                                          f"dc_deviation {rep.dc_deviation:.3g}"]
    checks = _closed_loop_checks(cm, ctrl)
    lines = [f"{'PASS' if ok else 'FAIL'} {k}" for k, ok in checks.items()]
    lines.append("SKIP LMI checks (controller file carries no X, Y)")
    return all(checks.values()), lines


# ---------------------------------------------------------------------------
# subcommands


def cmd_gen_network(args) -> int:
    cfg = netgen.gen_network(args.size, args.topology, args.seed)
    out = Path(args.output)
    config_mod.save_config(cfg, out)
    man = RunManifest("gen-network", {"size": args.size, "topology": args.topology, "seed": args.seed},
                      config_sha256=cfg.digest(), started=_now())
    man.add_output(out)
    man.write(_manifest_path(out))
    print(f"wrote {out} ({len(cfg.buses)} buses, {len(cfg.edges)} edges, {len(cfg.heat_pumps)} heat pumps)")
    return EXIT_OK


def _weights_override(args) -> dict:
    kw = {}
    for name in ("eps", "alpha", "cutoff", "rho_min", "rho_max", "gain_bound", "decay"):
        v = getattr(args, name, None)
        if v is not None:
            kw[name] = v
    return kw


def cmd_synth(args) -> int:
    started = _now()
    cfg = _load_cfg(args.config)
    kw = _weights_override(args)
    if kw:
        cfg = cfg.with_weights(**kw)
    cm = assemble(cfg)
    try:
        res = lmi.synthesize(cfg, args.mode, cm=cm)
    except lmi.InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except lmi.NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_FAILED
    res.report = lmi.verify_certificates(res, cm)
    payload = res.to_dict()
    payload["config_sha256"] = cfg.digest()
    out = Path(args.output)
    out.write_text(json.dumps(payload, indent=1) + "\n")
    man = RunManifest("synth", {"mode": args.mode, **kw}, config_sha256=cfg.digest(), started=started)
    man.controllers[str(out)] = sha256_file(out)
    man.add_output(out)
    man.write(_manifest_path(out))
    print(f"mode {args.mode}: status {res.solver['status']}, {res.solver['iterations']} iterations, "
          f"{res.solver['seconds']} s")
    if res.gamma is not None:
        print(f"gamma {res.gamma:.6g}")
    for line in res.report.lines():
        print(line)
    return EXIT_OK if res.report.passed else EXIT_FAILED


def cmd_verify(args) -> int:
    cfg = _load_cfg(args.config)
    ctrl = load_controller(args.controller)
    ok, lines = certify(cfg, ctrl)
    for line in lines:
        print(line)
    print("all checks passed" if ok else "certificate check failed")
    return EXIT_OK if ok else EXIT_FAILED


def _require_certified(cfg, ctrl, allow: bool, label: str) -> bool:
    ok, lines = certify(cfg, ctrl)
    if not ok and not allow:
        print(f"{label} is not certified for this config:", file=sys.stderr)
        for line in lines:
            print(f"  {line}", file=sys.stderr)
        print("pass --uncertified to run anyway", file=sys.stderr)
    return ok


def load_scenario(path) -> sim.Scenario:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise UsageError(f"cannot read scenario {path}: {exc}") from None
    try:
        return sim.Scenario.from_dict(raw)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"invalid scenario {path}: {exc}") from None


def cmd_simulate(args) -> int:
    started = _now()
    cfg = _load_cfg(args.config)
    ctrl = load_controller(args.controller)
    scen = load_scenario(args.scenario)
    if args.seed is not None:
        scen = replace(scen, seed=args.seed)
    certified = _require_certified(cfg, ctrl, args.uncertified, "controller")
    if not certified and not args.uncertified:
        return EXIT_FAILED
    try:
        traj = sim.simulate(cfg, _gain(ctrl), scen, certified=certified)
    except sim.SimulationDiverged as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    win = sim.metric_window(scen)
    traj.meta["metric_window"] = "full horizon" if win is None else f"[{win[0]:.6g}, {win[1]:.6g}] s"
    out = Path(args.output)
    out.write_text(traj.to_csv())
    m = sim.compute_metrics(traj, win)
    man = RunManifest("simulate", {"scenario": scen.to_dict()}, config_sha256=cfg.digest(), started=started)
    man.controllers[str(args.controller)] = sha256_file(args.controller)
    man.add_output(out)
    man.write(_manifest_path(out))
    for k, v in m.as_dict().items():
        print(f"{k} {v:.6g}")
    return EXIT_OK


def parse_grid(text: str | None) -> np.ndarray:
    """``lo:hi:points_per_decade`` in rad/s, or a comma-separated list."""
    if not text:
        return freq.default_grid()
    try:
        if ":" in text:
            lo, hi, ppd = text.split(":")
            return freq.default_grid(int(ppd), float(lo), float(hi))
        return np.array([float(x) for x in text.split(",")])
    except ValueError:
        raise UsageError(f"bad grid {text!r}; use lo:hi:points_per_decade or a list") from None


def cmd_freqresp(args) -> int:
    started = _now()
    cfg = _load_cfg(args.config)
    ctrl = load_controller(args.controller)
    grid = parse_grid(args.grid)
    cm = assemble(cfg)
    _check_shape(cm, ctrl)
    clp = closed_loop(cm, _gain(ctrl))
    try:
        fr = freq.sweep(clp, grid)
    except freq.ResolventError as exc:
        print(f"resolvent error: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.output)
    out.write_text(fr.to_csv())
    man = RunManifest("freqresp", {"grid": args.grid or "default"}, config_sha256=cfg.digest(), started=started)
    man.controllers[str(args.controller)] = sha256_file(args.controller)
    man.add_output(out)
    man.write(_manifest_path(out))
    pk = "none" if fr.peak is None else f"{fr.peak:.6g} at {fr.hz[fr.peak_index]:.4g} Hz"
    print(f"{len(grid)} points, mid-band peak {pk}, min pr margin {np.min(fr.pr_margin):.6g}")
    return EXIT_OK


def cmd_compare(args) -> int:
    started = _now()
    cfg = _load_cfg(args.config)
    c1, c2 = load_controller(args.joint), load_controller(args.baseline)
    for label, c in (("joint controller", c1), ("baseline controller", c2)):
        if not _require_certified(cfg, c, args.uncertified, label) and not args.uncertified:
            return EXIT_FAILED
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    try:
        freqs = [float(x) for x in args.freqs.split(",")]
    except ValueError:
        raise UsageError(f"bad frequency list {args.freqs!r}") from None
    try:
        rows = sim.compare(cfg, _gain(c1), _gain(c2), freqs, amplitude=args.amplitude, jobs=args.jobs)
    except sim.SimulationDiverged as exc:
        print(f"diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    meta = {
        "config_sha256": cfg.digest(),
        "joint_sha256": sha256_file(args.joint),
        "baseline_sha256": sha256_file(args.baseline),
        "disturbance": f"sinusoidal bus load, amplitude {args.amplitude} pu split over all buses",
    }
    out = Path(args.output)
    out.write_text(sim.ratio_table_csv(rows, meta))
    man = RunManifest("compare", {"freqs": freqs, "amplitude": args.amplitude}, config_sha256=cfg.digest(),
                      started=started)
    man.controllers = {str(args.joint): meta["joint_sha256"], str(args.baseline): meta["baseline_sha256"]}
    man.add_output(out)
    man.write(_manifest_path(out))
    for r in rows:
        print(f"{r.freq:g} Hz " + " ".join(f"{k}={v:.4g}" for k, v in r.ratios.items()))
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="chpctl", description="Heat-pump frequency-support controller toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-network", help="generate a synthetic coupled network config")
    g.add_argument("--size", type=int, required=True)
    g.add_argument("--topology", choices=("ring", "radial"), default="ring")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("-o", "--output", required=True)
    g.set_defaults(func=cmd_gen_network)

    s = sub.add_parser("synth", help="synthesize a temperature regulator")
    s.add_argument("--config", required=True)
    s.add_argument("--mode", choices=("joint", "passivity-only"), default="joint")
    s.add_argument("-o", "--output", required=True)
    for name in ("eps", "alpha", "cutoff", "rho-min", "rho-max", "gain-bound", "decay"):
        s.add_argument(f"--{name}", dest=name.replace("-", "_"), type=float)
    s.set_defaults(func=cmd_synth)

    v = sub.add_parser("verify", help="check a controller's certificates")
    v.add_argument("--config", required=True)
    v.add_argument("--controller", required=True)
    v.set_defaults(func=cmd_verify)

    m = sub.add_parser("simulate", help="simulate the coupled closed loop")
    m.add_argument("--config", required=True)
    m.add_argument("--controller", required=True)
    m.add_argument("--scenario", required=True)
    m.add_argument("--seed", type=int)
    m.add_argument("--uncertified", action="store_true", help="run even if the controller fails verification")
    m.add_argument("-o", "--output", required=True)
    m.set_defaults(func=cmd_simulate)

    f = sub.add_parser("freqresp", help="frequency sweep of the heat-pump port")
    f.add_argument("--config", required=True)
    f.add_argument("--controller", required=True)
    f.add_argument("--grid", help="lo:hi:points_per_decade in rad/s, or a comma-separated list")
    f.add_argument("-o", "--output", required=True)
    f.set_defaults(func=cmd_freqresp)

    c = sub.add_parser("compare", help="joint/baseline metric ratios under sinusoidal load")
    c.add_argument("--config", required=True)
    c.add_argument("--joint", required=True)
    c.add_argument("--baseline", required=True)
    c.add_argument("--freqs", default=",".join(str(x) for x in sim.COMPARE_FREQUENCIES))
    c.add_argument("--amplitude", type=float, default=sim.COMPARE_AMPLITUDE)
    c.add_argument("--uncertified", action="store_true")
    c.add_argument("--jobs", type=int, default=1, help="parallel simulation runs")
    c.add_argument("-o", "--output", required=True)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except config_mod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
