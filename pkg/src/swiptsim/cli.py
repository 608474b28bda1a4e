"""Command-line front end: JSON scenario files, parameter sweeps, CSV output.

Config schema (every key optional, missing keys take the defaults of
:class:`~swiptsim.sim.ScenarioConfig`)::

    {
      "nodes": {"N": 6, "p": 0.1, "L": 20},        # or "profiles": [{"p":..,"L":..}, ...]
      "distance_range_m": [3, 10],
      "channel": {"rician_k": 3, "path_loss_exponent": 2,
                  "carrier_hz": 9e8, "reference_distance_m": 1},
      "noise": {"sigma2_dbm": -110, "delta2_dbm": -75},   # or "sigma2"/"delta2" in W
      "P_t_dbm": 20,                                   # or "P_t" in W
      "reliability": {"snr_min": 20, "rho_min": 0.01, "eta": 0.5},
      "policies": ["baseline", "sbp", {"kind": "bbp", "D": 2}, "genie"],
      "symbols": 1000, "repetitions": 500, "seed": 0,
      "csi_alpha": 0, "decide": "truth",
      "nonlinear": {"varphi": .., "psi": .., "phi": .., "T": ..}
    }

Keys ending in ``_dbm`` are converted to watts once, here.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from dataclasses import asdict, replace
from importlib import metadata
from pathlib import Path

from .channel import ChannelParams, NoiseParams
from .predictor import PredictorPolicy
from .psf import NonlinearHarvestParams, ReliabilityConfig, dbm_to_watts
from .sim import AXES, ScenarioConfig, run_experiment
from .traffic import NodeProfile

HEADER = ["axis", "value", "policy", "pharv_w", "pharv_dbuw", "violations", "mean_rho", "reps", "seed"]
FULL_REPETITIONS = 5000


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path}: {msg}")
        self.path = path


def _num(d: dict, key: str, path: str, default, *, lo=None, hi=None, lo_open=False, integer=False):
    if key not in d:
        return default
    v = d[key]
    where = f"{path}.{key}" if path else key
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(where, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        raise ConfigError(where, f"expected an integer, got {v!r}")
    if isinstance(v, float) and not math.isfinite(v):
        raise ConfigError(where, f"must be finite, got {v!r}")
    if lo is not None and (v <= lo if lo_open else v < lo):
        raise ConfigError(where, f"must be {'>' if lo_open else '>='} {lo}, got {v!r}")
    if hi is not None and v > hi:
        raise ConfigError(where, f"must be <= {hi}, got {v!r}")
    return int(v) if integer else float(v)


def _section(d: dict, key: str) -> dict:
    v = d.get(key, {})
    if not isinstance(v, dict):
        raise ConfigError(key, f"expected an object, got {type(v).__name__}")
    return v


def _no_extra(d: dict, allowed: set, path: str) -> None:
    extra = sorted(set(d) - allowed)
    if extra:
        where = f"{path}.{extra[0]}" if path else extra[0]
        raise ConfigError(where, "unknown key")


def _watts(d: dict, key: str, path: str, default: float, positive: bool = True) -> float:
    dbm = key + "_dbm"
    if key in d and dbm in d:
        raise ConfigError(f"{path}.{key}" if path else key, f"give either {key} or {dbm}, not both")
    if dbm in d:
        return dbm_to_watts(_num(d, dbm, path, None))
    return _num(d, key, path, default, lo=0.0, lo_open=positive)


def _profile(d, path: str, default: NodeProfile) -> NodeProfile:
    if not isinstance(d, dict):
        raise ConfigError(path, "expected an object")
    _no_extra(d, {"p", "L"}, path)
    p = _num(d, "p", path, default.p, lo=0.0, lo_open=True, hi=1.0)
    L = _num(d, "L", path, default.L, lo=1, integer=True)
    return NodeProfile(p, L)


def _policy(v, path: str) -> PredictorPolicy:
    try:
        if isinstance(v, str):
            return PredictorPolicy.parse(v)
        if isinstance(v, dict):
            _no_extra(v, {"kind", "D", "prob_threshold", "reset_period", "lag", "history_rule"}, path)
            if "kind" not in v:
                raise ConfigError(f"{path}.kind", "missing")
            return PredictorPolicy(**v)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from None
    raise ConfigError(path, f"expected a policy name or object, got {v!r}")


def config_from_dict(d: dict) -> ScenarioConfig:
    """Validate a decoded config document and fill in defaults."""
    if not isinstance(d, dict):
        raise ConfigError("<root>", "expected an object")
    _no_extra(
        d,
        {"nodes", "profiles", "distance_range_m", "channel", "noise", "P_t", "P_t_dbm", "reliability",
         "policies", "symbols", "repetitions", "seed", "csi_alpha", "decide", "nonlinear"},
        "",
    )
    base = ScenarioConfig()
    if "nodes" in d and "profiles" in d:
        raise ConfigError("nodes", "give either nodes or profiles, not both")
    if "profiles" in d:
        if not isinstance(d["profiles"], list) or not d["profiles"]:
            raise ConfigError("profiles", "expected a non-empty list")
        profiles = tuple(_profile(x, f"profiles[{i}]", base.profiles[0]) for i, x in enumerate(d["profiles"]))
    else:
        nodes = _section(d, "nodes")
        _no_extra(nodes, {"N", "p", "L"}, "nodes")
        N = _num(nodes, "N", "nodes", base.N, lo=1, integer=True)
        prof = _profile({k: nodes[k] for k in ("p", "L") if k in nodes}, "nodes", base.profiles[0])
        profiles = tuple(prof for _ in range(N))

    dr = d.get("distance_range_m", list(base.distance_range))
    if not (isinstance(dr, list) and len(dr) == 2):
        raise ConfigError("distance_range_m", "expected [low, high]")
    lo = _num({"0": dr[0]}, "0", "distance_range_m", None, lo=0.0, lo_open=True)
    hi = _num({"1": dr[1]}, "1", "distance_range_m", None, lo=lo)

    ch = _section(d, "channel")
    _no_extra(ch, {"rician_k", "path_loss_exponent", "carrier_hz", "reference_distance_m"}, "channel")
    c0 = base.channel
    channel = ChannelParams(
        rician_k=_num(ch, "rician_k", "channel", c0.rician_k, lo=0.0),
        path_loss_exponent=_num(ch, "path_loss_exponent", "channel", c0.path_loss_exponent, lo=0.0),
        carrier_hz=_num(ch, "carrier_hz", "channel", c0.carrier_hz, lo=0.0, lo_open=True),
        reference_distance_m=_num(ch, "reference_distance_m", "channel", c0.reference_distance_m, lo=0.0, lo_open=True),
    )

    nz = _section(d, "noise")
    _no_extra(nz, {"sigma2", "sigma2_dbm", "delta2", "delta2_dbm"}, "noise")
    noise = NoiseParams(
        _watts(nz, "sigma2", "noise", base.noise.sigma2, positive=False),
        _watts(nz, "delta2", "noise", base.noise.delta2, positive=False),
    )
    P_t = _watts(d, "P_t", "", base.P_t)

    rl = _section(d, "reliability")
    _no_extra(rl, {"snr_min", "rho_min", "eta"}, "reliability")
    r0 = base.reliability
    reliability = ReliabilityConfig(
        _num(rl, "snr_min", "reliability", r0.snr_min_linear, lo=0.0, lo_open=True),
        _num(rl, "rho_min", "reliability", r0.rho_min, lo=0.0, lo_open=True, hi=1.0),
        _num(rl, "eta", "reliability", r0.eta, lo=0.0, hi=1.0),
    )

    policies = base.policies
    if "policies" in d:
        if not isinstance(d["policies"], list) or not d["policies"]:
            raise ConfigError("policies", "expected a non-empty list")
        policies = tuple(_policy(v, f"policies[{i}]") for i, v in enumerate(d["policies"]))

    nonlinear = None
    if d.get("nonlinear") is not None:
        nl = _section(d, "nonlinear")
        _no_extra(nl, {"varphi", "psi", "phi", "T"}, "nonlinear")
        missing = [k for k in ("varphi", "psi", "phi", "T") if k not in nl]
        if missing:
            raise ConfigError(f"nonlinear.{missing[0]}", "missing")
        nonlinear = NonlinearHarvestParams(
            **{k: _num(nl, k, "nonlinear", None, lo=0.0, lo_open=True) for k in ("varphi", "psi", "phi", "T")}
        )

    decide = d.get("decide", base.decide)
    if decide not in ("truth", "jd"):
        raise ConfigError("decide", f"expected 'truth' or 'jd', got {decide!r}")

    try:
        return ScenarioConfig(
            profiles=profiles,
            distance_range=(lo, hi),
            channel=channel,
            noise=noise,
            P_t=P_t,
            reliability=reliability,
            policies=policies,
            M=_num(d, "symbols", "", base.M, lo=1, integer=True),
            repetitions=_num(d, "repetitions", "", base.repetitions, lo=1, integer=True),
            seed=_num(d, "seed", "", base.seed, lo=0, integer=True),
            csi_alpha=_num(d, "csi_alpha", "", base.csi_alpha, lo=0.0),
            nonlinear=nonlinear,
            decide=decide,
        )
    except ValueError as exc:
        raise ConfigError("<root>", str(exc)) from None


def parse_config(path) -> ScenarioConfig:
    """Read and validate a JSON scenario file; an empty file means defaults."""
    text = Path(path).read_text()
    if not text.strip():
        return ScenarioConfig()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<root>", f"invalid JSON: {exc}") from None
    return config_from_dict(doc)


def config_to_dict(cfg: ScenarioConfig) -> dict:
    """Canonical document (watts, explicit profiles) that parses back to ``cfg``."""
    pols = []
    for p in cfg.policies:
        e = {"kind": p.kind}
        for k, v in asdict(p).items():
            if k != "kind" and v != getattr(PredictorPolicy(p.kind), k):
                e[k] = v
        pols.append(e)
    return {
        "profiles": [{"p": pr.p, "L": pr.L} for pr in cfg.profiles],
        "distance_range_m": list(cfg.distance_range),
        "channel": asdict(cfg.channel),
        "noise": {"sigma2": cfg.noise.sigma2, "delta2": cfg.noise.delta2},
        "P_t": cfg.P_t,
        "reliability": {
            "snr_min": cfg.reliability.snr_min_linear,
            "rho_min": cfg.reliability.rho_min,
            "eta": cfg.reliability.eta,
        },
        "policies": pols,
        "symbols": cfg.M,
        "repetitions": cfg.repetitions,
        "seed": cfg.seed,
        "csi_alpha": cfg.csi_alpha,
        "decide": cfg.decide,
        "nonlinear": asdict(cfg.nonlinear) if cfg.nonlinear else None,
    }


def serialize_config(cfg: ScenarioConfig) -> str:
    return json.dumps(config_to_dict(cfg), sort_keys=True, indent=2) + "\n"


def config_hash(cfg: ScenarioConfig) -> str:
    canon = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def parse_sweep(spec: str) -> tuple[str, list]:
    """``N=2..8`` (inclusive integer range) or ``alpha=0,1e-4,1e-3``."""
    if "=" not in spec:
        raise ValueError(f"sweep must look like axis=values, got {spec!r}")
    axis, vals = (s.strip() for s in spec.split("=", 1))
    if axis not in AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {', '.join(AXES)}")
    integer = axis in ("N", "L", "D")
    if ".." in vals:
        a, b = vals.split("..", 1)
        lo, hi = int(a), int(b)
        if hi < lo:
            raise ValueError(f"empty range {vals!r}")
        return axis, list(range(lo, hi + 1))
    out = [float(v) for v in vals.split(",") if v.strip()]
    if not out:
        raise ValueError(f"no values in {spec!r}")
    if integer:
        if any(v != int(v) for v in out):
            raise ValueError(f"axis {axis} takes integers")
        out = [int(v) for v in out]
    return axis, out


def _fmt(x) -> str:
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    return f"{float(x):.17e}"


def format_row(axis: str, value, m, seed: int) -> list[str]:
    return [
        axis,
        "" if value is None else _fmt(value),
        m.policy,
        _fmt(m.pharv_w),
        _fmt(m.pharv_dbuw),
        _fmt(m.violation_fraction),
        _fmt(m.mean_rho),
        str(m.reps),
        str(seed),
    ]


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="swiptsim", description="Relay harvesting simulator with predicted splitting factors.")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario or a sweep and write a CSV")
    run.add_argument("--config", type=Path, help="JSON scenario file")
    run.add_argument("--sweep", help="axis=values, e.g. N=2..8 or alpha=0,1e-4,1e-3")
    run.add_argument("--policies", help="comma list, e.g. baseline,sbp,bbp2,genie")
    run.add_argument("--seed", type=int)
    run.add_argument("--reps", type=int, help="Monte Carlo repetitions")
    run.add_argument("--symbols", type=int, help="symbols per repetition")
    run.add_argument("--full", action="store_true", help=f"{FULL_REPETITIONS} repetitions")
    run.add_argument(
        "--csi", nargs="?", type=float, const=1e-2, default=None, metavar="ALPHA",
        help="imperfect channel knowledge (uncertainty factor, default 1e-2)",
    )
    run.add_argument("--out", type=Path, default=Path("results.csv"))
    run.add_argument("--workers", type=int, default=1)

    show = sub.add_parser("config", help="print the resolved configuration")
    show.add_argument("--config", type=Path)
    return ap


def resolve_config(args) -> ScenarioConfig:
    cfg = parse_config(args.config) if args.config else ScenarioConfig()
    upd = {}
    if getattr(args, "policies", None):
        upd["policies"] = tuple(PredictorPolicy.parse(p) for p in args.policies.split(",") if p.strip())
    if getattr(args, "seed", None) is not None:
        upd["seed"] = args.seed
    if getattr(args, "full", False):
        upd["repetitions"] = FULL_REPETITIONS
    if getattr(args, "reps", None) is not None:
        upd["repetitions"] = args.reps
    if getattr(args, "symbols", None) is not None:
        upd["M"] = args.symbols
    if getattr(args, "csi", None) is not None:
        upd["csi_alpha"] = args.csi
    return replace(cfg, **upd) if upd else cfg


def write_manifest(path: Path, cfg: ScenarioConfig, axis, values, rows: int, partial: bool, error: str | None) -> None:
    doc = {
        "version": _version(),
        "seed": cfg.seed,
        "config_hash": config_hash(cfg),
        "config": config_to_dict(cfg),
        "sweep": {"axis": axis, "values": values},
        "policies": [p.name for p in cfg.policies],
        "rows": rows,
        "partial": partial,
        "error": error,
    }
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def run_command(args) -> int:
    try:
        cfg = resolve_config(args)
        axis, values = parse_sweep(args.sweep) if args.sweep else ("none", [None])
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    out: Path = args.out
    out.parent.mkdir(parents=True, exist_ok=True)
    manifest = out.with_name(out.name + ".manifest.json")
    rows = 0
    error = None
    with out.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEADER)
        fh.flush()
        for v in values:
            try:
                point = cfg if v is None else cfg.with_value(axis, v)
                res = run_experiment(point, workers=args.workers)
            except Exception as exc:  # noqa: BLE001 - report and keep what we have
                error = f"{axis}={v}: {type(exc).__name__}: {exc}"
                break
            for p in point.policies:
                w.writerow(format_row(axis, v, res[p.name], cfg.seed))
                rows += 1
            fh.flush()
    write_manifest(manifest, cfg, axis, values if values != [None] else [], rows, error is not None, error)
    if error:
        print(f"error: {error} (partial results in {out})", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "config":
        try:
            cfg = resolve_config(args)
        except (ValueError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        sys.stdout.write(serialize_config(cfg))
        return 0
    return run_command(args)


if __name__ == "__main__":
    sys.exit(main())
