"""Command line interface.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure,
3 I/O error.

Run configuration (JSON)::

    {
      "n": 2, "N": 32, "scale": 1.0, "c": 1.0,
      "ic": {"family": "random_bandlimited", "kmax": 3, "amplitude": 0.5, "seed": 7},
      "t_end": 0.01, "sigma": 0.5, "dt_min": 1e-18, "ca_stop": null,
      "record_every": 100, "m_segments": 64, "seed": 0
    }

Initial-condition families: ``flat``; ``cosine`` with ``modes``, a list of
``[k, amplitude, phase]`` triples; ``random_bandlimited`` with ``kmax``,
``amplitude`` and ``seed``.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from importlib import metadata
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import initial
from .errors import CalabiFlowError, NumericalError
from .flow import FlowConfig, FlowTrace, blowup_center, run
from .geometry import energies, riemann_norm, scalar_curvature, trace_pairing
from .io import CsvRecorder, load_snapshot, read_csv, save_snapshot, write_json
from .legendre import KahlerPotential, to_kahler, to_symplectic
from .potential import SymplecticPotential, m_condition_estimate, rescale
from .torus_field import GridSpec, PeriodicField, integrate

__all__ = ["main", "parse_config", "build_initial", "ConfigError"]

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3

_FLOW_KEYS = ("t_end", "sigma", "dt_min", "ca_stop", "record_every", "m_segments", "seed")
_TOP_KEYS = {"n", "N", "scale", "c", "ic"} | set(_FLOW_KEYS)


class ConfigError(CalabiFlowError, ValueError):
    """Configuration does not follow the schema; the message names the field."""


def _get(d, key, kind, where, default=None, required=False):
    if key not in d or d[key] is None:
        if required:
            raise ConfigError(f"missing field '{where}{key}'")
        return default
    v = d[key]
    ok = {
        "int": isinstance(v, int) and not isinstance(v, bool),
        "num": isinstance(v, (int, float)) and not isinstance(v, bool),
        "str": isinstance(v, str),
        "list": isinstance(v, list),
        "dict": isinstance(v, dict),
    }[kind]
    if not ok:
        raise ConfigError(f"field '{where}{key}' must be of type {kind}, got {v!r}")
    return float(v) if kind == "num" else v


def parse_config(source):
    """Validate a run configuration (path or dict).

    Returns ``(FlowConfig, GridSpec, c, ic)`` where ``ic`` is the validated
    initial-condition description.
    """
    if isinstance(source, dict):
        d = source
    else:
        with open(source, encoding="utf-8") as fh:
            d = json.load(fh)
    if not isinstance(d, dict):
        raise ConfigError("configuration must be a JSON object")
    unknown = sorted(set(d) - _TOP_KEYS)
    if unknown:
        raise ConfigError(f"unknown field '{unknown[0]}'")
    n = _get(d, "n", "int", "", required=True)
    N = _get(d, "N", "int", "", required=True)
    scale = _get(d, "scale", "num", "", 1.0)
    c = _get(d, "c", "num", "", 1.0)
    try:
        spec = GridSpec(n, N, scale)
    except ValueError as exc:
        raise ConfigError(f"field 'n'/'N'/'scale': {exc}") from None
    if not c > 0:
        raise ConfigError("field 'c' must be positive")

    kw = {"t_end": _get(d, "t_end", "num", "", required=True)}
    for key, kind in (("sigma", "num"), ("dt_min", "num"), ("ca_stop", "num"),
                      ("record_every", "int"), ("m_segments", "int"), ("seed", "int")):
        v = _get(d, key, kind, "")
        if v is not None:
            kw[key] = v
    try:
        config = FlowConfig(**kw)
    except ValueError as exc:
        field = str(exc).split()[0]
        raise ConfigError(f"field '{field}': {exc}") from None

    ic = _get(d, "ic", "dict", "", required=True)
    ic = _parse_ic(ic, n)
    return config, spec, c, ic


def _parse_ic(ic: dict, n: int) -> dict:
    family = _get(ic, "family", "str", "ic.", required=True)
    if family == "flat":
        return {"family": "flat"}
    if family == "cosine":
        modes = _get(ic, "modes", "list", "ic.", required=True)
        out = []
        for i, m in enumerate(modes):
            where = f"ic.modes[{i}]"
            if not (isinstance(m, list) and len(m) == 3):
                raise ConfigError(f"field '{where}' must be [k, amplitude, phase]")
            k, amp, phase = m
            if not (isinstance(k, list) and len(k) == n and all(isinstance(v, int) for v in k)):
                raise ConfigError(f"field '{where}.k' must be a list of {n} integers")
            for name, v in (("amplitude", amp), ("phase", phase)):
                if not isinstance(v, (int, float)) or isinstance(v, bool):
                    raise ConfigError(f"field '{where}.{name}' must be a number")
            out.append([list(k), float(amp), float(phase)])
        return {"family": "cosine", "modes": out}
    if family == "random_bandlimited":
        kmax = _get(ic, "kmax", "num", "ic.", required=True)
        amp = _get(ic, "amplitude", "num", "ic.", required=True)
        seed = _get(ic, "seed", "int", "ic.", required=True)
        if not kmax >= 1:
            raise ConfigError("field 'ic.kmax' must be >= 1")
        if not amp >= 0:
            raise ConfigError("field 'ic.amplitude' must be nonnegative")
        return {"family": family, "kmax": kmax, "amplitude": amp, "seed": seed}
    raise ConfigError(f"field 'ic.family': unknown family {family!r}")


def build_initial(spec: GridSpec, c: float, ic: dict) -> SymplecticPotential:
    """Sample the initial potential; raises ConvexityError if not convex."""
    family = ic["family"]
    if family == "flat":
        return initial.flat(spec, c)
    if family == "cosine":
        return initial.cosine(spec, [tuple(m) for m in ic["modes"]], c)
    try:
        return initial.random_bandlimited(spec, ic["kmax"], ic["amplitude"], ic["seed"], c)
    except ValueError as exc:
        if isinstance(exc, CalabiFlowError):
            raise
        raise ConfigError(f"field 'ic': {exc}") from None


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:  # pragma: no cover
        return "unknown"


def _iso(ts: float) -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(ts))


# --- commands -----------------------------------------------------------------


def cmd_run(args) -> int:
    config, spec, c, ic = parse_config(args.config)
    u0 = build_initial(spec, c, ic)
    out = Path(args.out)
    snapdir = out / "snapshots"
    snapdir.mkdir(parents=True, exist_ok=True)
    started = time.time()
    trace: Optional[FlowTrace] = None
    failure = None
    with CsvRecorder(out / "run.csv") as rec:
        try:
            trace = run(u0, config, on_record=rec)
        except NumericalError as exc:
            trace = getattr(exc, "trace", None)
            failure = exc
    if trace is not None:
        for i, (t, u) in enumerate(trace.snapshots):
            save_snapshot(u, snapdir / f"snap_{i:06d}.json", t)
    manifest = {
        "tool": "calabiflow",
        "version": _version(),
        "config": {k: v for k, v in asdict(config).items()},
        "grid": {"n": spec.n, "N": spec.N, "scale": spec.scale, "h": spec.h, "c": c},
        "initial_condition": ic,
        "started": _iso(started),
        "stopped": _iso(time.time()),
        "termination": trace.termination if trace is not None else "stiffness_failure",
        "records": len(trace.records) if trace is not None else 0,
        "snapshots": len(trace.snapshots) if trace is not None else 0,
    }
    if failure is not None:
        manifest["error"] = str(failure)
    write_json(manifest, out / "manifest.json")
    if failure is not None:
        raise failure
    print(f"{manifest['termination']}: {manifest['records']} records written to {out}")
    return EXIT_OK


def _as_symplectic(pot) -> SymplecticPotential:
    return to_symplectic(pot) if isinstance(pot, KahlerPotential) else pot


def analyze_potential(u: SymplecticPotential, m_segments: int = 64, seed: int = 0) -> dict:
    """Every single-potential diagnostic as a JSON-ready dict."""
    spec = u.spec
    hd = u.hessian
    S = scalar_curvature(u).values
    rm = riemann_norm(u).values
    lo, hi = float(hd.eig_min.min()), float(hd.eig_max.max())
    report = {k: float(v) for k, v in energies(u).items()}
    report.update(
        S_min=float(S.min()),
        S_max=float(S.max()),
        max_Rm=float(rm.max()),
        total_energy_n=float(integrate(PeriodicField(spec, rm**spec.n))),
        eig_min=lo,
        eig_max=hi,
        M_estimate=m_condition_estimate(u, m_segments, seed).M_estimate,
        inj_proxy=0.5 * spec.scale * min(np.sqrt(lo), 1.0 / np.sqrt(hi)),
        trace_pairing_max=float(trace_pairing(u).values.max()),
    )
    return report


def cmd_analyze(args) -> int:
    pot, t = load_snapshot(args.snapshot)
    report = {"t": t, **analyze_potential(_as_symplectic(pot))}
    text = json.dumps(report, indent=1, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    else:
        print(text)
    return EXIT_OK


def cmd_blowup(args) -> int:
    pot, t = load_snapshot(args.snapshot)
    u = _as_symplectic(pot)
    lam, p = blowup_center(u)
    v = rescale(u, lam, p)
    out = Path(args.out) if args.out else Path(args.snapshot).with_name(
        Path(args.snapshot).stem + "_blowup.json"
    )
    save_snapshot(v, out, t)
    origin = (v.spec.N // 2,) * v.spec.n
    report = {
        "t": t,
        "lam": lam,
        "time_dilation": lam * lam,
        "center": [float(x) for x in p],
        "Rm_at_origin": float(riemann_norm(v).values[origin]),
        "output": str(out),
    }
    print(json.dumps(report, indent=1, sort_keys=True))
    return EXIT_OK


def cmd_legendre(args) -> int:
    pot, t = load_snapshot(args.snapshot)
    if args.direction == "to-kahler":
        if isinstance(pot, KahlerPotential):
            raise ConfigError("snapshot already holds a Kahler-side potential")
        res = to_kahler(pot)
    else:
        if not isinstance(pot, KahlerPotential):
            raise ConfigError("snapshot holds a symplectic potential")
        res = to_symplectic(pot)
    out = Path(args.out) if args.out else Path(args.snapshot).with_name(
        Path(args.snapshot).stem + "_" + args.direction.replace("to-", "") + ".json"
    )
    save_snapshot(res, out, t)
    print(str(out))
    return EXIT_OK


def cmd_plot(args) -> int:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    data = read_csv(args.csv)
    cols = [c.strip() for c in args.cols.split(",") if c.strip()]
    if "t" not in data:
        raise ConfigError(f"{args.csv}: no 't' column")
    for c in cols:
        if c not in data:
            raise ConfigError(f"unknown column '{c}'")
    plt.rcParams["svg.hashsalt"] = "calabiflow"
    fig, ax = plt.subplots(figsize=(6, 4))
    for c in cols:
        y = data[c]
        x = data["t"]
        if args.log:
            keep = y > 0
            x, y = x[keep], y[keep]
        ax.plot(x, y, label=c)
    if args.log:
        ax.set_yscale("log")
    ax.set_xlabel("t")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="calabiflow", description="Calabi flow on a periodic torus grid.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="integrate the flow from a JSON configuration")
    r.add_argument("config")
    r.add_argument("--out", required=True, help="output directory")
    r.set_defaults(func=cmd_run)

    a = sub.add_parser("analyze", help="diagnostics of a stored potential as JSON")
    a.add_argument("snapshot")
    a.add_argument("--out", help="write JSON here instead of stdout")
    a.set_defaults(func=cmd_analyze)

    b = sub.add_parser("blowup", help="rescale a snapshot around its curvature maximum")
    b.add_argument("snapshot")
    b.add_argument("--out")
    b.set_defaults(func=cmd_blowup)

    lg = sub.add_parser("legendre", help="Legendre-transform a stored potential")
    lg.add_argument("snapshot")
    lg.add_argument("--direction", required=True, choices=["to-kahler", "to-symplectic"])
    lg.add_argument("--out")
    lg.set_defaults(func=cmd_legendre)

    pl = sub.add_parser("plot", help="SVG line chart of CSV columns against t")
    pl.add_argument("csv")
    pl.add_argument("--cols", default="Ca")
    pl.add_argument("--log", action="store_true")
    pl.add_argument("--out", required=True)
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
