"""Command-line entry point: ``expzeros <subcommand> [options]``.

Every subcommand takes ``--config`` (TOML), ``--output`` and ``--format``.
Values given on the command line override the TOML file, which overrides the
built-in defaults.  When an output file is written a manifest
``<output>.manifest.json`` records the effective configuration, its hash,
timings and warnings.

Exit codes: 0 on success, 2 on success with warnings (flagged quadrature,
count mismatches, bound violations, ...), 1 on error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
import time
from contextlib import contextmanager
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import tomli

from . import __version__
from ._parallel import default_workers
from .ensembles import (
    HermitianBasisSpace,
    averaged_count_1d,
    crofton_check,
    exponential_sum_space,
    quasi_polynomial_space,
    regularity_profile,
)
from .monge_ampere import QuadratureSpec, mixed_pvol, pvol
from .spectrum import (
    QuasiPolynomial,
    Spectrum,
    _complex,
    load_quasi_polynomial,
    load_spectrum,
    spectrum_from_json,
)
from .systems2d import SearchRegion, default_tube_bound, solve_system
from .zeros1d import ContourSpec, count_zeros_disk, density_slope, locate_zeros_disk

EXIT_OK, EXIT_ERROR, EXIT_FLAGGED = 0, 1, 2

DEFAULTS = {
    "common": {"format": "json", "seed": 0, "workers": None},
    "quadrature": {
        "method": "auto",
        "samples": None,
        "radius": 1.0,
        "epsilons": None,
        "extrapolate": True,
        "order": 2,
        "batches": 16,
        "tolerance": None,
    },
    "pvol": {"spectrum": None},
    "mixed-pvol": {"spectra": None},
    "zeros": {"f": None, "radius": [10.0], "center": 0.0, "locate": False},
    "density": {"f": None, "radii": None, "r_min": 20.0, "r_max": 100.0, "num": 17},
    "systems": {"f1": None, "f2": None, "radius": 10.0, "tube": None, "grid": 8},
    "theorem1": {"f": None, "f1": None, "f2": None, "radius": [10.0], "tube": None, "grid": 8,
                 "t": [10.0, 25.0, 50.0, 100.0]},
    "average": {"space": None, "t": [10.0, 25.0, 50.0], "radius": 1.0, "trials": 200},
    "regularity": {"space": None, "spectrum": None, "t": [10.0, 25.0, 50.0, 100.0],
                   "samples": None, "eps": 0.1, "at": None},
    "crofton": {"space": None, "radius": 20.0, "trials": 400},
}


class RunContext:
    """Collects timings, warnings and notes for the manifest."""

    def __init__(self, command: str, config: dict):
        self.command = command
        self.config = config
        self.timings: dict[str, float] = {}
        self.warnings: list[str] = []
        self.notes: list[str] = []
        self.start = time.perf_counter()

    @contextmanager
    def stage(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.timings[name] = self.timings.get(name, 0.0) + time.perf_counter() - t0

    def manifest(self, outputs: list[str], exit_code: int, error: str | None = None) -> dict:
        blob = json.dumps(self.config, sort_keys=True, default=str).encode()
        return {
            "command": self.command,
            "version": __version__,
            "config": self.config,
            "config_hash": hashlib.sha256(blob).hexdigest(),
            "started": datetime.now(timezone.utc).isoformat(),
            "wall_clock": time.perf_counter() - self.start,
            "timings": self.timings,
            "warnings": self.warnings,
            "notes": self.notes,
            "outputs": outputs,
            "exit_code": exit_code,
            "error": error,
        }


# --------------------------------------------------------------------------
# configuration


def load_toml(path) -> dict:
    with open(path, "rb") as fh:
        return tomli.load(fh)


def effective_config(command: str, args: argparse.Namespace) -> dict:
    """Defaults, then the TOML file (top level, [quadrature], [<command>]), then CLI flags."""
    cfg = dict(DEFAULTS["common"])
    if command in ("pvol", "mixed-pvol", "theorem1"):
        cfg.update(DEFAULTS["quadrature"])
    cfg.update(DEFAULTS[command])
    toml = load_toml(args.config) if getattr(args, "config", None) else {}
    keys = set(cfg)
    for section in (toml, toml.get("quadrature", {}), toml.get(command, {})):
        for k, v in section.items():
            k = k.replace("-", "_")
            if k in keys and not isinstance(v, dict):
                cfg[k] = v
    for k in keys:
        v = getattr(args, k, None)
        if v is not None:
            cfg[k] = v
    if cfg.get("workers") is None:
        cfg["workers"] = default_workers()
    return cfg


def _quadrature(cfg: dict) -> QuadratureSpec:
    eps = cfg["epsilons"]
    return QuadratureSpec(
        method=cfg["method"],
        samples=cfg["samples"],
        radius=float(cfg["radius"]) if not isinstance(cfg["radius"], list) else 1.0,
        epsilons=tuple(eps) if eps else None,
        extrapolate=bool(cfg["extrapolate"]),
        order=int(cfg["order"]),
        seed=int(cfg["seed"]),
        batches=int(cfg["batches"]),
        tolerance=cfg["tolerance"],
        workers=cfg["workers"],
    )


def _require(cfg: dict, *keys):
    for k in keys:
        if cfg.get(k) in (None, [], ""):
            raise ValueError(f"missing required parameter {k!r}")
        if k in ("spectrum", "f", "f1", "f2", "space") and not Path(cfg[k]).exists():
            raise FileNotFoundError(cfg[k])


def _gram(data) -> np.ndarray:
    return np.array([[_complex(c) for c in row] for row in data], dtype=complex)


def load_space(path) -> HermitianBasisSpace:
    """Space file: ``{"kind": "exponential_sum"|"quasi_polynomial", "spectrum": ...,
    "degree": d, "gram": ...}`` or ``{"basis": [<quasi-polynomial>...], "gram": ...,
    "spectrum": ...}``.  Gram entries are numbers or ``[re, im]`` pairs."""
    data = json.loads(Path(path).read_text())
    gram = _gram(data["gram"]) if "gram" in data else None
    if "basis" in data:
        basis = tuple(QuasiPolynomial.from_json(b) for b in data["basis"])
        K = spectrum_from_json(data["spectrum"]) if "spectrum" in data else None
        if K is None:
            K = Spectrum.from_points(np.concatenate([b.freqs for b in basis]))
        gram = np.eye(len(basis)) if gram is None else gram
        return HermitianBasisSpace(basis, gram, K)
    K = spectrum_from_json(data["spectrum"])
    kind = data.get("kind", "exponential_sum")
    if kind == "exponential_sum":
        return exponential_sum_space(K, gram)
    if kind == "quasi_polynomial":
        return quasi_polynomial_space(K, int(data.get("degree", 0)), gram)
    raise ValueError(f"unknown space kind {kind!r}")


# --------------------------------------------------------------------------
# output


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, complex):
        return [x.real, x.imag]
    if isinstance(x, float) and not math.isfinite(x):
        return None
    return x


def render(payload: dict, rows: list[dict] | None, fmt: str) -> str:
    if fmt == "csv":
        if not rows:
            rows = [{k: v for k, v in payload.items() if not isinstance(v, (list, dict))}]
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for r in rows:
            r = _jsonable(r)
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
        return buf.getvalue()
    return json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n"


PLOT_TEMPLATE = '''"""Plot {x} against {y} from {data}."""
import csv
import matplotlib.pyplot as plt

with open({data!r}) as fh:
    rows = list(csv.DictReader(fh))
xs = [float(r[{x!r}]) for r in rows]
ys = [float(r[{y!r}]) for r in rows]
plt.plot(xs, ys, "o-")
plt.xlabel({x!r})
plt.ylabel({y!r})
plt.savefig({data!r} + ".png", dpi=150)
'''

PLOT_AXES = {
    "zeros": ("radius", "count"),
    "density": ("radius", "count"),
    "theorem1": ("radius", "count"),
    "average": ("t", "mean"),
    "regularity": ("t", "sup_deviation"),
    "pvol": ("epsilon", "value"),
}


# --------------------------------------------------------------------------
# subcommands; each returns (payload, csv rows)


def cmd_pvol(cfg, ctx: RunContext):
    _require(cfg, "spectrum")
    K = load_spectrum(cfg["spectrum"])
    with ctx.stage("pvol"):
        res = pvol(K, _quadrature(cfg))
    if res.flagged:
        ctx.warnings += res.warnings
    out = res.to_json()
    return out, out["table"] or [{"epsilon": 0.0, "value": res.value, "error": res.error}]


def cmd_mixed_pvol(cfg, ctx: RunContext):
    spectra = cfg["spectra"]
    if not spectra:
        raise ValueError("missing required parameter 'spectra'")
    Ks = [load_spectrum(p) for p in spectra]
    with ctx.stage("mixed_pvol"):
        res = mixed_pvol(Ks, _quadrature(cfg))
    if res.flagged:
        ctx.warnings += res.warnings
    out = res.to_json()
    return out, [{"value": res.value, "error": res.error}]


def _radii(cfg) -> list[float]:
    r = cfg["radius"]
    return [float(x) for x in (r if isinstance(r, list) else [r])]


def cmd_zeros(cfg, ctx: RunContext):
    _require(cfg, "f")
    f = load_quasi_polynomial(cfg["f"])
    spec = ContourSpec(center=complex(cfg["center"]))
    reports = []
    with ctx.stage("count"):
        for r in _radii(cfg):
            reports.append(count_zeros_disk(f, spec, radius=r))
    rows = [rep.as_row() for rep in reports]
    jit = sum(rep.jitters for rep in reports)
    if jit:
        ctx.notes.append(f"{jit} contour jitter(s) applied")
    payload = {"counts": rows}
    if cfg["locate"]:
        import warnings as _w

        with ctx.stage("locate"), _w.catch_warnings(record=True) as caught:
            _w.simplefilter("always")
            zs = locate_zeros_disk(f, spec, radius=max(_radii(cfg)))
        ctx.warnings += [str(w.message) for w in caught]
        payload["zeros"] = [{"re": z.location.real, "im": z.location.imag, "multiplicity": z.multiplicity} for z in zs]
    return payload, rows


def cmd_density(cfg, ctx: RunContext):
    _require(cfg, "f")
    f = load_quasi_polynomial(cfg["f"])
    radii = cfg["radii"] or np.linspace(cfg["r_min"], cfg["r_max"], int(cfg["num"])).tolist()
    with ctx.stage("density"):
        slope, intercept, resid, reports = density_slope(f, radii)
    jit = sum(rep.jitters for rep in reports)
    if jit:
        ctx.notes.append(f"{jit} contour jitter(s) applied")
    rows = [{"radius": rep.radius, "count": rep.count, "slope": slope} for rep in reports]
    payload = {"slope": slope, "intercept": intercept, "rms_residual": resid, "table": [rep.as_row() for rep in reports]}
    return payload, rows


def cmd_systems(cfg, ctx: RunContext):
    _require(cfg, "f1", "f2")
    f1, f2 = load_quasi_polynomial(cfg["f1"]), load_quasi_polynomial(cfg["f2"])
    r = float(cfg["radius"])
    tube = cfg["tube"] if cfg["tube"] is not None else default_tube_bound(f1, f2)
    with ctx.stage("solve"):
        roots = solve_system(f1, f2, SearchRegion(tube=float(tube), radius=r, grid=int(cfg["grid"]))).within(r)
    ctx.warnings += roots.warnings
    rows = roots.rows()
    return {"count": len(roots), "radius": r, "tube": float(tube), "roots": rows}, rows


def cmd_theorem1(cfg, ctx: RunContext):
    if cfg["f"]:
        _require(cfg, "f")
        fs = [load_quasi_polynomial(cfg["f"])]
    else:
        _require(cfg, "f1", "f2")
        fs = [load_quasi_polynomial(cfg["f1"]), load_quasi_polynomial(cfg["f2"])]
    n = fs[0].n
    if n != len(fs) or n not in (1, 2):
        raise ValueError("theorem1 takes one function of one variable or two of two variables")
    spectra = [f.spectrum for f in fs]
    q = _quadrature(dict(cfg, radius=1.0))
    with ctx.stage("pseudo_volume"):
        mp = mixed_pvol(spectra, q)
    if mp.flagged:
        ctx.warnings += mp.warnings
    with ctx.stage("regularity"):
        profiles = []
        for K in spectra:
            if len(K) == 1:
                continue
            prof = regularity_profile(exponential_sum_space(K), K, cfg["t"], seed=cfg["seed"])
            profiles.append({"sup_deviation": prof.sup_deviation.tolist(), "violations": prof.violations})
            if prof.violations:
                ctx.warnings.append(f"upper bound violated in {prof.violations} profile point(s)")
    rows = []
    for r in _radii(cfg):
        pred = mp.value * r**n / math.pi**n
        with ctx.stage("count"):
            if n == 1:
                rep = count_zeros_disk(fs[0], radius=r)
                count = rep.count
                if rep.jitters:
                    ctx.notes.append(f"radius {r:g}: {rep.jitters} jitter(s)")
            else:
                tube = cfg["tube"] if cfg["tube"] is not None else default_tube_bound(*fs)
                rs = solve_system(*fs, SearchRegion(tube=float(tube), radius=r, grid=int(cfg["grid"]))).within(r)
                ctx.warnings += rs.warnings
                count = len(rs)
        dev = abs(count - pred) / pred if pred > 0 else (0.0 if count == 0 else math.inf)
        rows.append({"radius": r, "prediction": pred, "count": count, "relative_deviation": dev})
    payload = {"n": n, "mixed_pvol": mp.value, "mixed_pvol_error": mp.error, "table": rows, "regularity": profiles}
    return payload, rows


def _spaces(cfg) -> list:
    paths = cfg["space"]
    paths = paths if isinstance(paths, list) else [paths]
    if not paths or paths == [None]:
        raise ValueError("missing required parameter 'space'")
    for p in paths:
        if not Path(p).exists():
            raise FileNotFoundError(p)
    return paths


def cmd_average(cfg, ctx: RunContext):
    paths = _spaces(cfg)
    rows, per_space = [], []
    for i, p in enumerate(paths):
        V = load_space(p)
        table = []
        for t in cfg["t"]:
            with ctx.stage(f"average[{i}]"):
                res = averaged_count_1d(V, float(t), float(cfg["radius"]), int(cfg["trials"]),
                                        seed=int(cfg["seed"]), workers=cfg["workers"])
            if res.resamples:
                ctx.notes.append(f"space {i}, t={t:g}: {res.resamples} resampled trial(s)")
            row = {"space": i, "t": float(t), "mean": res.mean, "stderr": res.stderr, "resamples": res.resamples}
            table.append(row)
            rows.append(row)
        per_space.append({"path": str(p), "table": table})
    payload = {"radius": float(cfg["radius"]), "trials": int(cfg["trials"]), "spaces": per_space}
    if len(paths) == 2:
        comp = []
        for a, b in zip(per_space[0]["table"], per_space[1]["table"]):
            s = math.hypot(a["stderr"], b["stderr"])
            comp.append({"t": a["t"], "difference": a["mean"] - b["mean"],
                         "zscore": abs(a["mean"] - b["mean"]) / s if s > 0 else 0.0})
        payload["comparison"] = comp
    return payload, rows


def cmd_regularity(cfg, ctx: RunContext):
    (path,) = _spaces(cfg)[:1]
    V = load_space(path)
    K = load_spectrum(cfg["spectrum"]) if cfg["spectrum"] else None
    with ctx.stage("profile"):
        prof = regularity_profile(V, K, cfg["t"], sphere_samples=cfg["samples"], seed=int(cfg["seed"]),
                                  eps=float(cfg["eps"]))
    ctx.warnings += prof.warnings
    if prof.violations:
        ctx.warnings.append(f"upper bound violated in {prof.violations} profile point(s)")
    rows = prof.rows()
    payload = {"rows": rows, "upper_c": prof.upper_c, "upper_eps": prof.upper_eps, "violations": prof.violations}
    if cfg["at"] is not None:
        z = [complex(s) for s in str(cfg["at"]).split(",")]
        payload["deviation_at"] = {"z": [[c.real, c.imag] for c in z], "deviations": prof.deviation_at(z).tolist()}
    return payload, rows


def cmd_crofton(cfg, ctx: RunContext):
    (path,) = _spaces(cfg)[:1]
    V = load_space(path)
    with ctx.stage("crofton"):
        chk = crofton_check(V, float(cfg["radius"]), int(cfg["trials"]), seed=int(cfg["seed"]), workers=cfg["workers"])
    if chk.zscore > 2:
        ctx.warnings.append(f"Monte-Carlo and quadrature differ by {chk.zscore:.2f} standard errors")
    row = {"radius": float(cfg["radius"]), "mc_mean": chk.mc.mean, "mc_stderr": chk.mc.stderr,
           "quadrature": chk.quadrature, "quadrature_error": chk.quadrature_error, "zscore": chk.zscore}
    return row, [row]


COMMANDS = {
    "pvol": cmd_pvol,
    "mixed-pvol": cmd_mixed_pvol,
    "zeros": cmd_zeros,
    "density": cmd_density,
    "systems": cmd_systems,
    "theorem1": cmd_theorem1,
    "average": cmd_average,
    "regularity": cmd_regularity,
    "crofton": cmd_crofton,
}


# --------------------------------------------------------------------------
# argument parsing


def _bool(s: str) -> bool:
    if s.lower() in ("1", "true", "yes", "on"):
        return True
    if s.lower() in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {s}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file with defaults for this run")
    common.add_argument("--output", "-o", help="output file (stdout if omitted)")
    common.add_argument("--format", choices=("json", "csv"))
    common.add_argument("--manifest", help="manifest path (default: <output>.manifest.json)")
    common.add_argument("--plot-script", dest="plot_script", help="also write a matplotlib script for the CSV")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)

    quad = argparse.ArgumentParser(add_help=False)
    quad.add_argument("--method", choices=("auto", "grid", "qmc", "mc"))
    quad.add_argument("--samples", type=int)
    quad.add_argument("--epsilons", type=float, nargs="+")
    quad.add_argument("--extrapolate", type=_bool)
    quad.add_argument("--order", type=int)
    quad.add_argument("--batches", type=int)
    quad.add_argument("--tolerance", type=float)

    p = argparse.ArgumentParser(prog="expzeros", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("pvol", parents=[common, quad], help="pseudo-volume of a spectrum")
    s.add_argument("--spectrum")
    s.add_argument("--radius", type=float)

    s = sub.add_parser("mixed-pvol", parents=[common, quad], help="mixed pseudo-volume of n spectra")
    s.add_argument("--spectra", nargs="+")
    s.add_argument("--radius", type=float)

    s = sub.add_parser("zeros", parents=[common], help="count (and locate) zeros in disks")
    s.add_argument("--f")
    s.add_argument("--radius", type=float, nargs="+")
    s.add_argument("--center", type=complex)
    s.add_argument("--locate", action="store_true", default=None)

    s = sub.add_parser("density", parents=[common], help="zero counts over radii and their slope")
    s.add_argument("--f")
    s.add_argument("--radii", type=float, nargs="+")
    s.add_argument("--r-min", dest="r_min", type=float)
    s.add_argument("--r-max", dest="r_max", type=float)
    s.add_argument("--num", type=int)

    s = sub.add_parser("systems", help="common roots of two quasi-polynomials in C^2")
    ssub = s.add_subparsers(dest="action", required=True)
    s = ssub.add_parser("count", parents=[common])
    s.add_argument("--f1")
    s.add_argument("--f2")
    s.add_argument("--radius", type=float)
    s.add_argument("--tube", type=float)
    s.add_argument("--grid", type=int)

    s = sub.add_parser("theorem1", parents=[common, quad], help="predicted vs counted zeros")
    s.add_argument("--f")
    s.add_argument("--f1")
    s.add_argument("--f2")
    s.add_argument("--radius", type=float, nargs="+")
    s.add_argument("--tube", type=float)
    s.add_argument("--grid", type=int)
    s.add_argument("--t", type=float, nargs="+", help="scales for the attached regularity profile")

    s = sub.add_parser("average", parents=[common], help="averaged zero counts of a Gaussian ensemble")
    s.add_argument("--space", nargs="+", help="one or two space files")
    s.add_argument("--t", type=float, nargs="+")
    s.add_argument("--radius", type=float)
    s.add_argument("--trials", type=int)

    s = sub.add_parser("regularity", parents=[common], help="deviation profile of log ||Theta(tz)||/t")
    s.add_argument("--space")
    s.add_argument("--spectrum", help="reference spectrum (default: the space's)")
    s.add_argument("--t", type=float, nargs="+")
    s.add_argument("--samples", type=int)
    s.add_argument("--eps", type=float)
    s.add_argument("--at", help="comma-separated point, e.g. -1 or 1j,0")

    s = sub.add_parser("crofton", parents=[common], help="Monte-Carlo counts vs integrated expected density")
    s.add_argument("--space")
    s.add_argument("--radius", type=float)
    s.add_argument("--trials", type=int)
    return p


def _write(path: str, text: str):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(text)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    command = args.command
    ctx = RunContext(command, {})
    manifest_path = args.manifest or (args.output + ".manifest.json" if args.output else None)
    outputs: list[str] = []
    try:
        cfg = effective_config(command, args)
        ctx.config = cfg
        payload, rows = COMMANDS[command](cfg, ctx)
        text = render(payload, rows, cfg["format"])
        if args.output:
            _write(args.output, text)
            outputs.append(args.output)
        else:
            sys.stdout.write(text)
        if args.plot_script:
            data = args.output if args.output and cfg["format"] == "csv" else None
            if data is None or command not in PLOT_AXES:
                ctx.notes.append("plot script needs --format csv, --output and a tabular subcommand")
            else:
                x, y = PLOT_AXES[command]
                _write(args.plot_script, PLOT_TEMPLATE.format(x=x, y=y, data=data))
                outputs.append(args.plot_script)
        code = EXIT_FLAGGED if ctx.warnings else EXIT_OK
        for w in ctx.warnings:
            print(f"warning: {w}", file=sys.stderr)
        if manifest_path:
            _write(manifest_path, json.dumps(_jsonable(ctx.manifest(outputs, code)), indent=2) + "\n")
        return code
    except Exception as exc:  # report, write a partial manifest, exit 1
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        if manifest_path:
            _write(
                manifest_path,
                json.dumps(_jsonable(ctx.manifest(outputs, EXIT_ERROR, f"{type(exc).__name__}: {exc}")), indent=2)
                + "\n",
            )
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
