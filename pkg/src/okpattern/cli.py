"""Command-line surface: config parsing, run directories, CSV reports, pixmaps.

Every run writes a directory holding report.csv, fields/*.okf, and meta.txt.
meta.txt contains the fully resolved configuration as a valid config file
(comment lines carry versions), so re-running with --config meta.txt
reproduces the run byte for byte at a fixed thread count.  Exit codes:
0 success, 2 configuration error, 3 numerical failure status.
"""

from __future__ import annotations

import argparse
import configparser
import io
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .construct import (
    ConstructCertificate,
    ConstructConfig,
    build_periodic,
    local_minimality_probe,
)
from .diffuse_ok import FlowConfig, gamma_limit_sweep, minimize, ok_energy
from .sharp_energy import ScalingReport, scaling_check, sharp_energy
from .spectral import get_workspace, laplacian, poisson_zero_mean
from .stability import lamella_threshold, mode_scan_min_eigenvalue
from .torus_field import (
    Ball,
    Cylinder,
    GridSpec,
    Lamella,
    ScalarField,
    rasterize,
    read_field,
    tanh_profile,
    write_field,
)


class ConfigError(ValueError):
    pass


def _parse_floats(raw: str) -> list[float]:
    return [float(x) for x in str(raw).split(",") if str(x).strip()]


def _parse_ints(raw: str) -> list[int]:
    return [int(x) for x in str(raw).split(",") if str(x).strip()]


# schema: section -> key -> (parser, validator, default)
def _positive(path):
    return lambda v: v > 0 or _fail(f"{path} must be positive")


def _nonnegative(path):
    return lambda v: v >= 0 or _fail(f"{path} must be nonnegative")


def _fail(msg):
    raise ConfigError(msg)


SCHEMA = {
    "grid": {
        "sizes": (_parse_ints, None, [64, 64]),
    },
    "shape": {
        "kind": (str, None, "lamella"),
        "axis": (int, None, 0),
        "center": (_parse_floats, None, [0.5]),
        "halfwidth": (float, None, 0.25),
        "radius": (float, None, 0.25),
    },
    "energy": {
        "gamma": (float, _nonnegative("energy.gamma"), 1.0),
    },
    "flow": {
        "eps": (float, _positive("flow.eps"), 0.06),
        "gamma": (float, _nonnegative("flow.gamma"), 0.0),
        "dt": (float, _positive("flow.dt"), 5e-3),
        # -1 is the auto sentinel (2/eps); otherwise nonnegative
        "stabilizer": (
            float,
            lambda v: v >= 0 or v == -1.0 or _fail("flow.stabilizer must be nonnegative or -1 (auto)"),
            -1.0,
        ),
        "max_steps": (int, _nonnegative("flow.max_steps"), 500),
        "energy_tolerance": (float, _nonnegative("flow.energy_tolerance"), 1e-11),
        "dt_backoff": (float, None, 0.5),
    },
    "construct": {
        "gamma_bar": (float, _positive("construct.gamma_bar"), 1.0),
        "k_list": (_parse_ints, None, [1, 2, 4]),
        "continuation_steps": (int, _positive("construct.continuation_steps"), 3),
        "mesh_resolution": (int, None, 16),
        "probes": (int, _nonnegative("construct.probes"), 0),
        "probe_amplitude": (int, None, 2),
        "probe_seed": (int, None, 0),
    },
    "stability": {
        "w_list": (_parse_floats, None, [0.2, 0.25, 0.3]),
        "gamma_list": (_parse_floats, None, [0.0, 1.0, 10.0]),
        "q_max": (int, _positive("stability.q_max"), 8),
        "thresholds": (int, None, 0),
    },
    "scaling": {
        "gamma": (float, _nonnegative("scaling.gamma"), 1.0),
        "k_list": (_parse_ints, None, [1, 2, 4]),
    },
    "gamma_limit": {
        "gamma": (float, _nonnegative("gamma_limit.gamma"), 1.0),
        "eps_list": (_parse_floats, None, [0.08, 0.04, 0.02, 0.01]),
    },
    "render": {
        "axis": (int, None, 2),
        "index": (int, None, 0),
    },
    "run": {
        "out_dir": (str, None, "okrun"),
        "threads": (int, _positive("run.threads"), 1),
    },
}


class RunConfig:
    """Fully resolved configuration; values live in a nested dict."""

    def __init__(self, values: dict):
        self.values = values

    @classmethod
    def defaults(cls) -> "RunConfig":
        return cls(
            {s: {k: spec[2] for k, spec in keys.items()} for s, keys in SCHEMA.items()}
        )

    def get(self, section: str, key: str):
        return self.values[section][key]

    def set(self, section: str, key: str, raw) -> None:
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"unknown configuration key {section}.{key}")
        parser, validator, _ = SCHEMA[section][key]
        try:
            if isinstance(raw, list):
                value = raw
            else:
                value = parser(raw)
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(f"cannot parse {section}.{key}: {exc}") from exc
        if validator is not None:
            validator(value)
        self.values[section][key] = value

    def update_from_file(self, path) -> None:
        cp = configparser.ConfigParser()
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from exc
        for section in cp.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown configuration section [{section}]")
            for key, raw in cp[section].items():
                self.set(section, key, raw)

    def serialize(self) -> str:
        out = io.StringIO()
        for section in sorted(self.values):
            out.write(f"[{section}]\n")
            for key in sorted(self.values[section]):
                value = self.values[section][key]
                if isinstance(value, list):
                    text = ",".join(repr(v) if isinstance(v, float) else str(v) for v in value)
                else:
                    text = repr(value) if isinstance(value, float) else str(value)
                out.write(f"{key} = {text}\n")
            out.write("\n")
        return out.getvalue()

    # -- typed views ------------------------------------------------------

    def grid(self) -> GridSpec:
        try:
            return GridSpec(tuple(self.get("grid", "sizes")))
        except ValueError as exc:
            raise ConfigError(f"grid.sizes: {exc}") from exc

    def shape(self):
        kind = self.get("shape", "kind")
        center = self.get("shape", "center")
        try:
            if kind == "lamella":
                return Lamella(
                    axis=self.get("shape", "axis"),
                    center=center[0] if isinstance(center, list) else float(center),
                    halfwidth=self.get("shape", "halfwidth"),
                )
            if kind == "ball":
                return Ball(tuple(center), self.get("shape", "radius"))
            if kind == "cylinder":
                return Cylinder(
                    axis=self.get("shape", "axis"),
                    center=tuple(center),
                    radius=self.get("shape", "radius"),
                )
        except ValueError as exc:
            raise ConfigError(f"shape: {exc}") from exc
        raise ConfigError(f"shape.kind must be lamella, ball or cylinder, got {kind!r}")

    def flow(self) -> FlowConfig:
        stab = self.get("flow", "stabilizer")
        try:
            return FlowConfig(
                eps=self.get("flow", "eps"),
                gamma=self.get("flow", "gamma"),
                dt=self.get("flow", "dt"),
                stabilizer=None if stab < 0 else stab,
                max_steps=self.get("flow", "max_steps"),
                energy_tolerance=self.get("flow", "energy_tolerance"),
                dt_backoff=self.get("flow", "dt_backoff"),
            )
        except ValueError as exc:
            raise ConfigError(f"flow: {exc}") from exc


# ---------------------------------------------------------------------------
# Run directory plumbing
# ---------------------------------------------------------------------------


def _prepare_run_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.get("run", "out_dir"))
    (out / "fields").mkdir(parents=True, exist_ok=True)
    return out


def _write_meta(cfg: RunConfig, out: Path) -> None:
    lines = [
        "# okpattern resolved configuration (feed back via --config to reproduce)",
        f"# version: okpattern {__version__}, numpy {np.__version__}, python {sys.version.split()[0]}",
        f"# threads: {cfg.get('run', 'threads')}",
        "",
        cfg.serialize(),
    ]
    (out / "meta.txt").write_text("\n".join(lines))


def _write_report(out: Path, header: str, rows: list[str]) -> None:
    (out / "report.csv").write_text("\n".join([header] + rows) + "\n")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def _cmd_energy(cfg: RunConfig) -> int:
    out = _prepare_run_dir(cfg)
    spec = cfg.grid()
    shape = cfg.shape()
    gamma = cfg.get("energy", "gamma")
    breakdown = sharp_energy(shape, gamma, spec)
    _write_report(
        out,
        "perimeter,nonlocal,gamma,total",
        [
            ",".join(
                repr(v)
                for v in (breakdown.perimeter, breakdown.nonlocal_term, gamma, breakdown.total)
            )
        ],
    )
    write_field(rasterize(shape, spec), out / "fields" / "indicator.okf")
    _write_meta(cfg, out)
    return 0


def _cmd_green(cfg: RunConfig) -> int:
    out = _prepare_run_dir(cfg)
    spec = cfg.grid()
    u = rasterize(cfg.shape(), spec)
    v = poisson_zero_mean(u)
    target = u.values - u.mean
    resid = float(
        np.linalg.norm(laplacian(v).values + target) / max(np.linalg.norm(target), 1e-300)
    )
    _write_report(
        out,
        "mean_v,laplacian_residual,v_min,v_max",
        [",".join(repr(x) for x in (v.mean, resid, float(v.values.min()), float(v.values.max())))],
    )
    write_field(u, out / "fields" / "u.okf")
    write_field(v, out / "fields" / "v.okf")
    _write_meta(cfg, out)
    return 0


def _cmd_flow(cfg: RunConfig) -> int:
    out = _prepare_run_dir(cfg)
    spec = cfg.grid()
    flow = cfg.flow()
    u0 = tanh_profile(cfg.shape(), spec, flow.eps)
    trace = minimize(u0, flow)
    _write_report(out, trace.CSV_HEADER, trace.csv_rows())
    write_field(trace.final, out / "fields" / "final.okf")
    _write_meta(cfg, out)
    return 3 if trace.status == "stalled" else 0


def _cmd_construct(cfg: RunConfig) -> int:
    out = _prepare_run_dir(cfg)
    spec = cfg.grid()
    ccfg = ConstructConfig(
        seed=cfg.shape(),
        gamma_bar=cfg.get("construct", "gamma_bar"),
        k_list=tuple(cfg.get("construct", "k_list")),
        spec=spec,
        flow=cfg.flow(),
        continuation_steps=cfg.get("construct", "continuation_steps"),
        mesh_resolution=cfg.get("construct", "mesh_resolution"),
    )
    results = build_periodic(ccfg)
    rows = []
    failed = False
    for cert, tiled in results:
        rows.append(cert.csv_row())
        if tiled is None:
            failed = True
            continue
        write_field(tiled, out / "fields" / f"tiled_k{cert.k}.okf")
        n_probes = cfg.get("construct", "probes")
        if n_probes > 0:
            rep = local_minimality_probe(
                tiled,
                ccfg.gamma_bar,
                cert.k,
                n_probes,
                cfg.get("construct", "probe_amplitude"),
                seed=cfg.get("construct", "probe_seed"),
            )
            if rep.min_gap < -1e-12:
                failed = True
    _write_report(out, ConstructCertificate.CSV_HEADER, rows)
    _write_meta(cfg, out)
    return 3 if failed else 0


def _cmd_stability(cfg: RunConfig) -> int:
    out = _prepare_run_dir(cfg)
    rows = []
    q_max = cfg.get("stability", "q_max")
    for w in cfg.get("stability", "w_list"):
        if cfg.get("stability", "thresholds"):
            res = lamella_threshold(w, q_max=q_max)
            rows.append(f"{repr(w)},threshold,{repr(res.gamma_star)}")
            continue
        for gamma in cfg.get("stability", "gamma_list"):
            val = mode_scan_min_eigenvalue(w, gamma, q_max)
            rows.append(f"{repr(w)},{repr(gamma)},{repr(val)}")
    _write_report(out, "w,gamma,min_eig", rows)
    _write_meta(cfg, out)
    return 0


def _cmd_scaling(cfg: RunConfig) -> int:
    out = _prepare_run_dir(cfg)
    spec = cfg.grid()
    shape = cfg.shape()
    gamma = cfg.get("scaling", "gamma")
    rows = []
    for k in cfg.get("scaling", "k_list"):
        try:
            rows.append(scaling_check(shape, gamma, k, spec).csv_row())
        except ValueError as exc:
            raise ConfigError(f"scaling.k_list: {exc}") from exc
    _write_report(out, ScalingReport.CSV_HEADER, rows)
    _write_meta(cfg, out)
    return 0


def _cmd_gamma_limit(cfg: RunConfig) -> int:
    out = _prepare_run_dir(cfg)
    spec = cfg.grid()
    gamma = cfg.get("gamma_limit", "gamma")
    eps_list = cfg.get("gamma_limit", "eps_list")
    try:
        rows = gamma_limit_sweep(cfg.shape(), gamma, eps_list, spec)
    except ValueError as exc:
        raise ConfigError(f"gamma_limit: {exc}") from exc
    _write_report(out, rows[0].CSV_HEADER, [r.csv_row() for r in rows])
    _write_meta(cfg, out)
    return 0


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


def render_heatmap(field: ScalarField, path, axis: int | None = None, index: int | None = None) -> None:
    """Binary P6 grayscale pixmap of a 2d field (or a slice of a 3d one).

    Row 0 is y = 0 (second axis index 0); a constant field maps to mid-gray.
    Deterministic bytes for a given field.
    """
    values = field.values
    if field.spec.dim == 3:
        if axis is None or index is None:
            raise ValueError("3d fields need a slice axis and index")
        if not 0 <= axis < 3:
            raise ValueError(f"bad slice axis {axis}")
        if not 0 <= index < field.spec.sizes[axis]:
            raise ValueError(f"slice index {index} out of range")
        values = np.take(values, index, axis=axis)
    elif field.spec.dim != 2:
        raise ValueError("render expects a 2d field or a 3d slice")
    lo, hi = float(values.min()), float(values.max())
    if hi > lo:
        gray = np.rint((values - lo) / (hi - lo) * 255.0).astype(np.uint8)
    else:
        gray = np.full(values.shape, 128, dtype=np.uint8)
    # image rows run over the second axis (row 0 at y=0), columns over the first
    img = gray.T
    h, w = img.shape
    rgb = np.repeat(img[:, :, None], 3, axis=2)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(rgb.tobytes())


def _cmd_render(cfg: RunConfig, args) -> int:
    field = read_field(args.input)
    axis = cfg.get("render", "axis") if field.spec.dim == 3 else None
    index = cfg.get("render", "index") if field.spec.dim == 3 else None
    render_heatmap(field, args.output, axis, index)
    return 0


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------


_SUBCOMMANDS = (
    "energy",
    "green",
    "flow",
    "construct",
    "stability",
    "scaling",
    "gamma-limit",
    "render",
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="okpattern",
        description="Sharp and diffuse Ohta-Kawasaki energies on the flat torus.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, metavar="FILE")
    common.add_argument("--out", default=None, metavar="DIR")
    common.add_argument("--grid", default=None, metavar="N1,N2[,N3]")
    common.add_argument("--shape", default=None, choices=("lamella", "ball", "cylinder"))
    common.add_argument("--axis", default=None, type=int)
    common.add_argument("--center", default=None, metavar="C[,C2[,C3]]")
    common.add_argument("--w", default=None, type=float, help="lamella halfwidth")
    common.add_argument("--radius", default=None, type=float)
    common.add_argument("--gamma", default=None, type=float)
    common.add_argument("--k", default=None, metavar="K1,K2,...")
    common.add_argument("--eps", default=None, type=float)
    common.add_argument("--eps-list", default=None, metavar="E1,E2,...")
    common.add_argument("--steps", default=None, type=int, help="flow max steps")
    for name in _SUBCOMMANDS:
        if name == "render":
            p = sub.add_parser(name, parents=[common])
            p.add_argument("input")
            p.add_argument("output")
            p.add_argument("--slice-axis", type=int, default=None)
            p.add_argument("--slice-index", type=int, default=None)
        else:
            sub.add_parser(name, parents=[common])
    return parser


_GAMMA_TARGET = {
    "energy": ("energy", "gamma"),
    "flow": ("flow", "gamma"),
    "scaling": ("scaling", "gamma"),
    "gamma-limit": ("gamma_limit", "gamma"),
    "construct": ("construct", "gamma_bar"),
}


def _apply_cli_overrides(cfg: RunConfig, args) -> None:
    if args.grid is not None:
        cfg.set("grid", "sizes", args.grid)
    if args.shape is not None:
        cfg.set("shape", "kind", args.shape)
    if args.axis is not None:
        cfg.set("shape", "axis", args.axis)
    if args.center is not None:
        cfg.set("shape", "center", args.center)
    if args.w is not None:
        cfg.set("shape", "halfwidth", args.w)
    if args.radius is not None:
        cfg.set("shape", "radius", args.radius)
    if args.gamma is not None:
        section, key = _GAMMA_TARGET.get(args.command, ("energy", "gamma"))
        cfg.set(section, key, args.gamma)
    if args.k is not None:
        cfg.set("scaling", "k_list", args.k)
        cfg.set("construct", "k_list", args.k)
    if args.eps is not None:
        cfg.set("flow", "eps", args.eps)
    if args.eps_list is not None:
        cfg.set("gamma_limit", "eps_list", args.eps_list)
    if args.steps is not None:
        cfg.set("flow", "max_steps", args.steps)
    if args.out is not None:
        cfg.set("run", "out_dir", args.out)
    if getattr(args, "slice_axis", None) is not None:
        cfg.set("render", "axis", args.slice_axis)
    if getattr(args, "slice_index", None) is not None:
        cfg.set("render", "index", args.slice_index)


def run(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    cfg = RunConfig.defaults()
    try:
        threads = os.environ.get("OKPATTERN_THREADS")
        if threads is not None:
            cfg.set("run", "threads", int(threads))
        if args.config:
            cfg.update_from_file(args.config)
        _apply_cli_overrides(cfg, args)
        dispatch = {
            "energy": _cmd_energy,
            "green": _cmd_green,
            "flow": _cmd_flow,
            "construct": _cmd_construct,
            "stability": _cmd_stability,
            "scaling": _cmd_scaling,
            "gamma-limit": _cmd_gamma_limit,
        }
        if args.command == "render":
            return _cmd_render(cfg, args)
        return dispatch[args.command](cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


def main() -> None:
    sys.exit(run(sys.argv[1:]))
