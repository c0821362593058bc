"""Command-line front end.

Every subcommand reads an optional JSON config file, applies flag
overrides (flags win), expands parameter sweeps, validates every parameter
set before computing anything, and writes CSV/JSON artifacts plus a
``manifest.json`` with checksums into the output directory.

Exit codes: 0 success, 2 configuration error, 3 numerical failure. Errors
are reported as a JSON object on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import itertools
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import evans, io, point_spectrum as ps, spectral as sp
from .errors import InvalidRegime, KSWaveError
from .model import ModelParams, default_grid, profile_bvp, profile_closed_form

SUBCOMMANDS = ("beta-crit", "profile", "spectrum-essential", "spectrum-absolute", "branch-points",
               "weights", "eigenfunctions", "norms", "evans", "scan")
OUT_ENV = "KSWAVE_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class ConfigError(ValueError):
    pass


def parse_values(text):
    """Parse ``"a,b,c"`` or ``"start:stop:count"`` (inclusive linspace) into floats."""
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text).strip()
    try:
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise ConfigError(f"range must be start:stop:count, got {text!r}")
            start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
            if count < 1:
                raise ConfigError(f"range count must be positive, got {count}")
            return [float(v) for v in np.linspace(start, stop, count)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"cannot parse numbers from {text!r}") from exc


def parse_complex(text):
    if isinstance(text, (list, tuple)):
        return [complex(v) if not isinstance(v, (list, tuple)) else complex(*v) for v in text]
    try:
        return [complex(v.strip().replace(" ", "")) for v in str(text).split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse complex numbers from {text!r}") from exc


@dataclass
class RunConfig:
    """Parameters (scalars or sweep lists) and run controls for one subcommand."""

    epsilon: list = field(default_factory=lambda: [0.0])
    m: list = field(default_factory=lambda: [0.0])
    beta: list = field(default_factory=lambda: [2.0])
    c: list = field(default_factory=lambda: [1.0])
    L: Optional[float] = None
    points: int = 4001
    tol: Optional[float] = None
    nu_minus: Optional[float] = None
    nu_plus: Optional[float] = None
    search_box: Optional[list] = None
    search_n: int = 41
    radius: float = 10.0
    delta: Optional[float] = None
    excise: bool = True
    lambdas: list = field(default_factory=list)
    n_re: int = 400
    n_im: int = 400
    side: str = "minus"
    out: Optional[str] = None

    @classmethod
    def from_sources(cls, file_cfg: dict, overrides: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        merged = {}
        for source in (file_cfg, overrides):
            for key, val in source.items():
                key = key.replace("-", "_")
                if key in ("eps",):
                    key = "epsilon"
                if key == "m_grid":
                    key = "m"
                if key not in names:
                    raise ConfigError(f"unknown config key {key!r}")
                if val is not None:
                    merged[key] = val
        for key in ("epsilon", "m", "beta", "c"):
            if key in merged:
                merged[key] = parse_values(merged[key])
        if "lambdas" in merged:
            merged["lambdas"] = parse_complex(merged["lambdas"])
        if "search_box" in merged and merged["search_box"] is not None:
            box = parse_values(merged["search_box"])
            if len(box) != 4:
                raise ConfigError("search_box needs nu_minus_lo,nu_minus_hi,nu_plus_lo,nu_plus_hi")
            merged["search_box"] = box
        try:
            cfg = cls(**merged)
            for key in ("L", "tol", "nu_minus", "nu_plus", "delta", "radius"):
                v = getattr(cfg, key)
                if v is not None:
                    setattr(cfg, key, float(v))
            for key in ("points", "search_n", "n_re", "n_im"):
                setattr(cfg, key, int(getattr(cfg, key)))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if cfg.side not in sp.SIDES:
            raise ConfigError(f"side must be one of {sp.SIDES}")
        cfg.expand()
        return cfg

    def expand(self):
        """Explicit list of validated :class:`ModelParams` over the sweep grid."""
        out = []
        for eps, m, beta, c in itertools.product(self.epsilon, self.m, self.beta, self.c):
            try:
                out.append(ModelParams(eps, m, beta, c))
            except InvalidRegime as exc:
                raise ConfigError(f"(epsilon={eps}, m={m}, beta={beta}, c={c}): {exc}") from exc
        return out

    def as_dict(self):
        d = dataclasses.asdict(self)
        d["lambdas"] = [[v.real, v.imag] for v in self.lambdas]
        d.pop("out")
        return d


# ---------------------------------------------------------------------------
# helpers


def _tag(p: ModelParams):
    return f"eps{p.epsilon:g}_m{p.m:g}_beta{p.beta:g}_c{p.c:g}"


def _profile(p: ModelParams, cfg: RunConfig):
    if p.epsilon == 0.0:
        kw = {} if cfg.tol is None else {"tol": cfg.tol}
        grid = None
        if cfg.L is not None or cfg.points != 4001:
            grid = default_grid(p, cfg.L, cfg.points)
        return profile_closed_form(p, grid, **kw)
    kw = {} if cfg.tol is None else {"tol": cfg.tol}
    return profile_bvp(p, L=cfg.L, n_points=cfg.points, **kw)


def _weight(p: ModelParams, cfg: RunConfig):
    """Explicit weight from the config, else the best admissible one, else the interval midpoints."""
    if cfg.nu_minus is not None or cfg.nu_plus is not None:
        d = sp.default_weight(p)
        return sp.WeightPair(d.nu_minus if cfg.nu_minus is None else cfg.nu_minus,
                             d.nu_plus if cfg.nu_plus is None else cfg.nu_plus)
    found = sp.find_admissible_weights(p, _box(p, cfg))
    return found[0] if found else sp.default_weight(p)


def _box(p, cfg):
    box = sp.default_search_box(p)
    if cfg.search_box is not None:
        b = cfg.search_box
        box = {"nu_minus": (b[0], b[1]), "nu_plus": (b[2], b[3])}
    box["n"] = cfg.search_n
    return box


# ---------------------------------------------------------------------------
# subcommands; each returns (files, summary)


def cmd_beta_crit(cfg: RunConfig, out: Path):
    rows = []
    for m in cfg.m:
        if not 0.0 <= m < 1.0:
            raise ConfigError(f"beta-crit needs m in [0, 1), got {m}")
        b = sp.beta_crit(m)
        rows.append({"m": m, "beta_crit": b.beta_crit_m, "beta_crit_base": b.beta_crit_base,
                     "residual": b.residual})
    files = [io.write_csv(out / "beta_crit.csv", ["m", "beta_crit"],
                          [[r["m"] for r in rows], [r["beta_crit"] for r in rows]])]
    summary = rows[0] if len(rows) == 1 else rows
    files.append(io.write_json(out / "beta_crit.json", summary))
    return files, summary


def cmd_profile(cfg, out):
    files, summary = [], []
    for p in cfg.expand():
        prof = _profile(p, cfg)
        files.extend(prof.write(out / f"profile_{_tag(p)}.csv"))
        summary.append({"params": p.as_dict(), **{k: v for k, v in prof.sidecar().items() if k != "params"}})
    return files, summary


def cmd_spectrum_essential(cfg, out):
    files, summary = [], []
    for p in cfg.expand():
        w = _weight(p, cfg) if (cfg.nu_minus is not None or cfg.nu_plus is not None) else sp.WeightPair()
        cols = [[], [], [], [], []]
        info = {"params": p.as_dict(), "weight": [w.nu_minus, w.nu_plus]}
        for side in sp.SIDES:
            nu = w.on(side)
            k, lam = sp.dispersion_curves(p, nu, side)
            for b in range(lam.shape[1]):
                cols[0] += [side] * len(k)
                cols[1] += [nu] * len(k)
                cols[2] += list(k)
                cols[3] += list(lam[:, b].real)
                cols[4] += list(lam[:, b].imag)
            info[f"abscissa_{side}"] = sp.spectral_abscissa(p, nu, side)
        files.append(io.write_csv(out / f"essential_{_tag(p)}.csv", ["side", "nu", "k", "ReLambda", "ImLambda"], cols))
        summary.append(info)
    files.append(io.write_json(out / "essential.json", summary))
    return files, summary


def cmd_spectrum_absolute(cfg, out):
    files, summary = [], []
    for p in cfg.expand():
        grid = sp.lambda_grid(sp.default_lambda_box(p), cfg.n_re, cfg.n_im)
        a = sp.absolute_spectrum(p, grid, cfg.side)
        files.append(io.write_csv(out / f"absolute_{cfg.side}_{_tag(p)}.csv", ["ReLambda", "ImLambda", "gap"],
                                  [a.points.real, a.points.imag, a.gap]))
        r = a.rightmost()
        summary.append({"params": p.as_dict(), "side": cfg.side, "k": a.k, "points": int(a.points.size),
                        "rightmost": [r.real, r.imag], "grid_spacing": a.grid_spacing, "ambiguous": a.ambiguous})
    files.append(io.write_json(out / "absolute.json", summary))
    return files, summary


def cmd_branch_points(cfg, out):
    files, summary = [], []
    for p in cfg.expand():
        bp = sp.branch_points(p, cfg.side)
        lam = np.array(list(bp), complex)
        mu = np.array(bp.mu, complex)
        files.append(io.write_csv(out / f"branch_points_{cfg.side}_{_tag(p)}.csv",
                                  ["ReLambda", "ImLambda", "ReMu", "ImMu"], [lam.real, lam.imag, mu.real, mu.imag]))
        summary.append({"params": p.as_dict(), "side": cfg.side, "count": len(bp),
                        "branch_points": [[v.real, v.imag] for v in bp], "failed_seeds": len(bp.failures)})
    files.append(io.write_json(out / "branch_points.json", summary))
    return files, summary


def cmd_weights(cfg, out):
    files, summary = [], []
    for p in cfg.expand():
        found = sp.find_admissible_weights(p, _box(p, cfg))
        files.append(io.write_csv(out / f"weights_{_tag(p)}.csv", ["nu_minus", "nu_plus", "abscissa"],
                                  [[w.nu_minus for w in found], [w.nu_plus for w in found],
                                   [w.abscissa for w in found]]))
        best = found[0] if found else None
        summary.append({"params": p.as_dict(), "count": len(found),
                        "best": None if best is None else [best.nu_minus, best.nu_plus, best.abscissa],
                        "near_critical": sp.beta_crit(min(p.m, 0.999999)).near_critical(p.beta)})
    files.append(io.write_json(out / "weights.json", summary))
    return files, summary


def cmd_eigenfunctions(cfg, out):
    files, summary = [], []
    for p in cfg.expand():
        prof = _profile(p, cfg)
        e1, e2 = ps.eigenfunctions(prof)
        files.append(e1.to_csv(out / f"translation_{_tag(p)}.csv"))
        files.append(e2.to_csv(out / f"speed_{_tag(p)}.csv"))
        info = {"params": p.as_dict(), "residual_translation": e1.residual, "residual_chain": e2.residual,
                "jordan_block": np.real_if_close(ps.jordan_block(prof, e1, e2)).tolist()}
        if p.epsilon == 0.0:
            info["norm_sq_translation"] = e1.norm_sq_analytic
        summary.append(info)
    files.append(io.write_json(out / "eigenfunctions.json", summary))
    return files, summary


def cmd_norms(cfg, out):
    if len(cfg.beta) != 1:
        raise ConfigError("norms takes a single beta")
    cfg.expand()
    rows = ps.norm_sweep(cfg.beta[0], cfg.m, cfg.c)
    cols = list(zip(*rows)) if rows else [[], [], [], []]
    files = [io.write_csv(out / "norms.csv", ["m", "c", "beta", "norm_sq_generalised"], cols)]
    summary = {"beta": cfg.beta[0], "m": cfg.m, "c": cfg.c, "rows": len(rows),
               "divergent": [[r[0], r[1]] for r in rows if not np.isfinite(r[3])],
               "note": "the default wave speeds c = 1, 2 are a reproduction choice"}
    files.append(io.write_json(out / "norms.json", summary))
    return files, summary


def cmd_evans(cfg, out):
    files, summary = [], []
    for p in cfg.expand():
        prof = _profile(p, cfg)
        w = _weight(p, cfg)
        system = evans.EvansSystem(prof)
        info = {"params": p.as_dict(), "weight": [w.nu_minus, w.nu_plus], **system.meta()}
        lams = np.array(cfg.lambdas or [0.0], complex)
        vals = evans.evans_values(prof, lams, w, system)
        files.append(io.write_csv(out / f"evans_{_tag(p)}.csv", ["ReLambda", "ImLambda", "ReD", "ImD"],
                                  [lams.real, lams.imag, vals.real, vals.imag]))
        try:
            info["multiplicity_at_origin"] = evans.multiplicity_at_origin(prof, w, system=system)
        except KSWaveError as exc:
            info["multiplicity_at_origin"] = None
            info["multiplicity_error"] = f"{type(exc).__name__}: {exc}"
        summary.append(info)
    files.append(io.write_json(out / "evans.json", summary))
    return files, summary


def cmd_scan(cfg, out):
    files, summary = [], []
    for p in cfg.expand():
        prof = _profile(p, cfg)
        w = _weight(p, cfg)
        rep = evans.contour_scan(prof, w, cfg.radius, cfg.delta, cfg.excise)
        files.append(rep.to_csv(out / f"contour_{_tag(p)}.csv"))
        summary.append({"params": p.as_dict(), **rep.to_json()})
    files.append(io.write_json(out / "contour.json", summary))
    return files, summary


COMMANDS = {
    "beta-crit": cmd_beta_crit,
    "profile": cmd_profile,
    "spectrum-essential": cmd_spectrum_essential,
    "spectrum-absolute": cmd_spectrum_absolute,
    "branch-points": cmd_branch_points,
    "weights": cmd_weights,
    "eigenfunctions": cmd_eigenfunctions,
    "norms": cmd_norms,
    "evans": cmd_evans,
    "scan": cmd_scan,
}


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    """Argument parser that raises instead of printing usage and exiting."""

    def error(self, message):
        raise ConfigError(message)


def build_parser():
    parser = _Parser(prog="kswave", description="Spectral analysis of chemotactic travelling waves.")
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its entries")
    common.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./kswave-out)")
    common.add_argument("--epsilon", "--eps", dest="epsilon", help="value, list a,b or range start:stop:count")
    common.add_argument("--m", help="value, list or range")
    common.add_argument("--m-grid", dest="m_grid", help="alias of --m")
    common.add_argument("--beta", help="value, list or range")
    common.add_argument("--c", help="value, list or range")
    common.add_argument("--L", type=float)
    common.add_argument("--points", type=int)
    common.add_argument("--tol", type=float)
    common.add_argument("--nu-minus", dest="nu_minus", type=float)
    common.add_argument("--nu-plus", dest="nu_plus", type=float)
    common.add_argument("--search-box", dest="search_box", help="nu_minus_lo,nu_minus_hi,nu_plus_lo,nu_plus_hi")
    common.add_argument("--search-n", dest="search_n", type=int)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name, parents=[common])
        if name in ("spectrum-absolute", "branch-points"):
            s.add_argument("--side", choices=sp.SIDES)
        if name == "spectrum-absolute":
            s.add_argument("--n-re", dest="n_re", type=int)
            s.add_argument("--n-im", dest="n_im", type=int)
        if name == "evans":
            s.add_argument("--lambda", dest="lambdas", help="comma-separated complex values, e.g. 0.1+0.2j")
        if name == "scan":
            s.add_argument("--radius", type=float)
            s.add_argument("--delta", type=float)
            s.add_argument("--no-excise", dest="excise", action="store_false", default=None)
    return parser


def _error(kind, exc, command, code):
    payload = {"error": kind, "type": type(exc).__name__, "message": str(exc), "command": command}
    residual = getattr(exc, "residual", None)
    if residual is not None:
        payload["residual"] = residual
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def run_subcommand(name, config: RunConfig, out: Path):
    """Run one analysis and write its manifest; returns ``(files, summary)``."""
    if name not in COMMANDS:
        raise ConfigError(f"unknown subcommand {name!r}")
    out.mkdir(parents=True, exist_ok=True)
    files, summary = COMMANDS[name](config, out)
    files = [Path(f) for f in files]
    io.write_manifest(out, config.as_dict(), files, name)
    return files, summary


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ConfigError as exc:
        return _error("config", exc, None, EXIT_CONFIG)
    except SystemExit as exc:  # --help
        return EXIT_OK if exc.code in (0, None) else EXIT_CONFIG
    command = args.command
    try:
        file_cfg = {}
        if args.config:
            try:
                file_cfg = json.loads(Path(args.config).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
            if not isinstance(file_cfg, dict):
                raise ConfigError("config file must hold a JSON object")
        overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config") and v is not None}
        cfg = RunConfig.from_sources(file_cfg, overrides)
        out = Path(cfg.out or os.environ.get(OUT_ENV) or "kswave-out")
    except ConfigError as exc:
        return _error("config", exc, command, EXIT_CONFIG)
    try:
        files, summary = run_subcommand(command, cfg, out)
    except ConfigError as exc:
        return _error("config", exc, command, EXIT_CONFIG)
    except (KSWaveError, FloatingPointError, np.linalg.LinAlgError) as exc:
        return _error("numerical", exc, command, EXIT_NUMERIC)
    print(io.dumps(summary))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
