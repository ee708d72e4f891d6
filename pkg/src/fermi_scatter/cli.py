"""Zero-range neutron scattering off a harmonically bound proton.

Configuration is a flat ``key = value`` file (``#`` starts a comment); flags
given on the command line override file values.  Every output artifact embeds
the parameters, tolerances, seed and code version, and nothing time dependent,
so repeated runs with the same configuration produce identical bytes.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import sys
from dataclasses import dataclass
from importlib import metadata
from pathlib import Path

import numpy as np

from . import lap_checks
from .cache import KernelCache, atomic_write, default_cache_dir
from .charge_kernel import (DEFAULT_QUAD_TOL, DEFAULT_TAIL_TOL, SingularSystemError,
                            assemble_K, assemble_gamma_ref, gamma_boundary, scan_singular_set)
from .greens import DEFAULT_THRESHOLD_WINDOW, BoundarySide, ThresholdError
from .oscillator import Channel, HermiteBasis, ModelParams
from .scattering import (ClosedChannelError, amplitude_general, outgoing_channel,
                         scattering_length_conversion, solve_charge, unit_vector, xsec_born)

log = logging.getLogger("fermi_scatter")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE, EXIT_INPUT = 0, 1, 2, 3
CHECKS = ("agmon", "ufficio", "free_density", "lap", "volta")


def code_version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


@dataclass
class RunConfig:
    omega: float = 1.0
    lam: float = 10.0
    alpha: float = 100.0
    cutoff: int = 4
    quad_order: int = 0
    energy: float = 1.3
    tail_tol: float = DEFAULT_TAIL_TOL
    quad_tol: float = DEFAULT_QUAD_TOL
    threshold_window: float = DEFAULT_THRESHOLD_WINDOW
    angular_order: int = 48
    seed: int = 0
    out: str = "."
    cache_dir: str = ""

    def __post_init__(self):
        for name in ("tail_tol", "quad_tol", "threshold_window"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def params(self) -> ModelParams:
        return ModelParams(self.omega, self.lam, self.alpha)

    @property
    def basis(self) -> HermiteBasis:
        return HermiteBasis(self.cutoff, self.quad_order)

    def provenance(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("out")
        d.pop("cache_dir")
        d["scattering_length_a"] = scattering_length_conversion(alpha=self.alpha)
        d["quad_order"] = self.basis.quad_order
        d["version"] = code_version()
        return d


_FIELDS = {f.name: f.type for f in dataclasses.fields(RunConfig)}
_CASTS = {"float": float, "int": int, "str": str}


def read_config_file(path) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.replace("-", "_")] = v
    return out


def build_config(args: argparse.Namespace) -> RunConfig:
    raw = read_config_file(args.config) if args.config else {}
    if "scattering_length" in raw:
        raw["alpha"] = str(scattering_length_conversion(a=float(raw.pop("scattering_length"))))
    unknown = set(raw) - set(_FIELDS)
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for k in _FIELDS:
        v = getattr(args, k, None)
        if v is not None:
            raw[k] = v
    if getattr(args, "scattering_length", None) is not None:
        raw["alpha"] = scattering_length_conversion(a=args.scattering_length)
    return RunConfig(**{k: _CASTS[_FIELDS[k]](v) for k, v in raw.items()})


# ---------------------------------------------------------------------------
# output helpers


def fmt(x) -> str:
    return format(float(x), ".17g")


def write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    atomic_write(path, buf.getvalue().encode())


def to_json(obj) -> str:
    return json.dumps(lap_checks._jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path: Path, obj) -> None:
    atomic_write(path, to_json(obj).encode())


def emit_error(exc: Exception, code: int = EXIT_INPUT) -> int:
    print(json.dumps({"error": str(exc), "type": type(exc).__name__}, sort_keys=True))
    return code


def parse_triple(text: str, cast=int) -> tuple:
    parts = [cast(p) for p in text.replace(" ", "").split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated values, got {text!r}")
    return tuple(parts)


def parse_channel(text: str) -> tuple:
    """``n1,n2,n3`` or ``n1,n2,n3:theta,phi`` (outgoing direction in radians)."""
    n, _, ang = text.partition(":")
    theta, phi = (float(v) for v in ang.split(",")) if ang else (0.0, 0.0)
    return parse_triple(n), theta, phi


# ---------------------------------------------------------------------------
# matrices through the cache


class Matrices:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.cache = KernelCache(cfg.cache_dir or default_cache_dir())
        self.params = cfg.params
        self.basis = cfg.basis
        self._memo = {}

    def _key(self, tag, mu, side):
        c = self.cfg
        return self.cache.key(tag, mu, side, c.lam, c.omega, c.cutoff, self.basis.quad_order,
                              tail_tol=c.tail_tol, quad_tol=c.quad_tol)

    def gamma_ref(self):
        if "ref" not in self._memo:
            key = self._key("Gamma_ref", -self.cfg.lam, "negative-real")
            self._memo["ref"] = self.cache.get_or_build(
                "Gamma_ref", key, lambda: assemble_gamma_ref(self.cfg.lam, self.basis, self.params))
        return self._memo["ref"]

    def gamma(self, side, mu):
        side = BoundarySide.parse(side)
        if (side, mu) not in self._memo:
            K = self.cache.get_or_build("K", self._key("K", mu, side), lambda: assemble_K(
                side, mu, self.basis, self.params, self.cfg.tail_tol, self.cfg.quad_tol))
            self._memo[side, mu] = gamma_boundary(side, mu, self.basis, self.params,
                                                  self.gamma_ref(), K=K)
        return self._memo[side, mu]


# ---------------------------------------------------------------------------
# subcommands


def cmd_born(cfg: RunConfig, args) -> int:
    out = Path(cfg.out)
    try:
        tab = xsec_born(args.kind, cfg.energy, cfg.params, n=args.n, n_in=args.n_in,
                        angular_order=cfg.angular_order, theta=args.theta)
    except (ClosedChannelError, ValueError) as exc:
        return emit_error(exc)
    stem = f"born_{args.kind}"
    sigma = None if math.isnan(tab.sigma_total) else tab.sigma_total
    write_csv(out / f"{stem}.csv", tab.columns, tab.rows)
    side = {"sigma_total": sigma, "formula": args.kind, "columns": list(tab.columns),
            "meta": tab.meta, "config": cfg.provenance()}
    write_json(out / f"{stem}.json", side)
    print(to_json({"csv": str(out / f"{stem}.csv"), "sigma_total": sigma}), end="")
    return EXIT_OK


def cmd_solve(cfg: RunConfig, args) -> int:
    mats = Matrices(cfg)
    E, omega = cfg.energy, cfg.omega
    inc = Channel((0.0, 0.0, math.sqrt(E)), (0, 0, 0)) if E > 0 else None
    records = []
    for spec in args.channel or []:
        n, theta, phi = parse_channel(spec)
        rec = {"channel": {"n": list(n), "theta": theta, "phi": phi}, "energy": E}
        try:
            if inc is None:
                raise ClosedChannelError("the incoming ground-state channel is closed")
            out = outgoing_channel(E, n, unit_vector(theta, phi), omega)
            G = mats.gamma("plus", E)
            xi = solve_charge(out, "plus", cfg.params, cfg.basis, gamma=G)
            f = amplitude_general(out, inc, "plus", cfg.params, cfg.basis, gamma=G)
            rec.update(xi=[[c.real, c.imag] for c in xi.coefficients], xi_residual=xi.residual,
                       f_general=f.value, f_born=f.info["born"],
                       gap=abs(f.value - f.info["born"]), smin=f.info["smin"])
        except SingularSystemError as exc:
            rec["error"] = {"type": "singular", "message": str(exc), "smin": exc.smin,
                            "singular_candidate": True}
        except (ClosedChannelError, ThresholdError, ValueError) as exc:
            rec["error"] = {"type": type(exc).__name__, "message": str(exc)}
        records.append(rec)
    doc = {"channels": records, "incoming": {"n": [0, 0, 0], "direction": [0, 0, 1]},
           "config": cfg.provenance()}
    write_json(Path(cfg.out) / "solve.json", doc)
    log.info("cache: %s", dataclasses.asdict(mats.cache.stats))
    print(to_json({"channels": len(records), "errors": sum("error" in r for r in records)}), end="")
    return EXIT_OK


def cmd_scan(cfg: RunConfig, args) -> int:
    mats = Matrices(cfg)
    grid = np.linspace(args.mu_min, args.mu_max, args.steps)
    pts = scan_singular_set(grid, cfg.alpha, cfg.basis, cfg.params, gamma_ref=mats.gamma_ref(),
                            window=cfg.threshold_window)
    write_csv(Path(cfg.out) / "scan.csv", ("mu", "smin"), [(p.mu, p.smin) for p in pts])
    lo, hi = sorted((args.mu_min, args.mu_max))
    thresholds = [cfg.omega * k for k in range(max(0, math.ceil(lo / cfg.omega)),
                                                 math.floor(hi / cfg.omega) + 1)]
    doc = {"thresholds": thresholds, "flagged": [p.mu for p in pts if p.flagged],
           "min_smin": min((p.smin for p in pts), default=None), "rows": len(pts),
           "config": cfg.provenance()}
    write_json(Path(cfg.out) / "scan.json", doc)
    print(to_json({"rows": len(pts), "flagged": doc["flagged"]}), end="")
    return EXIT_OK


def _run_check(name: str, cfg: RunConfig, quick: bool):
    basis = HermiteBasis(2 if quick else cfg.cutoff)
    p = cfg.params
    if name == "agmon":
        return [lap_checks.check_agmon(1.0, 1.0)]
    if name == "ufficio":
        return [lap_checks.check_ufficio(cfg.lam, 2 * cfg.lam, basis, cfg.omega)]
    if name == "free_density":
        mu = 1.5 * cfg.omega
        return [lap_checks.check_free_density(mu, [((0, 0, 0), 1.0, 1.0), ((1, 0, 0), 0.5, 0.7)],
                                              cfg.omega)]
    if name == "lap":
        return [lap_checks.check_lap_convergence(1.3 * cfg.omega, cfg.alpha, basis, p)]
    if name == "volta":
        return [lap_checks.check_volta(0.6 * cfg.omega, [((0, 0, 0), 1.0, 1.0)], cfg.alpha,
                                       basis, p, angular_order=6 if quick else 10)]
    raise KeyError(name)


def cmd_check(cfg: RunConfig, args) -> int:
    names = list(CHECKS) if "all" in args.check else list(dict.fromkeys(args.check))
    failed = False
    lines = []
    for name in names:
        for rep in _run_check(name, cfg, args.quick):
            d = rep.to_dict()
            if not args.timings:
                d.pop("runtime")
            line = json.dumps(d, sort_keys=True)
            lines.append(line)
            print(line, flush=True)
            failed |= rep.status == lap_checks.FAIL
    atomic_write(Path(cfg.out) / "check.jsonl", ("\n".join(lines) + "\n").encode())
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def cmd_cache(cfg: RunConfig, args) -> int:
    cache = KernelCache(cfg.cache_dir or default_cache_dir())
    if args.action == "clear":
        print(json.dumps({"removed": cache.clear(), "directory": str(cache.directory)}))
    else:
        print(json.dumps({"directory": str(cache.directory), "entries": cache.inspect()},
                         indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model and numerics (override --config values)")
    g.add_argument("--config", metavar="PATH", help="flat key = value configuration file")
    g.add_argument("--omega", type=float, help="oscillator frequency (default 1)")
    a = g.add_mutually_exclusive_group()
    a.add_argument("--alpha", type=float, help="inverse scattering-length parameter (default 100)")
    a.add_argument("--scattering-length", type=float, dest="scattering_length",
                   help="a, converted once via alpha = 1/(8 pi a)")
    g.add_argument("--lam", type=float, help="renormalization parameter lambda (default 10)")
    g.add_argument("--cutoff", type=int, help="basis cutoff N_max (default 4)")
    g.add_argument("--quad-order", type=int, dest="quad_order",
                   help="per-axis quadrature order (default 2*cutoff+2)")
    g.add_argument("--energy", type=float, help="total energy E (default 1.3)")
    g.add_argument("--tail-tol", type=float, dest="tail_tol", help="tail tolerance (default 1e-8)")
    g.add_argument("--quad-tol", type=float, dest="quad_tol",
                   help="quadrature cross-check tolerance (default 1e-6)")
    g.add_argument("--threshold-window", type=float, dest="threshold_window",
                   help="excluded window around thresholds in units of omega (default 1e-3)")
    g.add_argument("--angular-order", type=int, dest="angular_order",
                   help="Gauss-Legendre order in cos(theta) of the sphere rule (default 48)")
    g.add_argument("--seed", type=int, help="recorded in every output (default 0)")
    g.add_argument("--out", metavar="DIR", help="output directory (default .)")
    g.add_argument("--cache-dir", dest="cache_dir",
                   help="matrix cache directory (default $FERMI_SCATTER_CACHE or ~/.cache)")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = argparse.ArgumentParser(prog="fermi-scatter", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("born", parents=[common], help="Born cross-section tables")
    b.add_argument("--kind", choices=("elastic", "state", "shell"), default="elastic")
    b.add_argument("--n", type=parse_triple, default=(0, 0, 0), help="final state n1,n2,n3")
    b.add_argument("--n-in", type=parse_triple, default=(0, 0, 0), dest="n_in",
                   help="initial state (kind=state)")
    b.add_argument("--theta", type=float, help="kind=shell: list all open shells at this angle")

    s = sub.add_parser("solve", parents=[common], help="charges and amplitudes per channel")
    s.add_argument("--channel", action="append", metavar="N1,N2,N3[:THETA,PHI]",
                   help="outgoing channel; repeat for several")

    sc = sub.add_parser("scan", parents=[common], help="smallest singular value of Gamma+alpha")
    sc.add_argument("--mu-min", type=float, default=0.05, dest="mu_min")
    sc.add_argument("--mu-max", type=float, default=0.95, dest="mu_max")
    sc.add_argument("--steps", type=int, default=91)

    c = sub.add_parser("check", parents=[common], help="run identity checks (JSON lines)")
    c.add_argument("--check", action="append", choices=CHECKS + ("all",), required=True)
    c.add_argument("--quick", action="store_true", help="smaller basis and angular rules")
    c.add_argument("--timings", action="store_true",
                   help="include wall-clock runtimes (makes output non-reproducible)")

    ca = sub.add_parser("cache", parents=[common], help="inspect or clear the matrix cache")
    ca.add_argument("action", choices=("inspect", "clear"))
    return p


COMMANDS = {"born": cmd_born, "solve": cmd_solve, "scan": cmd_scan, "check": cmd_check,
            "cache": cmd_cache}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = build_config(args)
    except (ValueError, OSError) as exc:
        return emit_error(exc, EXIT_USAGE)
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    return COMMANDS[args.command](cfg, args)


if __name__ == "__main__":
    sys.exit(main())
