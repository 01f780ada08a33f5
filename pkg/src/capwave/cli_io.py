"""Run configuration, file formats and the ``capwave`` command line.

Config files are flat ``key = value`` text (``#`` starts a comment); every
key is a :class:`RunConfig` field and unknown keys are rejected.  Command line
flags mirror the same keys (``--newton-tol`` for ``newton_tol``) and override
the file.

Exit codes: 0 success, 2 invalid configuration or input, 3 verification
failure, 4 a run ended with an anomalous verdict or a runtime solver error.
"""

from __future__ import annotations

import argparse
import dataclasses
import itertools
import logging
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import continuation as cont
from . import linear_analysis as la
from . import reconstruction as rec
from . import verification
from .errors import CapwaveError, IndexOutOfRange, InvalidParameters
from .trig_core import TrigSeries
from .wave_operators import FlowParameters

log = logging.getLogger("capwave")

FORMAT_TAG = "capwave-branch/1"
EXIT_OK, EXIT_CONFIG, EXIT_VERIFY, EXIT_ANOMALY = 0, 2, 3, 4
ANOMALOUS = {cont.Verdict.STEP_COLLAPSE, cont.Verdict.RESOLUTION_LIMIT}
_FLOW_KEYS = ("h", "k", "g", "gamma", "sigma", "N", "M", "stagnation_floor", "alias_tol", "mean_tol")


class InvalidConfig(InvalidParameters):
    pass


def parse_modes(text: str) -> list[tuple[int, int]]:
    """'1+,2-,3' -> [(1, 1), (2, -1), (3, 1)]."""
    out = []
    for tok in filter(None, (t.strip() for t in text.split(","))):
        sign = -1 if tok.endswith("-") else 1
        digits = tok.rstrip("+-")
        if not digits.isdigit() or int(digits) < 1:
            raise InvalidConfig(f"bad mode {tok!r}; expected e.g. 1+ or 2-")
        out.append((int(digits), sign))
    if not out:
        raise InvalidConfig("no modes given")
    return out


@dataclass
class RunConfig:
    h: float = 1.0
    k: float = 1.0
    g: float = 9.81
    gamma: float = 0.0
    sigma: float = 0.074
    N: int = 64
    M: int | None = None
    n_max: int | None = None
    newton_tol: float = 1e-12
    stagnation_floor: float = 1e-4
    stagnation_verdict: float = 5e-2
    loop_tol: float = 1e-8
    trivial_tol: float = 1e-8
    alias_tol: float = 1e-6
    mean_tol: float = 1e-10
    s0: float = 1e-3
    ds0: float = 1e-2
    ds_min: float = 1e-5
    ds_max: float = 0.1
    max_points: int = 200
    modes: str = "1+"
    direction: int = 1
    output_dir: str = "."
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if not self.stagnation_verdict > self.stagnation_floor:
            raise InvalidConfig("stagnation_verdict must exceed stagnation_floor")
        if not 0 < self.ds_min <= self.ds_max:
            raise InvalidConfig("need 0 < ds_min <= ds_max")
        if self.sigma == 0:
            raise InvalidConfig("sigma must be nonzero")
        if self.direction not in (1, -1):
            raise InvalidConfig("direction must be 1 or -1")
        if self.max_points < 1 or self.workers < 1:
            raise InvalidConfig("max_points and workers must be positive")
        parse_modes(self.modes)
        self.flow_params()  # validates the physical parameters

    # construction ---------------------------------------------------------
    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise InvalidConfig(f"unknown config key(s): {', '.join(unknown)}")
        kwargs = {}
        for key, raw in data.items():
            kwargs[key] = _coerce(known[key], raw)
        try:
            return cls(**kwargs)
        except InvalidParameters as exc:
            raise InvalidConfig(str(exc)) from exc

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "RunConfig":
        data = read_key_values(Path(path).read_text(encoding="utf-8"), source=str(path))
        data.update(overrides or {})
        return cls.from_mapping(data)

    # derived objects --------------------------------------------------------
    def flow_params(self) -> FlowParameters:
        kw = {k: getattr(self, k) for k in _FLOW_KEYS}
        return FlowParameters(**kw)

    def continuation_config(self) -> cont.ContinuationConfig:
        return cont.ContinuationConfig(
            newton_tol=self.newton_tol, s0=self.s0, ds0=min(max(self.ds0, self.ds_min), self.ds_max),
            ds_min=self.ds_min, ds_max=self.ds_max, max_points=self.max_points,
            stagnation_verdict=self.stagnation_verdict, loop_tol=self.loop_tol, trivial_tol=self.trivial_tol)

    def to_text(self) -> str:
        return "".join(f"{f.name}={_fmt(getattr(self, f.name))}\n" for f in fields(self)
                       if getattr(self, f.name) is not None)


def _coerce(f: dataclasses.Field, raw):
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    kind = str(f.type)
    if text.lower() in ("none", "") and "None" in kind:
        return None
    try:
        if kind.startswith("int"):
            return int(text)
        if kind.startswith("float"):
            return float(text)
    except ValueError as exc:
        raise InvalidConfig(f"{f.name}: cannot parse {raw!r}") from exc
    return text


def read_key_values(text: str, source: str = "<text>") -> dict:
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfig(f"{source}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise InvalidConfig(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return "%.17g" % x
    return str(x)


# --------------------------------------------------------------------------
# Bifurcation table
# --------------------------------------------------------------------------

TABLE_COLUMNS = ("n", "lambda_minus", "lambda_plus", "m_minus", "m_plus", "kernel_minus", "kernel_plus",
                 "transversal_minus", "transversal_plus", "under_resolved")


def format_table(rows, N: int) -> str:
    lines = ["# " + " ".join(TABLE_COLUMNS)]
    for r in rows:
        r = dict(r, under_resolved=r["n"] > N / 4)
        lines.append(" ".join(_fmt(r[c]) for c in TABLE_COLUMNS))
    return "\n".join(lines) + "\n"


def cmd_bifpoints(cfg: RunConfig, out=None) -> str:
    p = cfg.flow_params()
    text = format_table(la.bifurcation_table(p, cfg.n_max), p.N)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    return text


# --------------------------------------------------------------------------
# Branch files
# --------------------------------------------------------------------------

POINT_COLUMNS = ("s", "lambda", "m", "Q", "residual", "minWkh", "supNorm")


@dataclass
class BranchFile:
    header: dict
    params: FlowParameters
    records: list = field(default_factory=list)
    verdict: str = ""
    message: str = ""

    @property
    def newton_tol(self) -> float:
        return float(self.header.get("newton_tol", 1e-12))


def format_branch(branch: cont.Branch, cfg: RunConfig, direction: int) -> str:
    p = branch.params
    o = branch.origin
    head = {"format": FORMAT_TAG}
    head.update({k: getattr(p, k) for k in _FLOW_KEYS})
    head.update(newton_tol=cfg.newton_tol, mode=o.n, sign=o.sign, direction=direction,
                lambda_star=o.lambda_star, m_star=o.m_star, kernel_dim=o.kernel_dim,
                x_star_stride=branch.x_star_stride,
                columns=" ".join(POINT_COLUMNS) + " " + " ".join(f"a_{n}" for n in range(1, p.N + 1)))
    lines = [f"{k}={_fmt(v)}" for k, v in head.items()]
    for pt in branch.points:
        vals = [pt.arclength, pt.lam, pt.m, pt.Q, pt.residual_norm, pt.min_wkh, pt.sup_norm, *pt.coeffs()]
        lines.append(" ".join("%.17g" % v for v in vals))
    lines.append(f"verdict={branch.verdict}")
    lines.append("message=" + branch.message.replace("\n", " "))
    return "\n".join(lines) + "\n"


def read_branch(path) -> BranchFile:
    header, records, verdict, message = {}, [], "", ""
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        if "=" in line:
            key, value = line.split("=", 1)
            if key == "verdict":
                verdict = value
            elif key == "message":
                message = value
            else:
                header[key] = value
            continue
        nums = [float(x) for x in line.split()]
        rec_ = dict(zip(POINT_COLUMNS, nums[:len(POINT_COLUMNS)]))
        rec_["coeffs"] = np.array(nums[len(POINT_COLUMNS):])
        records.append(rec_)
    if header.get("format") != FORMAT_TAG:
        raise InvalidConfig(f"{path}: not a {FORMAT_TAG} file")
    kw = {}
    for k in _FLOW_KEYS:
        if k in header and header[k] not in ("None", ""):
            kw[k] = int(header[k]) if k in ("N", "M") else float(header[k])
    params = FlowParameters(**kw)
    for r in records:
        if r["coeffs"].size != params.N:
            raise InvalidConfig(f"{path}: record has {r['coeffs'].size} coefficients, expected N={params.N}")
    return BranchFile(header, params, records, verdict, message)


def cmd_continue(cfg: RunConfig, n: int, sign: int, direction: int, out=None):
    """Trace one branch and write it; returns (Branch, path)."""
    p = cfg.flow_params()
    branch = cont.trace_branch(p, n, sign, direction, cfg.continuation_config(), cfg.n_max)
    path = Path(out) if out else Path(cfg.output_dir) / branch_filename(n, sign, direction)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_branch(branch, cfg, direction), encoding="utf-8")
    return branch, path


def branch_filename(n: int, sign: int, direction: int) -> str:
    return f"branch_{n}{'p' if sign > 0 else 'm'}_{'up' if direction > 0 else 'down'}.txt"


# --------------------------------------------------------------------------
# Profiles
# --------------------------------------------------------------------------

def cmd_reconstruct(branch_path, index: int, out=None):
    """Profile (t, X, Y) of one stored point plus a validation report."""
    bf = read_branch(branch_path)
    if not 0 <= index < len(bf.records):
        raise IndexOutOfRange(f"index {index} outside 0..{len(bf.records) - 1}")
    r = bf.records[index]
    p = bf.params
    w = TrigSeries.from_cos(r["coeffs"])
    sol = rec.reconstruct(r["m"], w, p)
    adm = rec.admissibility(w, p)
    bed, top = sol.boundary_errors()
    report = {
        "index": index, "lambda": r["lambda"], "m": r["m"], "Q": sol.Q,
        "bernoulli_sup": rec.bernoulli_residual(sol).sup(),
        "psi_bed_error": bed, "psi_surface_error": top,
        "above_bed": adm.above_bed, "above_bed_margin": adm.above_bed_margin,
        "nonstagnant": adm.nonstagnant, "min_wkh": adm.min_wkh,
        "injective": adm.injective, "injectivity_margin": adm.injectivity_margin,
    }
    text = "# t X Y\n" + "".join("%.17g %.17g %.17g\n" % row for row in zip(sol.t, sol.X, sol.Y))
    if out:
        Path(out).write_text(text, encoding="utf-8")
    return sol, report, text


# --------------------------------------------------------------------------
# Verification and sweeps
# --------------------------------------------------------------------------

def cmd_verify(cfg: RunConfig, branch_paths=()):
    branches = []
    for path in branch_paths:
        bf = read_branch(path)
        branches.append((bf.params, bf.records, 10 * bf.newton_tol))
    return verification.run_suite(cfg.flow_params(), cfg.seed, branches)


def parse_grid(specs) -> list[dict]:
    """['gamma=-1,0,1', 'sigma=0.05,0.2'] -> cartesian product of overrides, in order."""
    axes = []
    for axis in specs:
        if "=" not in axis:
            raise InvalidConfig(f"bad grid axis {axis!r}; expected key=v1,v2,...")
        key, values = axis.split("=", 1)
        key = key.strip()
        if key not in _FLOW_KEYS:
            raise InvalidConfig(f"cannot sweep over {key!r}")
        axes.append([(key, v.strip()) for v in values.split(",") if v.strip()])
    return [dict(combo) for combo in itertools.product(*axes)] if axes else [{}]


def cmd_sweep(cfg: RunConfig, grid_specs, out_dir=None):
    """Run every grid cell and write per-cell outputs; returns the cell results."""
    base = {k: getattr(cfg, k) for k in _FLOW_KEYS}
    cells = []
    for override in parse_grid(grid_specs):
        cell = dict(base)
        for key, raw in override.items():
            cell[key] = int(raw) if key in ("N", "M") else float(raw)
        cells.append(cell)
    results = cont.sweep(cells, parse_modes(cfg.modes), cfg.continuation_config(), cfg.workers, cfg.direction)
    root = Path(out_dir or cfg.output_dir)
    summary = []
    for res in results:
        d = root / f"cell_{res.index:03d}"
        d.mkdir(parents=True, exist_ok=True)
        (d / "cell.txt").write_text("".join(f"{k}={_fmt(v)}\n" for k, v in res.params.items()), encoding="utf-8")
        if res.status != "ok":
            (d / "error.txt").write_text(f"{res.status}: {res.error}\n", encoding="utf-8")
            summary.append(f"{res.index} {res.status}")
            continue
        (d / "bifpoints.txt").write_text(format_table(res.table, int(res.params["N"])), encoding="utf-8")
        parts = []
        for label, br in res.branches:
            if isinstance(br, cont.Branch):
                sign = 1 if label.endswith("+") else -1
                name = branch_filename(int(label[:-1]), sign, cfg.direction)
                cell_cfg = dataclasses.replace(cfg, **{k: res.params[k] for k in _FLOW_KEYS})
                (d / name).write_text(format_branch(br, cell_cfg, cfg.direction), encoding="utf-8")
                parts.append(f"{label}:{br.verdict}:{len(br.points)}")
            else:
                parts.append(f"{label}:error")
                (d / f"error_{label}.txt").write_text(br + "\n", encoding="utf-8")
        summary.append(f"{res.index} ok " + " ".join(parts))
    (root / "summary.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")
    return results


# --------------------------------------------------------------------------
# Command line
# --------------------------------------------------------------------------

def _config_flags() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value config file")
    common.add_argument("-v", "--verbose", action="store_true")
    for f in fields(RunConfig):
        common.add_argument("--" + f.name.replace("_", "-"), dest=f.name, default=argparse.SUPPRESS,
                            metavar=f.name.upper())
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _config_flags()
    ap = argparse.ArgumentParser(prog="capwave", description="Steady capillary-gravity waves with "
                                 "constant vorticity: bifurcation, continuation, reconstruction.")
    sub = ap.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bifpoints", parents=[common], help="table of bifurcation values")
    b.add_argument("--out")

    c = sub.add_parser("continue", parents=[common], help="trace one branch")
    c.add_argument("--mode", type=int, required=True)
    c.add_argument("--branch-sign", choices=["+", "-"], default="+", help="lambda_+ or lambda_-")
    c.add_argument("--out")

    v = sub.add_parser("verify", parents=[common], help="run the self-check suite")
    v.add_argument("--branch", action="append", default=[], help="branch file to re-validate")

    r = sub.add_parser("reconstruct", parents=[common], help="physical profile of a stored point")
    r.add_argument("--branch", required=True)
    r.add_argument("--index", type=int, required=True)
    r.add_argument("--out")

    s = sub.add_parser("sweep", parents=[common], help="bifurcation + continuation over a parameter grid")
    s.add_argument("--grid", action="append", default=[], help="key=v1,v2,... (repeatable)")
    return ap


_COMMAND_ARGS = {"command", "config", "verbose", "out", "mode", "branch_sign", "branch", "index", "grid"}


def load_config(args: argparse.Namespace) -> RunConfig:
    overrides = {k: v for k, v in vars(args).items() if k not in _COMMAND_ARGS}
    if args.config:
        return RunConfig.from_file(args.config, overrides)
    return RunConfig.from_mapping(overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "reconstruct":
            _, report, text = cmd_reconstruct(args.branch, args.index, args.out)
            if not args.out:
                sys.stdout.write(text)
            for k, v in report.items():
                print(f"# {k}={_fmt(v)}")
            return EXIT_OK
        cfg = load_config(args)
        if args.command == "bifpoints":
            text = cmd_bifpoints(cfg, args.out)
            if not args.out:
                sys.stdout.write(text)
            return EXIT_OK
        if args.command == "continue":
            sign = 1 if args.branch_sign == "+" else -1
            branch, path = cmd_continue(cfg, args.mode, sign, cfg.direction, args.out)
            print(f"{path}: {len(branch.points)} points, verdict {branch.verdict}")
            return EXIT_ANOMALY if branch.verdict in ANOMALOUS else EXIT_OK
        if args.command == "verify":
            results = cmd_verify(cfg, args.branch)
            for r in results:
                print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
            return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY
        if args.command == "sweep":
            results = cmd_sweep(cfg, args.grid)
            bad = False
            for res in results:
                if res.status != "ok":
                    bad = True
                    print(f"cell {res.index}: {res.status} {res.error}")
                    continue
                for label, br in res.branches:
                    if isinstance(br, cont.Branch):
                        bad |= br.verdict in ANOMALOUS
                        print(f"cell {res.index} {label}: {br.verdict} ({len(br.points)} points)")
                    else:
                        bad = True
                        print(f"cell {res.index} {label}: {br}")
            return EXIT_ANOMALY if bad else EXIT_OK
    except (InvalidParameters, IndexOutOfRange, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CapwaveError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ANOMALY
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
