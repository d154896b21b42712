"""Command-line front end: convergence tables, CFL sweeps, stability sweeps and single solves.

Exit codes: 0 success, 1 invalid configuration, 2 solver failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from stwave.linalg import LinalgError
from stwave.stability import StabilityError, measured_band, measured_limit, q_grid, sweep, sweep_csv
from stwave.verification import (
    CASES,
    H_X_MEASURES,
    cells_from_width,
    error_norms,
    get_case,
    make_problem,
    run_cfl_sweep,
    run_convergence_study,
    steps_from_width,
)
from stwave.system import solve

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2
COMMANDS = ("convergence", "cfl-sweep", "stability-sweep", "solve")


class ConfigError(ValueError):
    pass


@dataclass
class StudyConfig:
    command: str
    case: str = "A1"
    levels: list[int] = field(default_factory=list)
    T: float | None = None
    nt: list[int] = field(default_factory=list)
    hx_list: list[float] = field(default_factory=list)
    ht_list: list[float] = field(default_factory=list)
    hx_measure: str = "leg"
    n: int | None = None
    sigma: float | None = None
    q_min: float = 0.0
    q_max: float = 100.0
    step: float = 0.1
    out: str | None = None
    format: str = "csv"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "StudyConfig":
        return cls(**json.loads(text))

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.command != "stability-sweep" and self.case.upper() not in CASES:
            raise ConfigError(f"unknown case {self.case!r}; choose from {sorted(CASES)}")
        if self.format not in ("csv", "md"):
            raise ConfigError(f"unknown format {self.format!r}")
        if self.T is not None and not self.T > 0:
            raise ConfigError("T must be positive")
        if self.sigma is not None and self.sigma < 0:
            raise ConfigError("sigma must be nonnegative")
        if self.command == "convergence":
            if not self.levels:
                raise ConfigError("convergence needs at least one level")
            if any(L < 0 for L in self.levels):
                raise ConfigError("levels must be nonnegative")
            if self.nt and len(self.nt) != 1:
                raise ConfigError("convergence takes a single --nt (time elements on the first level)")
        if self.command == "cfl-sweep":
            if not self.hx_list:
                raise ConfigError("cfl-sweep needs --hx-list")
            if bool(self.ht_list) == bool(self.nt):
                raise ConfigError("cfl-sweep needs exactly one of --ht-list and --nt")
            if self.hx_measure not in H_X_MEASURES:
                raise ConfigError(f"unknown --hx-measure {self.hx_measure!r}")
        if self.command == "stability-sweep" and not self.step > 0:
            raise ConfigError("step must be positive")
        if self.command == "solve":
            if self.n is None or self.n < 1 or len(self.nt) != 1 or self.nt[0] < 1:
                raise ConfigError("solve needs --n and a single --nt, both positive")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stwave", description="Space-time FEM for the vectorial wave equation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, case=True):
        if case:
            sp.add_argument("--case", default="A1", help="manufactured solution: A1, A2 or A3")
            sp.add_argument("--T", type=float, default=None, help="final time (default: case value)")
            sp.add_argument("--sigma", type=float, default=None, help="conductivity value (A3: inside the diamond)")
        sp.add_argument("--out", default=None, help="output file (default: stdout)")
        sp.add_argument("--config", default=None, help="key = value file; command-line flags take precedence")
        sp.add_argument("--format", default="csv", choices=("csv", "md"))

    c = sub.add_parser("convergence", help="uniform refinement study with EOCs")
    common(c)
    c.add_argument("--levels", type=int, nargs="+", default=[], help="refinement levels, n = 2**level")
    c.add_argument("--nt", type=int, nargs=1, default=[], help="time elements on the first level (doubled per level)")

    s = sub.add_parser("cfl-sweep", help="error grid over h_x and h_t")
    common(s)
    s.add_argument("--hx-list", type=float, nargs="+", default=[])
    s.add_argument("--ht-list", type=float, nargs="+", default=[])
    s.add_argument("--nt", type=int, nargs="+", default=[], help="time element counts instead of --ht-list")
    s.add_argument("--hx-measure", default="leg", choices=H_X_MEASURES)

    q = sub.add_parser("stability-sweep", help="eigenvalues of the two-step recursion over q")
    common(q, case=False)
    q.add_argument("--q-min", type=float, default=0.0)
    q.add_argument("--q-max", type=float, default=100.0)
    q.add_argument("--step", type=float, default=0.1)

    v = sub.add_parser("solve", help="solve one discretization and write the coefficients")
    common(v)
    v.add_argument("--n", type=int, default=None, help="cells per side")
    v.add_argument("--nt", type=int, nargs=1, default=[], help="time elements")
    p.subcommands = {"convergence": c, "cfl-sweep": s, "stability-sweep": q, "solve": v}
    return p


_LIST_KEYS = {"levels": int, "nt": int, "hx_list": float, "ht_list": float}
_SCALAR_KEYS = {"T": float, "sigma": float, "q_min": float, "q_max": float, "step": float, "n": int}
_TEXT_KEYS = ("case", "hx_measure", "out", "format")


def read_config_file(path: str | Path) -> dict:
    """``key = value`` lines (``#`` comments); list values are comma or space separated."""
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#",))
    parser.optionxform = str
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from None
    try:
        parser.read_string("[study]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from None
    out = {}
    for key, raw in parser["study"].items():
        key = key.strip().replace("-", "_")
        if key not in _LIST_KEYS and key not in _SCALAR_KEYS and key not in _TEXT_KEYS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            if key in _LIST_KEYS:
                out[key] = [_LIST_KEYS[key](v) for v in raw.replace(",", " ").split()]
            elif key in _SCALAR_KEYS:
                out[key] = _SCALAR_KEYS[key](raw)
            else:
                out[key] = raw.strip()
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
    return out


def parse_config(argv: Sequence[str] | None = None) -> tuple[StudyConfig, bool]:
    """Parse the command line; values from ``--config`` fill in flags that were not given."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        values = read_config_file(args.config)
        sub = parser.subcommands[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(values) - known
        if unknown:
            raise ConfigError(f"config keys not valid for {args.command}: {sorted(unknown)}")
        sub.set_defaults(**values)
        args = parser.parse_args(argv)
    d = vars(args).copy()
    verbose = d.pop("verbose")
    fields = StudyConfig.__dataclass_fields__
    cfg = StudyConfig(**{k: v for k, v in d.items() if k in fields})
    return cfg, verbose


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def cmd_convergence(cfg: StudyConfig) -> str:
    case = get_case(cfg.case, cfg.T, cfg.sigma)
    rule = None
    if cfg.nt:
        first = min(cfg.levels)
        rule = lambda L: (2**L, cfg.nt[0] * 2 ** (L - first))  # noqa: E731
    table = run_convergence_study(case, sorted(cfg.levels), rule)
    return table.to_markdown() if cfg.format == "md" else table.to_csv()


def cmd_cfl_sweep(cfg: StudyConfig) -> str:
    case = get_case(cfg.case, cfg.T, cfg.sigma)
    try:
        n_cells = [cells_from_width(h, cfg.hx_measure) for h in cfg.hx_list]
        n_steps = list(cfg.nt) or [steps_from_width(h, case.T) for h in cfg.ht_list]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    res = run_cfl_sweep(case, n_cells, n_steps, measure=cfg.hx_measure)
    if cfg.format == "md":
        return "L2(Q) error\n\n" + res.to_markdown("L2") + "\nH(curl;1) seminorm error\n\n" + res.to_markdown("semi")
    return res.to_csv()


def cmd_stability_sweep(cfg: StudyConfig) -> str:
    if cfg.q_max < cfg.q_min:
        qs = np.array([])
    else:
        qs = cfg.q_min + q_grid(cfg.q_max - cfg.q_min, cfg.step)
        qs = qs[qs <= cfg.q_max + 1e-9 * cfg.step]
    text = sweep_csv(sweep(qs))
    if len(qs):
        lo, hi = measured_band()
        text += f"# band_edges={lo:.10g},{hi:.10g} limit={measured_limit():.10g}\n"
    if cfg.format == "md":
        rows = [line.split(",") for line in text.splitlines() if not line.startswith("#")]
        md = ["| " + " | ".join(rows[0]) + " |", "|---" * len(rows[0]) + "|"]
        md += ["| " + " | ".join(r) + " |" for r in rows[1:]]
        md += [line for line in text.splitlines() if line.startswith("#")]
        return "\n".join(md) + "\n"
    return text


def cmd_solve(cfg: StudyConfig) -> str:
    case = get_case(cfg.case, cfg.T, cfg.sigma)
    sol = solve(make_problem(case, cfg.n, cfg.nt[0]))
    el2, esemi = error_norms(sol, case)
    print(f"L2(Q) error {el2:.6e}  seminorm error {esemi:.6e}", file=sys.stderr)
    return sol.to_csv()


_DISPATCH = {
    "convergence": cmd_convergence,
    "cfl-sweep": cmd_cfl_sweep,
    "stability-sweep": cmd_stability_sweep,
    "solve": cmd_solve,
}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        cfg, verbose = parse_config(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"stwave: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg.validate()
        text = _DISPATCH[cfg.command](cfg)
    except ConfigError as exc:
        print(f"stwave: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (LinalgError, StabilityError) as exc:
        print(f"stwave: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    try:
        _emit(text, cfg.out)
    except OSError as exc:
        print(f"stwave: cannot write output: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
