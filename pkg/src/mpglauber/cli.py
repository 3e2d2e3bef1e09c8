"""Command-line entry point: ``mpglauber <subcommand> [flags]``.

Every CSV starts with ``# ``-prefixed lines recording the package
version, the resolved configuration and the seed, so any output can be
regenerated byte for byte. Exit codes: 0 success, 1 runtime failure,
2 invalid input.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import math
import sys
from fractions import Fraction

from . import __version__
from .partition import PartitionSpec, SpecError

EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2

# flag name -> (type, default); a default of None means "not set"
OPTIONS = {
    "m": (int, None),
    "p": (str, None),
    "beta": (float, None),
    "n": (int, None),
    "n-ladder": (str, None),
    "t-max": (int, None),
    "gamma": (str, None),
    "zeta": (str, None),
    "replicas": (int, None),
    "seed": (int, None),
    "out": (str, None),
    "mem-cap": (int, 10**7),
    "start": (str, "all-plus"),
    "stride": (int, 1),
    "tail-out": (str, None),
}


class ConfigError(ValueError):
    pass


# --- configuration ----------------------------------------------------------

def read_config_file(path: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("_", "-")
            if key not in OPTIONS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value
    return out


def resolve(args: argparse.Namespace) -> dict:
    """Merge defaults, the config file and flags (flags win) and coerce types."""
    file_values = read_config_file(args.config) if args.config else {}
    cfg = {}
    for key, (typ, default) in OPTIONS.items():
        flag = getattr(args, key.replace("-", "_"), None)
        value = flag if flag is not None else file_values.get(key, default)
        if value is not None:
            try:
                value = typ(value)
            except ValueError as exc:
                raise ConfigError(f"--{key}: cannot parse {value!r}") from exc
        cfg[key] = value
    return cfg


def parse_ladder(text: str) -> list:
    """``"64:512"`` -> ``[64, 128, 256, 512]``."""
    try:
        a, b = (int(x) for x in text.split(":"))
    except ValueError as exc:
        raise ConfigError(f"--n-ladder expects start:stop, got {text!r}") from exc
    if a < 1 or b < a:
        raise ConfigError("--n-ladder needs 1 <= start <= stop")
    out = []
    while a <= b:
        out.append(a)
        a *= 2
    return out


def parse_floats(text: str, name: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ConfigError(f"--{name} expects comma-separated numbers, got {text!r}") from exc


def proportions(cfg: dict):
    if cfg["p"] is not None:
        return cfg["p"]
    if cfg["m"] is None:
        raise ConfigError("one of --p or --m is required")
    if cfg["m"] < 1:
        raise SpecError("m >= 1: at least one partition is required")
    return [Fraction(1, cfg["m"])] * cfg["m"]


def make_spec(cfg: dict, n: int | None = None) -> PartitionSpec:
    n = cfg["n"] if n is None else n
    if n is None:
        raise ConfigError("--n is required")
    if cfg["beta"] is None:
        raise ConfigError("--beta is required")
    return PartitionSpec.parse(proportions(cfg), n, cfg["beta"], cfg["m"])


def n_values(cfg: dict) -> list:
    if cfg["n-ladder"]:
        return parse_ladder(cfg["n-ladder"])
    if cfg["n"] is None:
        raise ConfigError("one of --n or --n-ladder is required")
    return [cfg["n"]]


def header(command: str, cfg: dict) -> list:
    shown = {k: v for k, v in sorted(cfg.items()) if v is not None and k not in ("out", "tail-out")}
    return [f"mpglauber {__version__}", f"command: {command}",
            "config: " + json.dumps(shown, sort_keys=True), f"seed: {cfg.get('seed')}"]


@contextlib.contextmanager
def output(path: str | None):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


# --- subcommands ------------------------------------------------------------

def cmd_spectral(cfg: dict) -> int:
    from .spectral import perron, verify_identities

    spec = make_spec(cfg)
    sd = perron(spec)
    rep = verify_identities(sd, spec)
    doc = {"schema": "mpglauber.spectral/1", "version": __version__, "config": spec.describe()}
    doc.update(sd.to_dict())
    doc["identity_residuals"] = rep.residuals
    doc["ok"] = rep.ok
    with output(cfg["out"]) as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK if rep.ok else EXIT_RUNTIME


def cmd_tv(cfg: dict) -> int:
    from .coordchain import CoordChain
    from .magchain import MagnetizationChain, extreme_starts, write_tv_csv

    spec = make_spec(cfg)
    t_max = cfg["t-max"]
    if t_max is None or t_max < 0:
        raise ConfigError("--t-max >= 0 is required")
    grid = list(range(0, t_max + 1, cfg["stride"]))
    start = cfg["start"]
    if start == "reference":
        chain = CoordChain(spec, mem_cap=cfg["mem-cap"])
        rows, tag = chain.exact_tv_full(grid), "coord"
    elif start in ("all-plus", "all-minus"):
        rows, tag = MagnetizationChain(spec, cfg["mem-cap"]).tv_curve(start, grid), None
    elif start == "extremes":
        # max over the monotone extremes: a proxy for d_n(t), not the exact worst case
        chain = MagnetizationChain(spec, cfg["mem-cap"])
        curves = [chain.tv_curve(s, grid) for s in extreme_starts(spec)]
        rows = [(t, max(c[j][1] for c in curves)) for j, t in enumerate(grid)]
        tag = "mag-extremes"
    else:
        raise ConfigError("--start must be all-plus, all-minus, extremes or reference")
    with output(cfg["out"]) as fh:
        write_tv_csv(fh, rows, header("tv", cfg), chain=tag)
    return EXIT_OK


def cutoff_rows(p, beta: float, ns, mem_cap: int, eps=(0.25, 0.75)) -> list:
    """Mixing times from all-plus and their rescalings across ``ns``."""
    from .magchain import MagnetizationChain
    from .spectral import perron

    rows = []
    for n in ns:
        spec = PartitionSpec(p, n, beta)
        sd = perron(spec)
        tm = MagnetizationChain(spec, mem_cap).mixing_times("all-plus", eps)
        t25, t75 = tm[eps[0]], tm[eps[1]]
        t_n = spec.cutoff_time(sd.upsilon)
        nlogn = n * math.log(n)
        window = t25 - t75
        rows.append({
            "n": n, "t_n": t_n, "tmix_25": t25, "tmix_75": t75,
            "ratio": t25 / t75 if t75 else math.inf,
            "tmix_25_over_t_n": t25 / t_n, "tmix_25_over_nlogn": t25 / nlogn,
            "window_over_n": window / n, "window_over_nlogn": window / nlogn,
        })
    return rows


CUTOFF_COLUMNS = ("n", "t_n", "tmix_25", "tmix_75", "ratio", "tmix_25_over_t_n",
                  "tmix_25_over_nlogn", "window_over_n", "window_over_nlogn")


def cmd_cutoff_scan(cfg: dict) -> int:
    spec0 = make_spec(cfg, n_values(cfg)[0])
    rows = cutoff_rows(spec0.p, spec0.beta, n_values(cfg), cfg["mem-cap"])
    with output(cfg["out"]) as fh:
        for line in header("cutoff-scan", cfg):
            fh.write(f"# {line}\n")
        fh.write(",".join(CUTOFF_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(repr(r[c]) if isinstance(r[c], float) else str(r[c]) for c in CUTOFF_COLUMNS) + "\n")
    return EXIT_OK


def cmd_coupling(cfg: dict) -> int:
    from .coupling import cutoff_steps, run_couplings, tail_curve, write_coupling_csv, write_tail_csv
    from .spectral import perron

    if cfg["seed"] is None:
        raise ConfigError("--seed is required for stochastic subcommands")
    spec = make_spec(cfg)
    sd = perron(spec)
    if not spec.beta < sd.beta_cr:
        raise ConfigError(f"coupling needs beta < beta_cr = {sd.beta_cr}")
    replicas = cfg["replicas"] or 1000
    t_n = cutoff_steps(spec, sd.upsilon)
    gammas = parse_floats(cfg["gamma"], "gamma") if cfg["gamma"] else [0, 1, 2, 4, 10]
    grid = sorted({max(0, math.ceil(t_n + g * spec.n)) for g in gammas})
    t_max = cfg["t-max"] if cfg["t-max"] is not None else max(grid) + 1
    records = run_couplings(spec, sd, t_max, replicas, cfg["seed"])
    head = header("coupling", cfg) + [f"t_n: {t_n}"]
    with output(cfg["out"]) as fh:
        write_coupling_csv(fh, records, head)
    if cfg["tail-out"]:
        with output(cfg["tail-out"]) as fh:
            write_tail_csv(fh, tail_curve([r.tau_tot for r in records], t_max, grid), head)
    return EXIT_OK


def cmd_lower(cfg: dict) -> int:
    from .bounds import DEFAULT_GAMMAS, lower_bound_sweep, write_lower_csv

    gammas = parse_floats(cfg["gamma"], "gamma") if cfg["gamma"] else list(DEFAULT_GAMMAS)
    zetas = parse_floats(cfg["zeta"], "zeta") if cfg["zeta"] else None
    rows = []
    for n in n_values(cfg):
        spec = make_spec(cfg, n)
        try:
            rows += [(spec, r) for r in lower_bound_sweep(spec, gammas, zetas, cfg["mem-cap"])]
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    with output(cfg["out"]) as fh:
        write_lower_csv(fh, rows, header("lower", cfg))
    return EXIT_OK


def cmd_conductance(cfg: dict) -> int:
    from .bounds import conductance_cut, write_conductance_csv

    results = [conductance_cut(make_spec(cfg, n), mem_cap=cfg["mem-cap"]) for n in n_values(cfg)]
    with output(cfg["out"]) as fh:
        write_conductance_csv(fh, results, header("conductance", cfg))
    return EXIT_OK


def oracle_report(spec: PartitionSpec, t_max: int = 60) -> dict:
    """Largest discrepancies between the lumped chains and the 2^n enumeration."""
    import numpy as np

    from .coordchain import (CoordChain, lump_configs_to_coords, lump_configs_to_counts,
                             oracle_full_chain)
    from .magchain import MagnetizationChain

    grid = list(range(t_max + 1))
    o = oracle_full_chain(spec, np.ones(spec.n), grid)
    mc = MagnetizationChain(spec)
    counts = lump_configs_to_counts(spec, o.spins)
    lumped = np.zeros(mc.shape)
    for c, w in zip(counts, o.mu):
        lumped[c] += w
    out = {"stationary": float(np.abs(lumped - mc.stationary()).max())}
    out["tv_all_plus"] = max(abs(a[1] - b[1]) for a, b in zip(o.tv, mc.tv_curve("all-plus", grid)))
    # kernel rows: push each configuration's row forward to plus counts
    K = o.kernel.tocsr()
    worst = 0.0
    index = {c: i for i, c in enumerate(counts)}
    for c, i in index.items():
        row = K.getrow(i)
        got = {}
        for j, w in zip(row.indices, row.data):
            got[counts[j]] = got.get(counts[j], 0.0) + w
        for y, prob in mc.transition_probs(c):
            worst = max(worst, abs(got.pop(y, 0.0) - prob))
        worst = max([worst] + [abs(w) for w in got.values()])
    out["kernel"] = worst
    cc = CoordChain(spec)
    ref = np.where(np.frombuffer(bytes(cc.ref.config_bits(spec)), dtype=np.uint8) > 0, 1, -1)
    o2 = oracle_full_chain(spec, ref, grid)
    out["tv_reference"] = max(abs(a[1] - b[1]) for a, b in zip(o2.tv, cc.exact_tv_full(grid)))
    coords = lump_configs_to_coords(spec, ref, o.spins)
    lumped2 = np.zeros(cc.shape)
    for c, w in zip(coords, o.mu):
        lumped2[c] += w
    out["coord_stationary"] = float(np.abs(lumped2 - cc.stationary()).max())
    return out


def cmd_oracle_check(cfg: dict) -> int:
    from .coordchain import ORACLE_MAX_N

    spec = make_spec(cfg)
    if spec.n > ORACLE_MAX_N:
        raise ConfigError(f"oracle-check needs n <= {ORACLE_MAX_N}")
    rep = oracle_report(spec, cfg["t-max"] if cfg["t-max"] is not None else 60)
    ok = all(v <= 1e-10 for v in rep.values())
    with output(cfg["out"]) as fh:
        json.dump({"schema": "mpglauber.oracle/1", "version": __version__, "config": spec.describe(),
                   "max_abs_diff": rep, "tol": 1e-10, "ok": ok}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK if ok else EXIT_RUNTIME


COMMANDS = {
    "spectral": cmd_spectral,
    "tv": cmd_tv,
    "cutoff-scan": cmd_cutoff_scan,
    "coupling": cmd_coupling,
    "lower": cmd_lower,
    "conductance": cmd_conductance,
    "oracle-check": cmd_oracle_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpglauber", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="key=value file; flags take precedence")
        for key in OPTIONS:
            sp.add_argument(f"--{key}", dest=key.replace("-", "_"), default=None)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        cfg = resolve(args)
        return COMMANDS[args.command](cfg)
    except (SpecError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, RuntimeError, ArithmeticError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
