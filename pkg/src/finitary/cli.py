"""Command-line front end.

Every CSV written starts with ``# config: {...}`` echoing the run
configuration, so a run can be reproduced from its output alone.

Exit status: 0 on success, 1 when a statistical check fails, 2 on usage
or input errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dilution import make_plan, undilute
from .dist_core import gaps_from_bits, load_jump_distribution, validate_codable
from .errors import FinitaryError
from .gf_analysis import analyze_gf, pmf_Tstar, residuals, verify_asymptotic
from .markov_coder import code_markov_range, load_kernel, prepare_markov
from .pipeline import code_renewal_pipeline
from .renewal_coder import build_coder_params, cftp_code_range, code_renewal_range
from .streams import FILL, Z_CHAIN, UniformStream
from .verify import chi_square_gaps, density_check, fit_window_tail, independence_lag

SEED_DIR_ENV = "FINITARY_SEED_DIR"
ALPHA = 1e-3


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    dist: str | None = None
    kernel: str | None = None
    seed: int = 0
    range: tuple[int, int] | None = None
    mu: float = 0.5
    n_max: int = 200
    out: str | None = None
    budget: int | None = None
    input: str | None = None

    def to_json(self) -> str:
        d = asdict(self)
        if d["range"] is not None:
            d["range"] = f"{self.range[0]}..{self.range[1]}"
        return json.dumps(d, sort_keys=True)


def parse_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = text.split("..")
        lo_i, hi_i = int(lo), int(hi)
    except ValueError:
        raise argparse.ArgumentTypeError(f"range must look like lo..hi, got {text!r}")
    if hi_i < lo_i:
        raise argparse.ArgumentTypeError(f"empty range {text!r}")
    return lo_i, hi_i


def default_seed() -> int:
    seed_dir = os.environ.get(SEED_DIR_ENV)
    if seed_dir:
        path = Path(seed_dir) / "seed"
        if path.exists():
            return int(path.read_text().strip())
    return 0


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(cfg: RunConfig, header: list[str], rows, comments: list[str] = ()) -> None:
    buf = io.StringIO()
    buf.write(f"# config: {cfg.to_json()}\n")
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)


def _read_csv(path: str) -> dict[str, np.ndarray]:
    p = Path(path)
    if not p.exists():
        raise UsageError(f"no such file: {path}")
    lines = [ln for ln in p.read_text().splitlines() if ln and not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if header is None:
        raise UsageError(f"{path} is empty")
    cols: dict[str, list] = {h: [] for h in header}
    for row in reader:
        for h, v in zip(header, row):
            cols[h].append(v)
    out = {}
    for h, vals in cols.items():
        try:
            out[h] = np.array([int(v) for v in vals], dtype=np.int64)
        except ValueError:
            out[h] = np.array(vals, dtype=object)
    return out


def _need(value, flag: str):
    if value is None:
        raise UsageError(f"{flag} is required")
    return value


def _load_dist(path: str | None):
    path = _need(path, "--dist")
    if not Path(path).exists():
        raise UsageError(f"no such file: {path}")
    return load_jump_distribution(path)


def _load_kernel(path: str | None):
    path = _need(path, "--kernel")
    if not Path(path).exists():
        raise UsageError(f"no such file: {path}")
    return load_kernel(path)


# --- report helpers ------------------------------------------------------------


def renewal_report(bits: np.ndarray, d, windows=None, params=None) -> tuple[list[str], bool]:
    gaps = gaps_from_bits(bits)
    lines, ok = [], True
    dens = density_check(bits, d)
    lines.append(f"density={dens.density!r} target={dens.target!r} z={dens.z!r} pass={dens.passed}")
    ok &= dens.passed
    chi = chi_square_gaps(gaps, d)
    lines.append(f"chi_square statistic={chi.statistic!r} dof={chi.dof} p_value={chi.p_value!r} "
                 f"pass={chi.passed(ALPHA)}")
    ok &= chi.passed(ALPHA)
    lag = independence_lag(gaps)
    lines.append("lag_rho=" + ",".join(repr(float(r)) for r in lag.rho)
                 + f" threshold={lag.threshold!r} pass={lag.passed}")
    ok &= lag.passed
    if windows is not None and len(windows) >= 10_000:
        fit = fit_window_tail(windows, params)
        lines.append(f"window_tail slope={fit.slope!r} r2={fit.r2!r} dominance_ratio={fit.dominance_ratio!r} "
                     f"pass={fit.passed()}")
        ok &= fit.passed()
    return lines, bool(ok)


# --- subcommands -----------------------------------------------------------------


def cmd_analyze_gf(cfg: RunConfig) -> int:
    d = _load_dist(cfg.dist)
    rep = analyze_gf(d, cfg.mu)
    q = pmf_Tstar(d, cfg.mu, cfg.n_max)
    r = residuals(q, rep)
    try:
        asym = verify_asymptotic(q, rep)
        kappa = "inf" if asym.exact else repr(asym.kappa_est)
    except FinitaryError:
        kappa = "nan"
    n = np.arange(1, cfg.n_max + 1)
    pole = float(rep.c) * float(rep.nu) ** (-n - 1.0)
    comments = [f"report: mu={rep.mu!r} nu={float(rep.nu)!r} c={float(rep.c)!r} radius={rep.radius!r} "
                f"kappa_est={kappa}"]
    _write_csv(cfg, ["n", "q", "pole", "residual"], zip(n, q, pole, r), comments)
    return 0


def cmd_code_renewal(cfg: RunConfig) -> int:
    d = _load_dist(cfg.dist)
    lo, hi = _need(cfg.range, "--range")
    rep = validate_codable(d)
    if not rep.non_lattice:
        raise UsageError(f"LatticeInput: jump distribution is lattice (gcd {rep.gcd})")
    y = UniformStream(cfg.seed, Z_CHAIN)
    if d.bounded:
        cs = cftp_code_range(d, y, lo, hi)
        route = "cftp"
    else:
        params = build_coder_params(d)
        cs = code_renewal_range(y, lo, hi, params, budget=cfg.budget)
        route = "regeneration"
    _write_csv(cfg, ["index", "bit", "window", "regen_time"],
               zip(cs.indices, cs.bits, cs.windows, cs.regen_times), [f"route: {route}"])
    return 0


def cmd_code_markov(cfg: RunConfig) -> int:
    k = _load_kernel(cfg.kernel)
    lo, hi = _need(cfg.range, "--range")
    pl = prepare_markov(k, mu=cfg.mu)
    cc = code_markov_range(pl.kernel, y=cfg.seed, lo=lo, hi=hi, pipeline=pl, budget=cfg.budget)
    comments = [f"anchor: {pl.kernel.states[pl.anchor]} mu={pl.mu!r}"]
    _write_csv(cfg, ["index", "state", "window"],
               zip(range(lo, hi + 1), cc.labels, cc.windows), comments)
    return 0


def cmd_undilute(cfg: RunConfig) -> int:
    d = _load_dist(cfg.dist)
    cols = _read_csv(_need(cfg.input, "input file"))
    name = "position" if "position" in cols else next(iter(cols))
    pts = np.sort(cols[name].astype(np.int64))
    filled = undilute(pts, make_plan(d, cfg.mu), UniformStream(cfg.seed, FILL))
    _write_csv(cfg, ["position"], ((int(p),) for p in filled))
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    cols = _read_csv(_need(cfg.input, "input file"))
    lines: list[str] = []
    ok = True
    if "bit" in cols:
        d = _load_dist(cfg.dist)
        params = None
        if not d.bounded and validate_codable(d).non_lattice:
            params = build_coder_params(d)
        windows = cols.get("window")
        more, ok = renewal_report(cols["bit"], d, windows, params)
        lines += more
    elif "state" in cols:
        k = _load_kernel(cfg.kernel)
        more, ok = markov_report(cols["state"], k, cols.get("window"))
        lines += more
    else:
        raise UsageError("input needs a 'bit' or 'state' column")
    lines.append(f"overall pass={ok}")
    _write_csv(cfg, ["report"], ((ln,) for ln in lines))
    return 0 if ok else 1


def markov_report(labels, k, windows=None) -> tuple[list[str], bool]:
    from .markov_coder import validated

    k = validated(k)
    lookup = {str(s): i for i, s in enumerate(k.states)}
    states = np.array([lookup[str(v)] for v in labels], dtype=np.int64)
    freq = np.bincount(states, minlength=k.size) / states.size
    tv = 0.5 * float(np.abs(freq - k.pi).sum())
    lines = [f"state_tv={tv!r} pass={tv < 0.01}"]
    ok = tv < 0.01
    P = k.dense
    worst = 0.0
    for x in range(k.size):
        nx = int(np.sum(states[:-1] == x))
        if nx == 0:
            continue
        nxt = np.bincount(states[1:][states[:-1] == x], minlength=k.size) / nx
        sig = np.sqrt(P[x] * (1 - P[x]) / nx)
        z = np.where(sig > 0, np.abs(nxt - P[x]) / np.where(sig > 0, sig, 1), np.where(nxt != P[x], np.inf, 0))
        worst = max(worst, float(z.max()))
    lines.append(f"transition_max_z={worst!r} pass={worst < 3}")
    ok &= worst < 3
    if windows is not None and len(windows) >= 10_000:
        fit = fit_window_tail(windows)
        lines.append(f"window_tail slope={fit.slope!r} r2={fit.r2!r} pass={fit.passed()}")
        ok &= fit.passed()
    return lines, bool(ok)


def cmd_pipeline(cfg: RunConfig) -> int:
    d = _load_dist(cfg.dist)
    lo, hi = _need(cfg.range, "--range")
    rep = validate_codable(d)
    if not rep.non_lattice:
        raise UsageError(f"LatticeInput: jump distribution is lattice (gcd {rep.gcd})")
    sk, pl = code_renewal_pipeline(d, cfg.seed, lo, hi, cfg.mu, budget=cfg.budget)
    bits = sk.bits()
    lines, ok = renewal_report(bits, d, sk.windows)
    lines.insert(0, f"mu={pl.mu!r} nu={float(pl.gf.nu)!r} c={float(pl.gf.c)!r} n0={pl.params.n0} "
                    f"a={pl.params.a!r} b={pl.params.b!r}")
    lines.append(f"overall pass={ok}")
    comments = ["verify: " + ln for ln in lines]
    _write_csv(cfg, ["index", "bit", "window"], zip(range(lo, hi + 1), bits, sk.windows), comments)
    if cfg.out:
        sys.stdout.write("\n".join(lines) + "\n")
    return 0 if ok else 1


COMMANDS = {
    "analyze-gf": cmd_analyze_gf,
    "code-renewal": cmd_code_renewal,
    "code-markov": cmd_code_markov,
    "undilute": cmd_undilute,
    "verify": cmd_verify,
    "pipeline": cmd_pipeline,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="finitary", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--dist")
        p.add_argument("--kernel")
        p.add_argument("--seed", type=int)
        p.add_argument("--range", type=parse_range)
        p.add_argument("--mu", type=float, default=0.5)
        p.add_argument("--nmax", type=int, default=200)
        p.add_argument("--out")
        p.add_argument("--budget", type=int)
        if name in ("undilute", "verify"):
            p.add_argument("input", help="CSV input")
    return parser


def run(cfg: RunConfig) -> int:
    try:
        return COMMANDS[cfg.command](cfg)
    except (UsageError, FinitaryError, ValueError, KeyError, OSError) as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return 2


def _join_range(argv: list[str]) -> list[str]:
    # argparse takes "-5..0" for an option; glue it to its flag
    out: list[str] = []
    it = iter(argv)
    for a in it:
        if a == "--range":
            nxt = next(it, None)
            out.append(a if nxt is None else f"--range={nxt}")
        else:
            out.append(a)
    return out


def main(argv=None) -> int:
    parser = build_parser()
    argv = _join_range(list(sys.argv[1:] if argv is None else argv))
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and 2
    cfg = RunConfig(command=args.command, dist=args.dist, kernel=args.kernel,
                    seed=args.seed if args.seed is not None else default_seed(),
                    range=args.range, mu=args.mu, n_max=args.nmax, out=args.out,
                    budget=args.budget, input=getattr(args, "input", None))
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
