"""Command-line scenario runner: ``hartree-waveops <subcommand> [--config PATH] [--out DIR]``."""
from __future__ import annotations

import argparse
import configparser
import csv
import dataclasses
import io
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import acceptance, auxsys, estfun, scattering
from .grid import GridError, ModelParams, random_band_limited, save_snapshot
from .hierarchy import (TailFitError, TimeGrid, hierarchy_decay_report, hierarchy_gauge_check, psi_tail_report,
                        solve_hierarchy)
from .transport import (StepRejected, V_rate_table, chi_rate_table, compare_V_Wp, gauge_check_transport,
                        richardson_pair, solve_chi, solve_V, transport_phase)

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2, 3
QUAD_TOL_ENV = "HSL_QUAD_TOL"


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ScenarioConfig:
    params: ModelParams = field(default_factory=ModelParams)
    p: int = 1
    seed: int = 7
    field_radius: int = 3
    a_plus: float = 1.0
    b_plus: float = 0.1
    t_min: float = 1.0
    t_max: float = 1e4
    steps_per_decade: int = 64
    t0_sequence: tuple = (50.0, 100.0, 200.0, 400.0)
    r_list: tuple = (2.0, 3.0, 6.0)
    out: str = "out"
    richardson: bool = False
    negative_control: bool = False
    gauge_suite: bool = True

    @property
    def time_grid(self) -> TimeGrid:
        return TimeGrid(self.t_min, self.t_max, self.steps_per_decade)

    def w_plus(self):
        return random_band_limited(self.seed, self.field_radius, self.a_plus, self.params.k, self.params)

    def psi_plus(self):
        return random_band_limited(self.seed + 4, self.field_radius, self.b_plus, self.params.k, self.params, real=True)


# section -> {key: (owner, type)}; owner "params" routes into ModelParams
_SCHEMA = {
    "model": {f.name: ("params", f.type) for f in dataclasses.fields(ModelParams)},
    "run": {"p": ("cfg", "int"), "seed": ("cfg", "int"), "field_radius": ("cfg", "int"),
            "a_plus": ("cfg", "float"), "b_plus": ("cfg", "float"), "out": ("cfg", "str"),
            "r_list": ("cfg", "floats")},
    "time": {"t_min": ("cfg", "float"), "t_max": ("cfg", "float"), "steps_per_decade": ("cfg", "int"),
             "t0_sequence": ("cfg", "floats")},
    "toggles": {"richardson": ("cfg", "bool"), "negative_control": ("cfg", "bool"), "gauge_suite": ("cfg", "bool")},
}


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(float(v)) for v in value)
    return str(value)


def _convert(kind: str, text: str):
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if kind == "bool":
        low = text.strip().lower()
        if low not in ("true", "false"):
            raise ValueError(f"expected true or false, got {text!r}")
        return low == "true"
    if kind == "floats":
        return tuple(float(x) for x in text.split(",") if x.strip())
    return text.strip()


def serialize(cfg: ScenarioConfig) -> str:
    out = io.StringIO()
    for section, keys in _SCHEMA.items():
        out.write(f"[{section}]\n")
        for key, (owner, _) in keys.items():
            value = getattr(cfg.params if owner == "params" else cfg, key)
            out.write(f"{key} = {_fmt(value)}\n")
        out.write("\n")
    return out.getvalue()


def _line_of(text: str, section: str, key: str | None) -> int:
    current = None
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if key is None and current == section:
                return no
        elif key is not None and current == section and line.split("=", 1)[0].strip() == key:
            return no
    return 0


def parse(text: str) -> ScenarioConfig:
    """Parse the flat ``key = value`` format; unknown sections and keys are errors."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keys are case-sensitive (n and N differ)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    model, cfg = {}, {}
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"line {_line_of(text, section, None)}: unknown section [{section}]")
        for key, raw in cp.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"line {_line_of(text, section, key)}: unknown key '{key}' in [{section}]")
            owner, kind = _SCHEMA[section][key]
            try:
                value = _convert(kind, raw)
            except ValueError as exc:
                raise ConfigError(f"line {_line_of(text, section, key)}: bad value for '{key}': {exc}") from None
            (model if owner == "params" else cfg)[key] = value
    try:
        params = ModelParams(**model)
        result = ScenarioConfig(params=params, **cfg)
        result.time_grid  # noqa: B018  (validates the time settings)
    except (GridError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return result


def load_config(path: str | None) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse(text)


# ---------------------------------------------------------------------------
# reports


def _check_finite(rows):
    for row in rows:
        for v in row:
            if isinstance(v, float) and not math.isfinite(v):
                raise ValueError("non-finite value in report row")


def write_csv(path: Path, header, rows) -> None:
    """Write a header and rows; rows with NaN/Inf are replaced by an explicit failure row."""
    clean = []
    for row in rows:
        row = list(row)
        try:
            _check_finite([row])
            clean.append(row)
        except ValueError:
            clean.append(["nonfinite"] + [0.0] * (len(header) - 1))
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in clean:
            wr.writerow([repr(v) if isinstance(v, float) else v for v in row])


RATE_HEADER = ["table", "t", "tau", "numerator", "envelope", "ratio"]


def rate_rows(tables):
    for tb in tables:
        for t, a, b, r in tb.rows():
            yield tb.name, t, math.log(t), a, b, r


def emit_plot(csv_path, columns, out_svg) -> Path:
    """Log-log line plot of ``columns[1:]`` against ``columns[0]`` as a self-contained SVG.

    Output bytes are a function of the CSV contents only.
    """
    csv_path, out_svg = Path(csv_path), Path(out_svg)
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{csv_path} has no data rows")
    missing = [c for c in columns if c not in rows[0]]
    if missing:
        raise KeyError(f"missing column(s) {missing} in {csv_path}")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    x = np.array([float(r[columns[0]]) for r in rows])
    fig, ax = plt.subplots(figsize=(6, 4))
    for col in columns[1:]:
        y = np.array([float(r[col]) for r in rows])
        keep = (x > 0) & (y > 0)
        ax.loglog(x[keep], y[keep], label=col)
    ax.set_xlabel(columns[0])
    ax.legend()
    with matplotlib.rc_context({"svg.hashsalt": "hartree-waveops", "svg.fonttype": "none"}):
        fig.savefig(out_svg, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)
    return out_svg


# ---------------------------------------------------------------------------
# subcommands


def _quad_tol() -> float:
    raw = os.environ.get(QUAD_TOL_ENV)
    if raw is None:
        return 1e-10
    try:
        tol = float(raw)
    except ValueError:
        raise ConfigError(f"{QUAD_TOL_ENV} must be a number, got {raw!r}") from None
    if not tol > 0:
        raise ConfigError(f"{QUAD_TOL_ENV} must be positive")
    return tol


def _floats(text: str, flag: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise ConfigError(f"bad {flag} {text!r}") from None


def _override(cfg: ScenarioConfig, args) -> ScenarioConfig:
    """Apply the per-subcommand --p / --t-max / --richardson flags."""
    changes = {}
    if getattr(args, "p", None) is not None:
        changes["p"] = args.p
    if getattr(args, "t_max", None) is not None:
        changes["t_max"] = args.t_max
    if getattr(args, "richardson", False):
        changes["richardson"] = True
    cfg = dataclasses.replace(cfg, **changes)
    try:
        cfg.time_grid  # noqa: B018
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def cmd_estfun(cfg: ScenarioConfig, out: Path, args) -> int:
    gamma = cfg.params.gamma if args.gamma is None else args.gamma
    try:
        ctx = estfun.EstContext(gamma, quad_rel_tol=_quad_tol())
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    samples = _floats(args.t_samples, "--t-samples") if args.t_samples else (1.0, 2.0, 10.0, 100.0, 1000.0)
    if not samples or min(samples) < 1.0:
        raise ConfigError("--t-samples must be values >= 1")
    if args.m_max < 0:
        raise ConfigError("--m-max must be nonnegative")
    header = ["t", "tau", "h0", "h"] + [f"{f}{m}" for m in range(args.m_max + 1) for f in ("N", "Q", "P")]
    rows = []
    for tt in sorted(samples):
        row = [float(tt), math.log(tt), float(estfun.eval_h0(ctx, tt)), float(estfun.eval_h(ctx, tt))]
        for m in range(args.m_max + 1):
            # P_m diverges for (m+2) gamma <= 1; the column then holds 0
            p_val = float(estfun.eval_P(ctx, m, tt)) if (m + 2) * gamma > 1.0 else 0.0
            row += [float(estfun.eval_N(ctx, m, tt)), float(estfun.eval_Q(ctx, m, tt)), p_val]
        rows.append(row)
    write_csv(out / "estfun.csv", header, rows)
    rep = estfun.verify_identities(ctx, args.m_max, samples)
    report = Path(args.report) if args.report else out / "identities.csv"
    write_csv(report, estfun.IdentityReport.CSV_COLUMNS, rep.csv_rows())
    print(f"identities: {len(rep.checked)} checked, {len(rep.failures)} failures")
    return EXIT_PASS if not rep.failures else EXIT_FAIL


HIERARCHY_HEADER = ["m", "t", "tau", "norm_w", "Q_m", "ratio_w", "norm_phi", "N_m", "ratio_phi"]


def cmd_hierarchy(cfg: ScenarioConfig, out: Path, args) -> int:
    cfg = _override(cfg, args)
    tg = cfg.time_grid
    h = solve_hierarchy(cfg.w_plus(), cfg.p, tg, cfg.params)
    tables = hierarchy_decay_report(h)
    rows = []
    for m in range(cfg.p + 1):
        tw, tp = tables[2 * m], tables[2 * m + 1]
        for (t, nw, q, rw), (_, nphi, n_m, rphi) in zip(tw.rows(), tp.rows()):
            rows.append([m, t, math.log(t), nw, q, rw, nphi, n_m, rphi])
    write_csv(out / "rates.csv", HIERARCHY_HEADER, rows)
    if h.psi_tail is not None:
        tail = psi_tail_report(h)
        tables.append(tail)
        write_csv(out / "psi_tail.csv", RATE_HEADER, rate_rows([tail]))
    for m in range(cfg.p + 1):
        save_snapshot(out / f"w{m}_tmax.hsl", h.amplitude_field(m, -1))
        save_snapshot(out / f"phi{m}_tmax.hsl", h.phase_field(m, -1))
    ok = all(acceptance._drift_ok(tb.drift) for tb in tables)
    for tb in tables:
        print(f"{tb.name}: sup={tb.sup:.4g} drift={tb.drift:.4f}")
    if cfg.gauge_suite:
        sigma = random_band_limited(cfg.seed + 100, cfg.field_radius, 1.0, cfg.params.k, cfg.params, real=True)
        dev = hierarchy_gauge_check(cfg.w_plus(), sigma, cfg.p, tg, cfg.params)
        write_csv(out / "gauge.csv", ["check", "deviation", "bound"], [["hierarchy_phases", dev, 1e-6]])
        print(f"gauge deviation {dev:.3e}")
        ok = ok and dev <= 1e-6
    return EXIT_PASS if ok else EXIT_FAIL


TRANSPORT_HEADER = ["t", "tau", "norm_V_minus_wplus", "h", "ratio", "norm_V_minus_Wp", "Q_p", "ratio2"]


def cmd_transport(cfg: ScenarioConfig, out: Path, args) -> int:
    cfg = _override(cfg, args)
    tg = cfg.time_grid
    w, psi = cfg.w_plus(), cfg.psi_plus()
    h = solve_hierarchy(w, cfg.p, tg, cfg.params)
    phase = transport_phase(h)
    V, chi = solve_V(w, phase, tg), solve_chi(psi, phase, tg)
    v_tab, c_tab, cmp_tab = V_rate_table(V, w, tg), chi_rate_table(chi, psi, tg), compare_V_Wp(V, h)
    rows = [[t, math.log(t), a, b, r, a2, b2, r2]
            for (t, a, b, r), (_, a2, b2, r2) in zip(v_tab.rows(), cmp_tab.rows())]
    write_csv(out / "rates.csv", TRANSPORT_HEADER, rows)
    write_csv(out / "chi_rates.csv", RATE_HEADER, rate_rows([c_tab]))
    tables = [v_tab, c_tab, cmp_tab]
    ok = all(acceptance._drift_ok(tb.drift) for tb in (v_tab, cmp_tab))
    for tb in tables:
        print(f"{tb.name}: sup={tb.sup:.4g} drift={tb.drift:.4f}")
    if cfg.gauge_suite:
        dev = gauge_check_transport(w, psi, phase, tg)
        write_csv(out / "gauge.csv", ["check", "deviation", "bound"], [["V_exp_chi", dev, 1e-6]])
        print(f"gauge deviation {dev:.3e}")
        ok = ok and dev <= 1e-6
    if cfg.richardson:
        _, short, diff = richardson_pair(w, phase, tg)
        nodes = tg.nodes[: short.shape[0]]
        write_csv(out / "richardson.csv", ["t", "tau", "diff_l2"],
                  [[float(t), math.log(t), float(d)] for t, d in zip(nodes, diff)])
        print(f"horizon sensitivity of V at t_min: {float(diff[0]):.3e}")
    return EXIT_PASS if ok else EXIT_FAIL


def _t0_sequence(cfg: ScenarioConfig, args) -> tuple:
    if getattr(args, "t0_seq", None):
        return _floats(args.t0_seq, "--t0-seq")
    return cfg.t0_sequence


def cmd_waveop(cfg: ScenarioConfig, out: Path, args) -> int:
    p = cfg.p if args.p is None else args.p
    res = auxsys.omega0(cfg.w_plus(), cfg.psi_plus(), p, _t0_sequence(cfg, args), cfg.time_grid, cfg.params,
                        strict=False, workers=args.threads)
    write_csv(out / "cauchy.csv", ["t0", "tau0", "diff_w", "Q_p", "ratio"],
              [[t0, math.log(t0), d, q, r] for t0, d, q, r in res.cauchy_rows])
    write_csv(out / "rates.csv", RATE_HEADER, rate_rows(res.rate_tables.values()))
    traj = res.trajectory
    last = traj.state(traj.i_hi)
    save_snapshot(out / "w_final.hsl", last.w)
    save_snapshot(out / "phi_final.hsl", last.phi)
    print(f"Cauchy ratio spread {res.cauchy_ratio_spread:.3f}; fixed-time monotone {res.fixed_time_monotone}")
    ok = res.cauchy_ratio_spread <= 1.5 and res.fixed_time_monotone
    for name, tb in res.rate_tables.items():
        print(f"{name}: sup={tb.sup:.4g} drift={tb.drift:.4f}")
    if cfg.negative_control:
        neg = acceptance.Suite(seed=cfg.seed, steps_per_decade=cfg.steps_per_decade, N=cfg.params.N).criterion_10()
        print(f"negative control: {neg.status} ({neg.detail})")
        ok = ok and neg.passed
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_scatter(cfg: ScenarioConfig, out: Path, args) -> int:
    p = cfg.p if args.p is None else args.p
    r_list = _floats(args.r_list, "--r-list") if args.r_list else cfg.r_list
    for r in r_list:
        try:
            scattering._check_r(cfg.params, r)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    t0s = _t0_sequence(cfg, args)
    res = auxsys.omega0(cfg.w_plus(), cfg.psi_plus(), p, t0s, cfg.time_grid, cfg.params, strict=False,
                        workers=args.threads)
    rep = scattering.asymptotic_error_report(res, res.pipeline.h, r_list)
    e = rep.energy
    header = ["t", "tau", "E_k", "P_p", "ratio"] + [f"Lr_{r:g}" for r in r_list]
    rows = []
    for j, (t, a, b, r) in enumerate(e.rows()):
        rows.append([t, math.log(t), a, b, r] + [float(rep.lr_rows[x].numerator[j]) for x in r_list])
    write_csv(out / "error_rates.csv", header, rows)
    ok = acceptance._drift_ok(e.drift)
    print(f"E_k/P_p drift {e.drift:.4f}")
    if cfg.gauge_suite:
        cov = scattering.gauge_covariance_check(cfg.w_plus(), cfg.psi_plus(), p, t0s, cfg.time_grid, cfg.params)
        t_common = cfg.time_grid.nodes[-cov.metric.size:]
        write_csv(out / "gauge.csv", ["t", "tau", "metric"],
                  [[float(t), math.log(t), float(m)] for t, m in zip(t_common, cov.metric)])
        save_snapshot(out / "sigma.hsl", cov.sigma.sigma)
        print(f"gauge covariance max metric {cov.max_metric:.3e}; sigma residual {cov.sigma.residual:.3e}")
        ok = ok and cov.max_metric <= 1e-5
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_verify_all(cfg: ScenarioConfig, out: Path, args) -> int:
    suite = acceptance.Suite(seed=cfg.seed, steps_per_decade=cfg.steps_per_decade, N=cfg.params.N,
                             quad_rel_tol=_quad_tol(), workers=args.threads)
    rows = []
    for cid in acceptance.CRITERIA:
        t = time.perf_counter()
        try:
            res = suite.run(cid)
        except (auxsys.BlowUp, auxsys.StepRejected, StepRejected, TailFitError, estfun.QuadratureError) as exc:
            res = acceptance.CriterionResult(cid, False, 0.0, 0.0, time.perf_counter() - t, f"error: {exc}")
        if not math.isfinite(res.measured):
            res = dataclasses.replace(res, passed=False, measured=0.0, detail=f"non-finite measurement {res.detail}")
        print(res.line(), flush=True)
        rows.append([res.cid, res.status, res.measured, res.bound, res.runtime])
    write_csv(out / "summary.csv", ["id", "status", "measured", "bound", "runtime"], rows)
    return EXIT_PASS if all(r[1] == "pass" for r in rows) else EXIT_FAIL


def cmd_plot(cfg: ScenarioConfig, out: Path, args) -> int:
    emit_plot(args.csv, args.columns.split(","), args.svg)
    return EXIT_PASS


COMMANDS = {
    "estfun": cmd_estfun,
    "hierarchy": cmd_hierarchy,
    "transport": cmd_transport,
    "waveop": cmd_waveop,
    "scatter": cmd_scatter,
    "verify-all": cmd_verify_all,
    "plot": cmd_plot,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario config file (flat key = value with [sections])")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, default=1, help="concurrent t0 runs")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    ap = argparse.ArgumentParser(prog="hartree-waveops", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    est = sub.add_parser("estfun", parents=[common], help="estimating functions and their identity suite")
    est.add_argument("--gamma", type=float)
    est.add_argument("--m-max", dest="m_max", type=int, default=2)
    est.add_argument("--t-samples", dest="t_samples", help="comma-separated times >= 1")
    est.add_argument("--report", help="identity report CSV path (default OUT/identities.csv)")
    hi = sub.add_parser("hierarchy", parents=[common], help="asymptotic hierarchy and its decay rates")
    hi.add_argument("--p", type=int)
    tr = sub.add_parser("transport", parents=[common], help="transported amplitude and phase")
    tr.add_argument("--p", type=int)
    tr.add_argument("--t-max", dest="t_max", type=float)
    tr.add_argument("--richardson", action="store_true")
    wave = sub.add_parser("waveop", parents=[common], help="local wave operators and their t0 limit")
    wave.add_argument("--p", type=int)
    wave.add_argument("--t0-seq", dest="t0_seq", help="comma-separated t0 values")
    sc = sub.add_parser("scatter", parents=[common], help="error proxies and gauge covariance")
    sc.add_argument("--p", type=int)
    sc.add_argument("--r-list", dest="r_list", help="comma-separated Lebesgue exponents")
    sc.add_argument("--t0-seq", dest="t0_seq", help="comma-separated t0 values")
    sub.add_parser("verify-all", parents=[common], help="run every acceptance criterion; writes summary.csv")
    pl = sub.add_parser("plot", parents=[common], help="log-log SVG plot of CSV columns")
    pl.add_argument("csv")
    pl.add_argument("columns", help="x column then y columns, comma-separated")
    pl.add_argument("svg")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        out = Path(args.out if args.out else cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except GridError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (auxsys.BlowUp, auxsys.StepRejected, StepRejected, TailFitError) as exc:
        print(f"numerical blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (KeyError, ValueError) as exc:
        if args.command == "plot":
            print(f"plot error: {exc}", file=sys.stderr)
            return EXIT_FAIL
        raise


if __name__ == "__main__":
    sys.exit(main())
