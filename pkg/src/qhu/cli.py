"""Command-line front end: config parsing, single-point phase computation,
temperature/parameter sweeps, transition finding, and the invariant check
suite with CSV emission.

Config grammar: UTF-8 ``key = value`` lines, ``#`` comments, exactly the
sections ``[model]`` and ``[run]``; unknown keys are rejected.  See README
for the accepted keys.  Exit codes: 0 success, 1 validation, 2 numerical
failure, 3 I/O.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import equivalence, models, qh_core, thermal, uhlmann
from .errors import (
    IoError,
    ParamError,
    ParseError,
    QhuError,
    ValidationError,
)

CSV_HEADER = ["T", "b", "G_re", "G_im", "theta_U", "g_gen", "g_arccos", "well_defined"]

#: T = 0 requests are mapped to beta * gap = ZERO_T_BETA_GAP (pure-state proxy)
ZERO_T_BETA_GAP = 1e3

_MODEL_KEYS = {
    "two_level_t": {"required": {"t"}, "optional": set()},
    "pt_equator": {"required": {"a", "b"}, "optional": {"delta", "eps"}},
}
_RUN_KEYS = {
    "T", "T_min", "T_max", "T_count", "T_scale",
    "b_min", "b_max", "b_count",
    "omega", "steps", "output", "seed",
    "check_samples", "check_tolerance", "check_steps",
}


@dataclass
class Grid:
    lo: float
    hi: float
    count: int
    scale: str = "linear"

    def values(self) -> np.ndarray:
        if self.scale == "log":
            return np.geomspace(self.lo, self.hi, self.count)
        return np.linspace(self.lo, self.hi, self.count)


@dataclass
class RunConfig:
    model: str
    params: dict
    mode: str = "phase"
    temperature: float | None = None
    t_grid: Grid | None = None
    b_grid: Grid | None = None
    omega: int = 1
    steps: int = 1024
    output: str | None = None
    seed: int = 0
    check_samples: int = 100
    check_tolerance: float = 1e-6
    check_steps: int = 0


def _get_float(section, key, default=None):
    if key not in section:
        if default is None:
            raise ValidationError(f"missing required key '{key}'")
        return default
    try:
        return float(section[key])
    except ValueError as exc:
        raise ValidationError(f"key '{key}': not a number: {section[key]!r}") from exc


def _get_int(section, key, default):
    raw = section.get(key)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ValidationError(f"key '{key}': not an integer: {raw!r}") from exc


def parse_config(text: str, mode: str = "phase") -> RunConfig:
    """Parse and validate a config document.

    Raises ParseError on malformed syntax (with line information from the
    underlying parser) and ValidationError, naming the offending key, on
    semantic violations.
    """
    cp = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#",), inline_comment_prefixes=("#",),
        strict=True, interpolation=None,
    )
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ParseError(str(exc)) from exc

    unknown_sections = set(cp.sections()) - {"model", "run"}
    if unknown_sections:
        raise ValidationError(f"unknown section(s): {sorted(unknown_sections)}")
    if "model" not in cp:
        raise ValidationError("missing [model] section")
    msec = cp["model"]
    rsec = cp["run"] if "run" in cp else {}

    model = msec.get("model")
    if model not in _MODEL_KEYS:
        raise ValidationError(
            f"key 'model': must be one of {sorted(_MODEL_KEYS)}, got {model!r}"
        )
    allowed = _MODEL_KEYS[model]["required"] | _MODEL_KEYS[model]["optional"] | {"model"}
    for key in msec:
        if key not in allowed:
            raise ValidationError(f"unknown key '{key}' in [model] for {model}")
    for key in rsec:
        if key not in _RUN_KEYS:
            raise ValidationError(f"unknown key '{key}' in [run]")

    params = {}
    for key in _MODEL_KEYS[model]["required"]:
        params[key] = _get_float(msec, key)
    for key in _MODEL_KEYS[model]["optional"]:
        params[key] = _get_float(msec, key, 0.0)
    if model == "two_level_t" and not params["t"] > 0.0:
        raise ValidationError(f"key 't': must be positive, got {params['t']}")
    if model == "pt_equator" and not params["a"] ** 2 > params["b"] ** 2:
        raise ValidationError("quasi-Hermitian regime requires a^2 > b^2")

    cfg = RunConfig(model=model, params=params, mode=mode)
    cfg.omega = _get_int(rsec, "omega", 1)
    if cfg.omega < 1:
        raise ValidationError(f"key 'omega': must be >= 1, got {cfg.omega}")
    cfg.steps = _get_int(rsec, "steps", 1024)
    if cfg.steps < 8:
        raise ValidationError(f"key 'steps': must be >= 8, got {cfg.steps}")
    cfg.seed = _get_int(rsec, "seed", 0)
    if cfg.seed < 0:
        raise ValidationError(f"key 'seed': must be >= 0, got {cfg.seed}")
    cfg.output = rsec.get("output") if rsec else None
    cfg.check_samples = _get_int(rsec, "check_samples", 100)
    cfg.check_tolerance = _get_float(rsec, "check_tolerance", 1e-6)
    cfg.check_steps = _get_int(rsec, "check_steps", 0)

    if "T" in rsec:
        cfg.temperature = _get_float(rsec, "T")
        if cfg.temperature < 0.0:
            raise ValidationError(f"key 'T': must be >= 0, got {cfg.temperature}")
    if any(k in rsec for k in ("T_min", "T_max", "T_count")):
        lo = _get_float(rsec, "T_min")
        hi = _get_float(rsec, "T_max")
        count = _get_int(rsec, "T_count", 0)
        scale = rsec.get("T_scale", "linear")
        if scale not in ("linear", "log"):
            raise ValidationError(f"key 'T_scale': must be linear or log, got {scale!r}")
        if not 0.0 < lo < hi:
            raise ValidationError("keys 'T_min'/'T_max': need 0 < T_min < T_max")
        if count < 2:
            raise ValidationError(f"key 'T_count': must be >= 2, got {count}")
        cfg.t_grid = Grid(lo, hi, count, scale)
    if any(k in rsec for k in ("b_min", "b_max", "b_count")):
        if model != "pt_equator":
            raise ValidationError("key 'b_min': second axis is only valid for pt_equator")
        lo = _get_float(rsec, "b_min")
        hi = _get_float(rsec, "b_max")
        count = _get_int(rsec, "b_count", 0)
        if count < 2:
            raise ValidationError(f"key 'b_count': must be >= 2, got {count}")
        if lo > hi:
            raise ValidationError("keys 'b_min'/'b_max': need b_min <= b_max")
        if max(abs(lo), abs(hi)) >= abs(params["a"]):
            raise ValidationError("quasi-Hermitian regime requires a^2 > b^2 on the whole b grid")
        cfg.b_grid = Grid(lo, hi, count)

    if mode == "phase" and cfg.temperature is None:
        raise ValidationError("phase mode requires key 'T'")
    if mode in ("sweep", "transitions") and cfg.t_grid is None:
        raise ValidationError(f"{mode} mode requires keys 'T_min'/'T_max'/'T_count'")
    if mode == "transitions" and cfg.t_grid.count < 16:
        raise ValidationError("key 'T_count': transitions mode requires >= 16")
    return cfg


# ---------------------------------------------------------------------------
# model plumbing
# ---------------------------------------------------------------------------

def _model_gap(cfg: RunConfig, b_value: float | None = None) -> float:
    if cfg.model == "two_level_t":
        return 2.0
    b = cfg.params["b"] if b_value is None else b_value
    return 2.0 * math.sqrt(cfg.params["a"] ** 2 - b ** 2)


def _build_loop(cfg: RunConfig, b_value: float | None = None) -> uhlmann.ParameterLoop:
    if cfg.model == "two_level_t":
        p = models.TwoLevelTParams(t=cfg.params["t"], omega=cfg.omega)
        return models.t_model_loop(p, steps=cfg.steps)
    b = cfg.params["b"] if b_value is None else b_value
    p = models.PTParams(
        a=cfg.params["a"], b=b, delta=cfg.params.get("delta", 0.0),
        eps=cfg.params.get("eps", 0.0), omega=cfg.omega,
    )
    return models.pt_loop(p, steps=cfg.steps)


def _closed_form_amplitude(cfg: RunConfig, beta: float,
                           b_value: float | None = None) -> float | None:
    if cfg.model == "two_level_t":
        p = models.TwoLevelTParams(t=cfg.params["t"], omega=cfg.omega, beta=beta)
        return models.t_model_phase(p).amplitude
    if abs(cfg.params.get("delta", 0.0)) > 1e-12 or abs(cfg.params.get("eps", 0.0)) > 1e-12:
        return None
    b = cfg.params["b"] if b_value is None else b_value
    p = models.PTParams(a=cfg.params["a"], b=b, omega=cfg.omega, beta=beta)
    return models.pt_equator_phase(p).amplitude


def _beta_for(cfg: RunConfig, temperature: float, b_value: float | None = None) -> float:
    if temperature == 0.0:
        gap = _model_gap(cfg, b_value)
        print(
            f"warning: T = 0 mapped to beta * gap = {ZERO_T_BETA_GAP:g} (pure-state proxy)",
            file=sys.stderr,
        )
        return ZERO_T_BETA_GAP / gap
    return 1.0 / temperature


# ---------------------------------------------------------------------------
# run modes
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return f"{x:.17g}"


def _point_row(cfg: RunConfig, temperature: float,
               b_value: float | None = None) -> dict:
    beta = _beta_for(cfg, temperature, b_value)
    loop = _build_loop(cfg, b_value)
    result = uhlmann.holonomy(loop, beta)
    g = result.amplitude
    closed = _closed_form_amplitude(cfg, beta, b_value)
    row = {
        "T": temperature,
        "b": (cfg.params["b"] if b_value is None else b_value)
             if cfg.model == "pt_equator" else None,
        "G_re": g.real,
        "G_im": g.imag,
        "theta_U": result.phase if result.well_defined else None,
        "g_gen": result.gen_fn,
        "g_arccos": uhlmann.geometric_factor(g) if abs(g.imag) <= 1e-6 else None,
        "well_defined": result.well_defined,
        "steps_used": result.steps_used,
        "closed_form": closed,
    }
    return row


def run_phase(cfg: RunConfig) -> dict:
    """Single-point report; prints key = value lines to stdout."""
    row = _point_row(cfg, cfg.temperature)
    for key in ("T", "G_re", "G_im", "theta_U", "g_gen", "g_arccos",
                "steps_used", "well_defined", "closed_form"):
        val = row[key]
        if val is None:
            text = ""
        elif isinstance(val, bool):
            text = "true" if val else "false"
        elif isinstance(val, (int, np.integer)):
            text = str(val)
        else:
            text = _fmt(float(val))
        print(f"{key} = {text}")
    if row["closed_form"] is not None:
        err = abs(complex(row["G_re"], row["G_im"]) - row["closed_form"])
        print(f"closed_form_error = {_fmt(err)}")
    if cfg.output:
        _write_csv(cfg.output, [row])
    return row


def _csv_cells(row: dict) -> list[str]:
    cells = []
    for key in CSV_HEADER:
        val = row[key]
        if key == "well_defined":
            cells.append("true" if val else "false")
        elif val is None:
            cells.append("")
        else:
            cells.append(_fmt(float(val)))
    return cells


def _write_csv(path_or_buf, rows) -> None:
    def _emit(buf):
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(CSV_HEADER)
        for row in rows:
            writer.writerow(_csv_cells(row))

    if isinstance(path_or_buf, (str, os.PathLike)):
        try:
            with open(path_or_buf, "w", encoding="utf-8", newline="") as fh:
                _emit(fh)
        except OSError as exc:
            raise IoError(f"cannot write output file {path_or_buf!r}: {exc}") from exc
    else:
        _emit(path_or_buf)


def run_sweep(cfg: RunConfig, jobs: int | None = None) -> list[dict]:
    """Grid sweep; rows in row-major order (second axis outer, T inner).

    Points are computed concurrently (``jobs`` threads, default the CPU
    count) and emitted in deterministic grid order.
    """
    temps = [float(t) for t in cfg.t_grid.values()]
    bvals = [float(b) for b in cfg.b_grid.values()] if cfg.b_grid else [None]
    points = [(b, t) for b in bvals for t in temps]
    workers = jobs or os.cpu_count() or 1
    with ThreadPoolExecutor(max_workers=workers) as pool:
        rows = list(pool.map(lambda bt: _point_row(cfg, bt[1], bt[0]), points))
    if cfg.output:
        _write_csv(cfg.output, rows)
    else:
        buf = io.StringIO()
        _write_csv(buf, rows)
        sys.stdout.write(buf.getvalue())
    return rows


def run_transitions(cfg: RunConfig) -> list[float]:
    """Critical temperatures of Re G(T) on the configured grid, refined by
    bisection; prints one temperature per line."""
    def amplitude(temperature: float) -> float:
        loop = _build_loop(cfg)
        return float(np.real(uhlmann.holonomy(loop, 1.0 / temperature).amplitude))

    tcs = uhlmann.find_transitions(
        amplitude, cfg.t_grid.lo, cfg.t_grid.hi, grid=cfg.t_grid.count
    )
    for tc in tcs:
        print(_fmt(tc))
    if cfg.output:
        try:
            with open(cfg.output, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh, lineterminator="\r\n")
                writer.writerow(["index", "T_c"])
                for i, tc in enumerate(tcs):
                    writer.writerow([str(i), _fmt(tc)])
        except OSError as exc:
            raise IoError(f"cannot write output file {cfg.output!r}: {exc}") from exc
    return tcs


# ---------------------------------------------------------------------------
# check mode
# ---------------------------------------------------------------------------

@dataclass
class CheckReport:
    entries: list = field(default_factory=list)

    def add(self, name: str, value: float, bound: float):
        self.entries.append((name, float(value), float(bound)))

    @property
    def passed(self) -> bool:
        return all(v <= b for _, v, b in self.entries)


def run_check(cfg: RunConfig) -> CheckReport:
    """Execute the invariant suite at the configured parameters.

    Prints one PASS/FAIL line per invariant with the measured residual.
    The Sylvester residual is recomputed here against the true equation, so
    the QHU_FAULT=sylvester-rhs-sign mutation hook makes exactly that entry
    fail (mutation smoke test).
    """
    rng = np.random.default_rng(cfg.seed)
    rep = CheckReport()
    n_draws = max(4, cfg.check_samples)

    inv = anti = trc = 0.0
    for _ in range(n_draws):
        n = int(rng.integers(2, 5))
        m = qh_core.random_metric(n, rng)
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        b = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        adj = qh_core.eta_adjoint(a, m)
        inv = max(inv, np.linalg.norm(qh_core.eta_adjoint(adj, m) - a) / np.linalg.norm(a))
        lhs = qh_core.eta_adjoint(a @ b, m)
        rhs = qh_core.eta_adjoint(b, m) @ adj
        anti = max(anti, np.linalg.norm(lhs - rhs) / max(np.linalg.norm(lhs), 1e-300))
        t1 = qh_core.eta_trace(adj @ b, m)
        t2 = np.conj(qh_core.eta_trace(qh_core.eta_adjoint(b, m) @ a, m))
        trc = max(trc, abs(t1 - t2) / max(abs(t1), 1e-300))
    rep.add("eta_adjoint_involution", inv, 1e-12)
    rep.add("eta_adjoint_antihomomorphism", anti, 1e-12)
    rep.add("eta_trace_conjugation", trc, 1e-12)

    qh_res = bio = gib = syl = asa = ove = 0.0
    for _ in range(n_draws):
        n = int(rng.integers(2, 5))
        h, m = qh_core.random_quasi_hermitian(n, rng)
        qh_res = max(qh_res, qh_core.verify_quasi_hermitian(h, m))
        sys_ = qh_core.biorthogonal_decompose(h, m)
        eye = np.eye(n)
        bio = max(bio, np.linalg.norm(sys_.left_vectors @ sys_.right_vectors - eye))
        bio = max(bio, np.linalg.norm(sys_.right_vectors @ sys_.left_vectors - eye))
        state = thermal.gibbs_state(h, m, float(rng.uniform(0.0, 3.0)))
        gib = max(gib, abs(qh_core.eta_trace(state.rho, m) - 1.0))
        gib = max(gib, np.linalg.norm(qh_core.eta_adjoint(state.rho, m) - state.rho))
        gib = max(gib, np.linalg.norm(state.sqrt_rho @ state.sqrt_rho - state.rho))
        raw = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        dsr = (raw + qh_core.eta_adjoint(raw, m)) / 2
        sample = uhlmann.connection_at(state, dsr)
        a_mat = sample.a_matrix
        truth = state.sqrt_rho @ dsr - dsr @ state.sqrt_rho
        r = np.linalg.norm(state.rho @ a_mat + a_mat @ state.rho - truth)
        syl = max(syl, r / max(np.linalg.norm(truth), 1e-300))
        asa = max(asa, np.linalg.norm(qh_core.eta_adjoint(a_mat, m) + a_mat)
                  / max(np.linalg.norm(a_mat), 1e-300))
        u1 = qh_core.random_eta_unitary(m, rng)
        u2 = qh_core.random_eta_unitary(m, rng)
        w1 = equivalence.purify(state, u1)
        w2 = equivalence.purify(state, u2)
        ove = max(ove, abs(equivalence.purified_overlap(w1, w2)
                           - equivalence.overlap_operator_side(w1, w2)))
    rep.add("quasi_hermiticity_residual", qh_res, 1e-12)
    rep.add("biorthogonal_residuals", bio, 1e-10)
    rep.add("gibbs_invariants", gib, 1e-10)
    rep.add("sylvester_residual", syl, 1e-9)
    rep.add("connection_anti_self_adjoint", asa, 1e-9)
    rep.add("purified_overlap_identity", ove, 1e-12)

    temperature = 1.0 if cfg.temperature is None else cfg.temperature
    beta = _beta_for(cfg, temperature)
    p1 = models.TwoLevelTParams(t=2.0, omega=cfg.omega, beta=beta)
    res1 = uhlmann.holonomy(models.t_model_loop(p1, steps=256), beta)
    rep.add("holonomy_eta_unitarity", res1.eta_unitarity_defect, 1e-8)
    rep.add("holonomy_amplitude_bound", abs(res1.amplitude) - 1.0, 1e-8)

    if cfg.check_steps > 0:
        loop = _build_loop(cfg)
        loop.steps = max(8, cfg.check_steps // 2)
        result = uhlmann.holonomy(loop, beta, g_tol=math.inf)
    else:
        result = uhlmann.holonomy(_build_loop(cfg), beta)
    closed = _closed_form_amplitude(cfg, beta)
    if closed is not None:
        rep.add("closed_form_agreement", abs(result.amplitude - closed), cfg.check_tolerance)

    k = 256
    r1 = uhlmann.parallel_transport_residual(models.t_model_loop(p1, steps=k), beta, k)
    r2 = uhlmann.parallel_transport_residual(models.t_model_loop(p1, steps=2 * k), beta, 2 * k)
    ratio = r2 / max(r1, 1e-300)
    rep.add("transport_residual_decrease", ratio if r1 > 1e-10 else 0.0, 1.0 / 1.6)

    for name, value, bound in rep.entries:
        status = "PASS" if value <= bound else "FAIL"
        print(f"{status} {name} residual={value:.3e} bound={bound:.3e}")
    return rep


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _read_config_file(path: str) -> str:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise IoError(f"cannot read config file {path!r}: {exc}") from exc


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="qhu",
        description="Uhlmann phases of quasi-Hermitian two-level models",
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    for mode in ("phase", "sweep", "transitions", "check"):
        sp = sub.add_parser(mode)
        sp.add_argument("--config", required=True, help="path to the config file")
        sp.add_argument("--output", default=None, help="output CSV path")
        sp.add_argument("--jobs", type=int, default=None,
                        help="worker threads for sweeps (default: CPU count)")
    args = parser.parse_args(argv)

    try:
        cfg = parse_config(_read_config_file(args.config), mode=args.mode)
        if args.output:
            cfg.output = args.output
        if args.mode == "phase":
            run_phase(cfg)
        elif args.mode == "sweep":
            run_sweep(cfg, jobs=args.jobs)
        elif args.mode == "transitions":
            run_transitions(cfg)
        else:
            if not run_check(cfg).passed:
                return 2
        return 0
    except (ParseError, ValidationError, ParamError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except IoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except QhuError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
