"""Configuration files and subcommand dispatch.

The configuration format is INI: sections ``[grid]``, ``[model]``,
``[spde]``, ``[scheme]``, ``[f]``, ``[stats]``, ``[mc]``, ``[output]``,
``[verify]``, ``[decompose]``, plus a ``seed`` key at the top (or in a
``[run]`` section).  ``#`` starts a comment.  Every key has a documented
default except ``seed``, which an experiment must pin explicitly.

:func:`parse_config` is total: any input yields either a fully resolved
:class:`RunConfig` or a :class:`ConfigProblems` diagnostic listing every
violation at once, never a traceback.  The resolved config (defaults
filled) is echoed to the output directory as ``resolved.ini``; re-parsing
that echo reproduces the RunConfig exactly.

Artifacts are UTF-8 with LF newlines, floats printed to 17 significant
digits, and written atomically (temp file, then rename).  Wall-clock
timings never enter CSV/JSON artifacts, so reruns with the same seed are
byte-identical no matter how many workers simulate.

Exit codes: 0 success, 1 validation failure (bad config, unreachable
horizon, failing verify conditions), 2 runtime failure (solver errors
under ``--fail-fast``, unexpected faults).
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import difflib
import hashlib
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .assume import (
    CONSTRAINT_CONTEXTS,
    ConditionReport,
    ExponentParams,
    check_exponent_constraints,
    check_step_conditions,
)
from .ensemble import EnsembleConfig, EnsembleSummary, run_ensemble
from .errors import (
    ConfigurationError,
    DomainError,
    HorizonError,
    LilstepError,
    UsageError,
)
from .grid import StepSpec, build_grid
from .integrate import SchemeSpec
from .lilstat import VEstimate
from .martingale import (
    MartingaleLedger,
    decomposition_table,
    mtilde_series,
    qv_average,
    record_linear_bem_path,
    strassen_functional,
)
from .mc import PathStream
from .models import (
    Nonlinearity,
    SodeModel,
    TestFunction,
    capped_sqnorm_function,
    coordinate_function,
    cubic_model,
    ou_model,
    spde_model,
    tanh_function,
)

__all__ = [
    "ConfigProblems",
    "RunConfig",
    "parse_config",
    "render_config",
    "config_digest",
    "build_ensemble_config",
    "dispatch",
    "main",
]

ENV_WORKERS = "LILSTEP_WORKERS"
ENV_OUT = "LILSTEP_OUT"

SUBCOMMANDS = ("simulate", "lil-curve", "estimate-v", "verify", "decompose")


class ConfigProblems(ConfigurationError):
    """Parse/validation failure carrying the complete list of violations."""

    def __init__(self, problems: list[str]) -> None:
        self.problems = list(problems)
        super().__init__("\n".join(self.problems))


# ---------------------------------------------------------------------------
# resolved configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSection:
    kind: str = "harmonic"
    scale: float = 1.0
    theta: float = 1.0
    cap: float = 1.0
    n_steps: int = 1000


@dataclass(frozen=True)
class ModelSection:
    kind: str = "ou"
    a: float = 1.0
    sigma: float = 1.0
    c3: float = 0.5


@dataclass(frozen=True)
class SpdeSection:
    modes: int = 64
    beta1: float = 1.0
    q_law: tuple = ("power", 2.0)
    F: tuple = ("zero",)


@dataclass(frozen=True)
class SchemeSection:
    kind: str = "bem"
    newton_tol: float = 1e-12
    newton_max_iter: int = 50


@dataclass(frozen=True)
class FSection:
    kind: str = "coordinate"
    p: float | None = None
    gamma: float | None = None
    mu_exact: float = 0.0


@dataclass(frozen=True)
class StatsSection:
    checkpoint_ratio: float = 1.2
    batch_block: float | str | None = "auto"
    qv_blocks: int = 0
    window_lo: float | None = None
    window_hi: float | None = None


@dataclass(frozen=True)
class McSection:
    paths: int = 1
    workers: int = 1
    fail_fast: bool = False


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"


@dataclass(frozen=True)
class VerifySection:
    context: str = "thm3_1"
    r: float | None = None
    r_tilde: float | None = None
    q: float | None = None
    q_tilde: float | None = None
    beta: float | None = None
    kappa: float | None = None
    gamma1: float | None = None
    gamma: float | None = None
    l: float | None = None
    l_tilde: float | None = None
    alpha: float | None = None
    p: float | None = None
    rho_rate: float | tuple | None = None
    rho_tau_rate: float | tuple | None = None
    horizon: int = 200_000


@dataclass(frozen=True)
class DecomposeSection:
    k_last: int = 0  # 0 = up to the last indexed block edge


@dataclass(frozen=True)
class RunConfig:
    """A fully resolved experiment description; primitives only.

    Holding plain values (never built model objects) keeps equality
    structural, which the round-trip guarantee relies on.  Domain objects
    are built on demand by the ``build_*`` helpers.
    """

    seed: int
    grid: GridSection = GridSection()
    model: ModelSection = ModelSection()
    spde: SpdeSection = SpdeSection()
    scheme: SchemeSection = SchemeSection()
    f: FSection = FSection()
    stats: StatsSection = StatsSection()
    mc: McSection = McSection()
    output: OutputSection = OutputSection()
    verify: VerifySection = VerifySection()
    decompose: DecomposeSection = DecomposeSection()
    # whether the input spelled out a [verify] section; run commands check
    # the exponent constraints first only when it did
    verify_explicit: bool = field(default=False, compare=False)


# ---------------------------------------------------------------------------
# key schema: converters carry their own range text for diagnostics
# ---------------------------------------------------------------------------


def _int_key(lo: int | None = None, hi: int | None = None) -> Callable[[str], int]:
    def conv(raw: str) -> int:
        try:
            v = int(raw)
        except ValueError:
            raise ValueError(f"expected an integer, got {raw!r}") from None
        if lo is not None and v < lo:
            raise ValueError(f"must be >= {lo}, got {v}")
        if hi is not None and v > hi:
            raise ValueError(f"must be <= {hi}, got {v}")
        return v

    return conv


def _float_key(label: str, check: Callable[[float], bool]) -> Callable[[str], float]:
    def conv(raw: str) -> float:
        try:
            v = float(raw)
        except ValueError:
            raise ValueError(f"expected a real number, got {raw!r}") from None
        if not check(v):
            raise ValueError(f"must lie in {label}, got {raw}")
        return v

    return conv


_positive = _float_key("(0, inf)", lambda v: math.isfinite(v) and v > 0.0)
_nonnegative = _float_key("[0, inf)", lambda v: math.isfinite(v) and v >= 0.0)
_unit_open = _float_key("(0, 1]", lambda v: 0.0 < v <= 1.0)
_finite = _float_key("(-inf, inf)", math.isfinite)
_ratio = _float_key("(1, inf)", lambda v: math.isfinite(v) and v > 1.0)


def _enum_key(*options: str) -> Callable[[str], str]:
    def conv(raw: str) -> str:
        v = raw.strip().lower()
        if v not in options:
            raise ValueError(f"must be one of {', '.join(options)}; got {raw!r}")
        return v

    return conv


def _bool_key(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("true", "1", "yes", "on"):
        return True
    if v in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"expected true/false, got {raw!r}")


def _batch_key(raw: str):
    v = raw.strip().lower()
    if v == "auto":
        return "auto"
    if v in ("none", "off"):
        return None
    return _positive(raw)


def _qlaw_key(raw: str) -> tuple:
    v = raw.strip().lower()
    if v == "white":
        return ("white",)
    if v.startswith("power:"):
        s = _finite(v.split(":", 1)[1])
        return ("power", s)
    raise ValueError(f"expected 'white' or 'power:<exponent>', got {raw!r}")


def _reaction_key(raw: str) -> tuple:
    v = raw.strip().lower()
    if v == "zero":
        return ("zero",)
    if v.startswith("linear:"):
        return ("linear", _finite(v.split(":", 1)[1]))
    raise ValueError(f"expected 'zero' or 'linear:<slope>', got {raw!r}")


def _rate_key(raw: str):
    v = raw.strip().lower()
    if v.startswith("power:"):
        return ("power", _positive(v.split(":", 1)[1]))
    return _positive(raw)


# (converter, rendered-default).  None default means optional.
_SCHEMA: dict[str, dict[str, Callable[[str], object]]] = {
    "run": {"seed": _int_key(lo=0)},
    "grid": {
        "kind": _enum_key("harmonic", "power", "constant"),
        "scale": _positive,
        "theta": _unit_open,
        "cap": _positive,
        "n_steps": _int_key(lo=1),
    },
    "model": {
        "kind": _enum_key("ou", "sode", "spde"),
        "a": _float_key("(0, 6.5]", lambda v: 0.0 < v <= 6.5),
        "sigma": _nonnegative,
        "c3": _positive,
    },
    "spde": {
        "modes": _int_key(lo=1),
        "beta1": _unit_open,
        "q_law": _qlaw_key,
        "f": _reaction_key,  # configparser lowercases option names; key F
    },
    "scheme": {
        "kind": _enum_key("bem", "exp_euler", "exact_ou", "em_baseline"),
        "newton_tol": _positive,
        "newton_max_iter": _int_key(lo=1),
    },
    "f": {
        "kind": _enum_key("coordinate", "tanh", "capped_sqnorm"),
        "p": _float_key("[1, inf)", lambda v: math.isfinite(v) and v >= 1.0),
        "gamma": _unit_open,
        "mu_exact": _finite,
    },
    "stats": {
        "checkpoint_ratio": _ratio,
        "batch_block": _batch_key,
        "qv_blocks": _int_key(lo=0),
        "window_lo": _nonnegative,
        "window_hi": _positive,
    },
    "mc": {
        "paths": _int_key(lo=1),
        "workers": _int_key(lo=1),
        "fail_fast": _bool_key,
    },
    "output": {"dir": str},
    "verify": {
        "context": _enum_key(*CONSTRAINT_CONTEXTS),
        "r": _finite,
        "r_tilde": _finite,
        "q": _finite,
        "q_tilde": _finite,
        "beta": _finite,
        "kappa": _finite,
        "gamma1": _finite,
        "gamma": _finite,
        "l": _finite,
        "l_tilde": _finite,
        "alpha": _finite,
        "p": _finite,
        "rho_rate": _rate_key,
        "rho_tau_rate": _rate_key,
        "horizon": _int_key(lo=1000),
    },
    "decompose": {"k_last": _int_key(lo=0)},
}

_SECTION_TYPES = {
    "grid": GridSection,
    "model": ModelSection,
    "spde": SpdeSection,
    "scheme": SchemeSection,
    "f": FSection,
    "stats": StatsSection,
    "mc": McSection,
    "output": OutputSection,
    "verify": VerifySection,
    "decompose": DecomposeSection,
}

# INI option names are case-insensitive; map stored lowercase names back to
# the dataclass field where they differ.
_FIELD_OF = {("spde", "f"): "F"}
_KEY_OF = {("spde", "F"): "f"}


def parse_config(text: str, *, seed_override: int | None = None) -> RunConfig:
    """Parse an INI document into a fully validated RunConfig.

    Collects every violation (syntax, unknown keys, bad values, missing
    seed, cross-field conflicts) into one :class:`ConfigProblems` instead
    of stopping at the first.
    """
    problems: list[str] = []
    parser = configparser.ConfigParser(
        interpolation=None, inline_comment_prefixes=("#",)
    )
    shift = 0
    try:
        try:
            parser.read_string(text)
        except configparser.MissingSectionHeaderError:
            # top-level keys (the documented place for `seed`) get an
            # implicit [run] section; reported line numbers are adjusted
            parser = configparser.ConfigParser(
                interpolation=None, inline_comment_prefixes=("#",)
            )
            shift = 1
            parser.read_string("[run]\n" + text)
    except configparser.ParsingError as exc:
        for lineno, line in exc.errors:
            problems.append(f"syntax error at line {lineno - shift}: {line}")
        raise ConfigProblems(problems) from None
    except configparser.Error as exc:
        raise ConfigProblems([f"syntax error: {exc}"]) from None

    values: dict[str, dict[str, object]] = {name: {} for name in _SCHEMA}
    known_sections = sorted(_SCHEMA)
    seed_seen = False
    for section in parser.sections():
        sec = section.strip().lower()
        if sec not in _SCHEMA:
            hint = difflib.get_close_matches(sec, known_sections, n=1)
            extra = f" (did you mean [{hint[0]}]?)" if hint else ""
            problems.append(f"unknown section [{section}]{extra}")
            continue
        schema = _SCHEMA[sec]
        for key, raw in parser.items(section):
            # `seed` is documented as top-level; skip the section prefix
            label = key if sec == "run" else f"{sec}.{key}"
            if key not in schema:
                hint = difflib.get_close_matches(key, sorted(schema), n=1)
                extra = f" (did you mean {sec}.{hint[0]}?)" if hint else ""
                problems.append(f"unknown key {sec}.{key}{extra}")
                continue
            seed_seen = seed_seen or (sec, key) == ("run", "seed")
            if raw is None or raw.strip() == "":
                problems.append(f"{label} has no value")
                continue
            try:
                values[sec][key] = schema[key](raw)
            except ValueError as exc:
                problems.append(f"{label}: {exc}")

    if seed_override is not None:
        values["run"]["seed"] = int(seed_override)
        seed_seen = True
    if not seed_seen:
        problems.append(
            "missing required key: seed (set it at the top of the config "
            "or pass --seed)"
        )

    sections: dict[str, object] = {}
    for name, cls in _SECTION_TYPES.items():
        fields = {
            _FIELD_OF.get((name, key), key): val for key, val in values[name].items()
        }
        try:
            sections[name] = cls(**fields)
        except ConfigurationError as exc:  # defensive; schema should catch first
            problems.append(str(exc))
            sections[name] = cls()

    problems.extend(_cross_field_problems(sections))
    if problems:
        raise ConfigProblems(problems)

    return RunConfig(
        seed=values["run"]["seed"],
        verify_explicit=parser.has_section("verify"),
        **sections,
    )


def _cross_field_problems(sections: dict[str, object]) -> list[str]:
    out: list[str] = []
    model: ModelSection = sections["model"]
    scheme: SchemeSection = sections["scheme"]
    stats: StatsSection = sections["stats"]
    if (model.kind == "spde") != (scheme.kind == "exp_euler"):
        out.append(
            f"model.kind={model.kind} and scheme.kind={scheme.kind} do not "
            "pair: spde requires exp_euler and vice versa"
        )
    if stats.qv_blocks > 0 and not (model.kind == "ou" and scheme.kind == "bem"):
        out.append(
            "stats.qv_blocks needs model.kind=ou with scheme.kind=bem "
            "(closed-form block increments exist only there)"
        )
    lo, hi = stats.window_lo, stats.window_hi
    if (lo is None) != (hi is None):
        out.append("stats.window_lo and stats.window_hi must be set together")
    elif lo is not None and hi is not None and not lo < hi:
        out.append(f"stats.window_lo must be below window_hi, got {lo:g} >= {hi:g}")
    return out


# ---------------------------------------------------------------------------
# rendering and digests
# ---------------------------------------------------------------------------


def _render_value(v: object) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)  # shortest text that parses back to the same double
    if isinstance(v, tuple):  # q_law / reaction / decay-rate encodings
        if len(v) == 1:
            return str(v[0])
        return f"{v[0]}:{v[1]!r}"
    return str(v)


def render_config(config: RunConfig, *, semantic: bool = False) -> str:
    """Emit the resolved config as INI text; parsing it back is lossless.

    ``semantic=True`` drops execution policy (worker count, fail-fast,
    output directory), leaving only what determines results; the semantic
    text is what :func:`config_digest` hashes.
    """
    lines = ["[run]", f"seed = {config.seed}", ""]
    for name, cls in _SECTION_TYPES.items():
        if semantic and name == "output":
            continue
        section = getattr(config, name)
        body = []
        for f_ in dataclasses.fields(cls):
            if semantic and name == "mc" and f_.name in ("workers", "fail_fast"):
                continue
            val = getattr(section, f_.name)
            if val is None:
                continue
            key = _KEY_OF.get((name, f_.name), f_.name)
            body.append(f"{key} = {_render_value(val)}")
        if body:
            lines.append(f"[{name}]")
            lines.extend(body)
            lines.append("")
    return "\n".join(lines)


def config_digest(config: RunConfig) -> str:
    """SHA-256 of the semantic resolved config text."""
    return hashlib.sha256(
        render_config(config, semantic=True).encode("utf-8")
    ).hexdigest()


# ---------------------------------------------------------------------------
# builders: RunConfig -> domain objects
# ---------------------------------------------------------------------------


def _build_step_spec(config: RunConfig) -> StepSpec:
    g = config.grid
    return StepSpec(kind=g.kind, scale=g.scale, theta=g.theta, cap=g.cap)


def _build_scheme(config: RunConfig) -> SchemeSpec:
    s = config.scheme
    return SchemeSpec(
        kind=s.kind, newton_tol=s.newton_tol, newton_max_iter=s.newton_max_iter
    )


def _build_model(config: RunConfig):
    m = config.model
    if m.kind == "ou":
        return ou_model(m.a, m.sigma)
    if m.kind == "sode":
        return cubic_model(sigma=m.sigma, c3=m.c3)
    s = config.spde
    nl = Nonlinearity.zero() if s.F[0] == "zero" else Nonlinearity.linear(s.F[1])
    return spde_model(modes=s.modes, beta1=s.beta1, q_law=s.q_law, nonlinearity=nl)


def _build_f(config: RunConfig) -> TestFunction:
    fs = config.f
    if fs.kind == "coordinate":
        base = coordinate_function(0)
    elif fs.kind == "tanh":
        base = tanh_function()
    else:
        base = capped_sqnorm_function()
    updates = {}
    if fs.p is not None:
        updates["p"] = fs.p
    if fs.gamma is not None:
        updates["gamma"] = fs.gamma
    return replace(base, **updates) if updates else base


def build_ensemble_config(config: RunConfig) -> EnsembleConfig:
    """Resolve the run sections into an engine config.

    ``batch_block = auto`` becomes sqrt(T) for the configured grid, the
    usual bias/variance compromise, resolved here so the engine fingerprint
    records the actual block length.
    """
    spec = _build_step_spec(config)
    stats = config.stats
    batch = stats.batch_block
    if batch == "auto":
        grid = build_grid(spec, config.grid.n_steps)
        batch = math.sqrt(float(grid.times[-1]))
    window = None
    if stats.window_lo is not None and stats.window_hi is not None:
        window = (stats.window_lo, stats.window_hi)
    return EnsembleConfig(
        model=_build_model(config),
        scheme=_build_scheme(config),
        step_spec=spec,
        n_steps=config.grid.n_steps,
        paths=config.mc.paths,
        seed=config.seed,
        f=_build_f(config),
        mu_f=config.f.mu_exact,
        checkpoint_ratio=stats.checkpoint_ratio,
        qv_blocks=stats.qv_blocks if stats.qv_blocks > 0 else None,
        batch_block=batch,
        stat_window=window,
    )


def _verify_params(config: RunConfig) -> tuple[ExponentParams, object, object]:
    """Exponent parameters and decay profiles, defaults derived from the model.

    Moment orders default high (r = q = 100): the built-in models have all
    polynomial moments, so the orders themselves are not the scarce
    resource; explicit [verify] keys override every field.
    """
    model = _build_model(config)
    f = _build_f(config)
    v = config.verify
    if isinstance(model, SodeModel):
        contraction = model.c5
        grid = build_grid(_build_step_spec(config), config.grid.n_steps)
        tau_bar = float(grid.steps.max())
        contraction_tau = model.c8(tau_bar)
        growth_order = model.qbar
    else:
        lam1 = math.pi**2
        contraction = 2.0 * (lam1 - model.c9)
        contraction_tau = contraction
        growth_order = 1.0
    gamma = v.gamma if v.gamma is not None else f.gamma
    params = ExponentParams(
        r=v.r if v.r is not None else 100.0,
        r_tilde=v.r_tilde if v.r_tilde is not None else 1.0,
        q=v.q if v.q is not None else 100.0,
        q_tilde=v.q_tilde if v.q_tilde is not None else 1.0,
        beta=v.beta if v.beta is not None else 0.0,
        kappa=v.kappa if v.kappa is not None else 0.0,
        gamma1=v.gamma1 if v.gamma1 is not None else gamma,
        gamma=gamma,
        l=v.l if v.l is not None else growth_order,
        l_tilde=v.l_tilde if v.l_tilde is not None else 0.5,
        alpha=v.alpha if v.alpha is not None else 1.0,
        p=v.p if v.p is not None else f.p,
    )
    rho = v.rho_rate if v.rho_rate is not None else contraction / 2.0
    rho_tau = v.rho_tau_rate if v.rho_tau_rate is not None else contraction_tau / 2.0
    return params, rho, rho_tau


# ---------------------------------------------------------------------------
# deterministic artifact serialization
# ---------------------------------------------------------------------------


def _fmt(v: float | None) -> str:
    return "" if v is None else format(v, ".17g")


def _json_text(obj: object, indent: int = 0) -> str:
    """JSON with floats at 17 significant digits and stable layout."""
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if not math.isfinite(v):
            return "null"
        return format(v, ".17g")
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        rows = [
            f"{inner}{json.dumps(str(k))}: {_json_text(v, indent + 1)}"
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(rows) + f"\n{pad}}}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        rows = [f"{inner}{_json_text(v, indent + 1)}" for v in obj]
        return "[\n" + ",\n".join(rows) + f"\n{pad}]"
    raise ConfigurationError(f"cannot serialize {type(obj).__name__} to JSON")


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _paths_csv(summary: EnsembleSummary) -> str:
    lines = ["path_id,t,S,lil_stat,run_max,run_min"]
    for rec in summary.records:
        for cp in rec.checkpoints:
            lines.append(
                f"{rec.path_id},{_fmt(cp.t)},{_fmt(cp.S)},{_fmt(cp.stat)},"
                f"{_fmt(cp.run_max)},{_fmt(cp.run_min)}"
            )
    return "\n".join(lines) + "\n"


def _estimate_entry(v: VEstimate) -> dict:
    entry = {"method": v.method, "v2": v.v2, "v": v.v, "stderr": v.stderr}
    if v.n_blocks is not None:
        entry["n_blocks"] = v.n_blocks
    if v.n_paths is not None:
        entry["n_paths"] = v.n_paths
    return entry


def _summary_base(config: RunConfig, subcommand: str) -> dict:
    return {
        "subcommand": subcommand,
        "seed": config.seed,
        "config_fingerprint": config_digest(config),
    }


def _run_summary_json(config: RunConfig, subcommand: str, summary: EnsembleSummary) -> dict:
    doc = _summary_base(config, subcommand)
    doc["ensemble"] = {
        "fingerprint": summary.fingerprint,
        "content_hash": summary.content_hash(),
        "paths": summary.config.paths,
        "n_records": len(summary.records),
        "n_errors": len(summary.errors),
        "errors": [
            {"path_id": e.path_id, "step": e.step, "message": e.message}
            for e in summary.errors
        ],
    }
    doc["v_estimates"] = [_estimate_entry(v) for v in summary.v_estimates]
    return doc


def _report_rows(report: ConditionReport) -> list[dict]:
    return report.rows()


# ---------------------------------------------------------------------------
# subcommand pipelines
# ---------------------------------------------------------------------------


def _out_path(config: RunConfig, name: str) -> str:
    return os.path.join(config.output.dir, name)


def _emit(config: RunConfig, name: str, text: str) -> str:
    path = _out_path(config, name)
    _write_atomic(path, text)
    print(f"wrote {path}")
    return path


def _precheck_constraints(config: RunConfig) -> None:
    """Explicitly configured exponent constraints gate the simulation."""
    if not config.verify_explicit:
        return
    params, _, _ = _verify_params(config)
    report = check_exponent_constraints(params, config.verify.context)
    if not report.passed:
        failing = [e.name for e in report if e.verdict == "fail"]
        raise ConfigurationError(
            f"exponent constraints for context {config.verify.context!r} fail "
            f"before simulation: {'; '.join(failing)}"
        )


def _cmd_run(config: RunConfig, subcommand: str) -> int:
    _precheck_constraints(config)
    ecfg = build_ensemble_config(config)
    summary = run_ensemble(
        ecfg, workers=config.mc.workers, fail_fast=config.mc.fail_fast
    )
    if subcommand in ("simulate", "lil-curve"):
        _emit(config, "paths.csv", _paths_csv(summary))
    doc = _run_summary_json(config, subcommand, summary)
    _emit(config, "summary.json", _json_text(doc) + "\n")
    for v in summary.v_estimates:
        print(f"v^2 [{v.method}] = {v.v2:.6g} (stderr {v.stderr:.3g})")
    if summary.errors:
        print(f"{len(summary.errors)} path(s) failed; see summary.json")
    return 0


def _cmd_verify(config: RunConfig) -> int:
    params, rho, rho_tau = _verify_params(config)
    spec = _build_step_spec(config)
    step_report = check_step_conditions(
        spec,
        gamma=params.gamma,
        alpha=params.alpha,
        l_tilde=params.l_tilde,
        rho_rate=rho,
        rho_tau_rate=rho_tau,
        horizon=config.verify.horizon,
    )
    constraint_report = check_exponent_constraints(params, config.verify.context)
    passed = step_report.passed and constraint_report.passed

    doc = _summary_base(config, "verify")
    doc["context"] = config.verify.context
    doc["parameters"] = {
        f_.name: getattr(params, f_.name) for f_ in dataclasses.fields(params)
    }
    doc["conditions"] = _report_rows(step_report) + _report_rows(constraint_report)
    doc["gamma_feasible"] = constraint_report.gamma_feasible
    doc["gamma_note"] = constraint_report.gamma_note
    doc["passed"] = passed
    _emit(config, "summary.json", _json_text(doc) + "\n")

    width = max(len(e.name) for e in list(step_report) + list(constraint_report))
    for entry in list(step_report) + list(constraint_report):
        witness = "" if entry.witness is None else f"  witness={entry.witness:.6g}"
        print(f"{entry.name:<{width}}  {entry.verdict:>9}{witness}")
    print(f"overall: {'pass' if passed else 'FAIL'}")
    return 0 if passed else 1


def _cmd_decompose(config: RunConfig) -> int:
    model = _build_model(config)
    if config.model.kind != "ou":
        raise ConfigurationError(
            "decompose uses the closed-form ledger, which exists for the "
            "scalar linear model only (model.kind = ou)"
        )
    grid = build_grid(_build_step_spec(config), config.grid.n_steps)
    states, dw = record_linear_bem_path(model, grid, PathStream(config.seed, 0))
    ledger = MartingaleLedger.closed_form_linear(
        model, grid, path=states, increments=dw
    )
    k_last = config.decompose.k_last if config.decompose.k_last > 0 else None
    table = decomposition_table(ledger, k_last)

    lines = ["k,t_k,R,Mtilde,Rtilde,Z,reconstruction_residual"]
    for i in range(len(table["k"])):
        lines.append(
            f"{int(table['k'][i])},{_fmt(float(table['t'][i]))},"
            f"{_fmt(float(table['r'][i]))},{_fmt(float(table['mtilde'][i]))},"
            f"{_fmt(float(table['rtilde'][i]))},{_fmt(float(table['z'][i]))},"
            f"{_fmt(float(table['residual'][i]))}"
        )
    _emit(config, "decomposition.csv", "\n".join(lines) + "\n")

    N = int(ledger.qindex.k_max)
    qv = qv_average(ledger, N)
    mt = mtilde_series(ledger, N)
    v_hat = model.linear.sigma / model.linear.a
    points = (0.0, 0.25, 0.5, 0.75, 1.0)
    lam = strassen_functional(mt, v_hat, ledger.qindex.tilde_times, N, np.array(points))
    doc = _summary_base(config, "decompose")
    doc["blocks"] = N
    doc["qv_average"] = qv
    doc["strassen_lambda"] = {format(p, "g"): float(v) for p, v in zip(points, lam)}
    _emit(config, "summary.json", _json_text(doc) + "\n")
    print(f"qv_average over {N} blocks = {qv:.6g}")
    return 0


def dispatch(config: RunConfig, subcommand: str) -> int:
    """Run one subcommand pipeline; returns the process exit status."""
    if subcommand not in SUBCOMMANDS:
        raise ConfigurationError(
            f"unknown subcommand {subcommand!r}; expected one of {SUBCOMMANDS}"
        )
    os.makedirs(config.output.dir, exist_ok=True)
    _emit(config, "resolved.ini", render_config(config))
    if subcommand in ("simulate", "lil-curve", "estimate-v"):
        return _cmd_run(config, subcommand)
    if subcommand == "verify":
        return _cmd_verify(config)
    return _cmd_decompose(config)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------


def _build_argparser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lilstep",
        description="Long-run simulation and diagnostics on decreasing-step grids.",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)
    helps = {
        "simulate": "run the ensemble and write paths.csv + summary.json",
        "lil-curve": "run the ensemble and write the normalized-statistic curve",
        "estimate-v": "run the ensemble and write the v^2 estimates",
        "verify": "evaluate step conditions and exponent constraints",
        "decompose": "write the martingale decomposition of one path",
    }
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=helps[name])
        p.add_argument("--config", metavar="PATH", help="INI configuration file")
        p.add_argument("--seed", type=int, metavar="N", help="override the config seed")
        p.add_argument("--out", metavar="DIR", help="override the output directory")
        p.add_argument("--workers", type=int, metavar="N", help="worker process count")
        p.add_argument(
            "--fail-fast",
            action="store_true",
            help="abort on the first path failure instead of recording it",
        )
    return parser


def _apply_overrides(config: RunConfig, args: argparse.Namespace) -> RunConfig:
    # precedence: flag > environment > config file > default
    out_dir = os.environ.get(ENV_OUT)
    if args.out is not None:
        out_dir = args.out
    if out_dir is not None:
        config = replace(config, output=OutputSection(dir=out_dir))

    workers = None
    env_workers = os.environ.get(ENV_WORKERS)
    if env_workers is not None:
        try:
            workers = int(env_workers)
        except ValueError:
            raise ConfigProblems(
                [f"{ENV_WORKERS} must be an integer, got {env_workers!r}"]
            ) from None
    if args.workers is not None:
        workers = args.workers
    mc = config.mc
    if workers is not None:
        if workers < 1:
            raise ConfigProblems([f"workers must be >= 1, got {workers}"])
        mc = replace(mc, workers=workers)
    if args.fail_fast:
        mc = replace(mc, fail_fast=True)
    if mc is not config.mc:
        config = replace(config, mc=mc)
    return config


def main(argv: list[str] | None = None) -> int:
    args = _build_argparser().parse_args(argv)
    try:
        text = ""
        if args.config is not None:
            try:
                with open(args.config, "r", encoding="utf-8") as handle:
                    text = handle.read()
            except OSError as exc:
                print(f"cannot read config: {exc}", file=sys.stderr)
                return 1
        config = parse_config(text, seed_override=args.seed)
        config = _apply_overrides(config, args)
        return dispatch(config, args.subcommand)
    except ConfigProblems as exc:
        for problem in exc.problems:
            print(f"config: {problem}", file=sys.stderr)
        return 1
    except (ConfigurationError, DomainError, HorizonError, UsageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except LilstepError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # total front end: no tracebacks to the terminal
        print(f"unexpected failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
