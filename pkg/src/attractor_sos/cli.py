"""Command-line interface, run configuration and result documents.

A run configuration is an INI file::

    [system]
    time = discrete
    variables = x, y
    field = 2/3*(1 + y) - 2.1*x^2; 0.45*x
    discount = 0.05

    [domain]
    kind = box
    lower = -1, -1
    upper = 1, 1

    [tightening]
    degrees = 6, 8, 10

    [run]
    seed = 7

Optional sections: ``[solver]`` (SolverSettings fields), ``[certify]``,
``[volume]``, ``[grid]`` and ``[simulate]``.
"""

from __future__ import annotations

import argparse
import configparser
import datetime
import io
import json
import logging
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field, fields, replace
from importlib import resources
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import __version__
from .attractor import (AttractorApproximation, CertificationRecord, certify, estimate_volume,
                        grid_evaluate, intersect)
from .domain import (Annulus, Ball, Box, SamplingError, SemialgebraicSet, inequality_mismatch)
from .poly import Polynomial, PolynomialMap, PolynomialSyntaxError, monomial_basis, parse_polynomial
from .sdp import SdpSolution, SdpStatus, SolverSettings, export_sdpa, solve
from .sos import (DEFAULT_TRACE_BOUND, CompiledSdp, TighteningError, build_tightening,
                  compile_to_sdp)
from .system import (CONTINUOUS, DISCRETE, DivergenceError, DynamicalSystem, LeftDomainError,
                     sample_attractor)

log = logging.getLogger("attractor_sos")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_SOLVER = 3

REGIONS = ("Yk", "Xk")


class ConfigError(ValueError):
    """Invalid run configuration or result document."""


# -- configuration -------------------------------------------------------------------

@dataclass(frozen=True)
class SystemSpec:
    time_kind: str
    variables: Tuple[str, ...]
    field: Tuple[str, ...]
    discount: float

    def build(self) -> DynamicalSystem:
        try:
            comps = [parse_polynomial(e, self.variables) for e in self.field]
        except PolynomialSyntaxError as exc:
            raise ConfigError(f"[system] field: {exc}") from exc
        try:
            return DynamicalSystem(self.time_kind, PolynomialMap(tuple(comps)), self.discount,
                                   self.variables)
        except ValueError as exc:
            raise ConfigError(f"[system] {exc}") from exc


@dataclass(frozen=True)
class DomainSpec:
    kind: str
    lower: Optional[Tuple[float, ...]] = None
    upper: Optional[Tuple[float, ...]] = None
    center: Optional[Tuple[float, ...]] = None
    radius: Optional[float] = None
    inner_radius: Optional[float] = None
    outer_radius: Optional[float] = None
    inequalities: Tuple[str, ...] = ()

    def build(self, variables: Sequence[str]) -> SemialgebraicSet:
        n = len(variables)
        try:
            if self.kind == "box":
                dom = Box(self.lower, self.upper)
            elif self.kind == "ball":
                dom = Ball(self.center, self.radius)
            else:
                dom = Annulus(self.center, self.inner_radius, self.outer_radius)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[domain] {exc}") from exc
        if dom.dim != n:
            raise ConfigError(f"[domain] has dimension {dom.dim} but the system has {n} variables")
        try:
            extra = [parse_polynomial(e, variables) for e in self.inequalities]
        except PolynomialSyntaxError as exc:
            raise ConfigError(f"[domain] inequalities: {exc}") from exc
        return SemialgebraicSet.from_domain(dom, extra)


@dataclass(frozen=True)
class GridSpec:
    axes: Tuple[Tuple[str, float, float, int], ...] = ()
    slice: Tuple[Tuple[str, float], ...] = ()


@dataclass(frozen=True)
class SimulateSpec:
    initial: Optional[Tuple[float, ...]] = None
    burn_in: int = 1000
    count: int = 10_000
    dt: float = 1e-3
    stride: int = 1


@dataclass(frozen=True)
class RunConfig:
    system: SystemSpec
    domain: DomainSpec
    degrees: Tuple[int, ...]
    seed: int
    scale: bool = True
    gram_trace_bound: Optional[float] = DEFAULT_TRACE_BOUND
    solver: SolverSettings = field(default_factory=SolverSettings)
    certify_samples: int = 10_000
    volume_samples: int = 100_000
    volume_region: str = "Xk"
    grid: GridSpec = field(default_factory=GridSpec)
    simulate: SimulateSpec = field(default_factory=SimulateSpec)

    def build_system(self) -> DynamicalSystem:
        return self.system.build()

    def build_set(self) -> SemialgebraicSet:
        return self.domain.build(self.system.variables)


def _split_list(text: str) -> List[str]:
    parts = [p.strip() for chunk in text.splitlines() for p in chunk.split(";")]
    return [p for p in parts if p]


def _floats(text: str, what: str) -> Tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"{what}: expected numbers, got {text!r}") from exc


def _number(section, key, cast, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"[{section.name}] {key} is required")
        return default
    raw = section[key].strip()
    try:
        return cast(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key}: cannot read {raw!r}") from exc


def _int(text: str) -> int:
    v = float(text)
    if v != int(v):
        raise ValueError(text)
    return int(v)


_KNOWN = {
    "system": {"time", "variables", "field", "discount"},
    "domain": {"kind", "lower", "upper", "center", "radius", "inner_radius", "outer_radius",
               "inequalities"},
    "tightening": {"degrees", "scale", "gram_trace_bound"},
    "solver": {f.name for f in fields(SolverSettings)} - {"verbose"},
    "run": {"seed"},
    "certify": {"samples"},
    "volume": {"samples", "region"},
    "grid": {"axes", "slice"},
    "simulate": {"initial", "burn_in", "count", "dt", "stride"},
}


def parse_config(text: str) -> RunConfig:
    """Parse and validate a run configuration."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from exc
    for name in cp.sections():
        if name not in _KNOWN:
            raise ConfigError(f"unknown section [{name}]")
        unknown = set(cp[name]) - _KNOWN[name]
        if unknown:
            raise ConfigError(f"[{name}] unknown keys: {', '.join(sorted(unknown))}")
    for name in ("system", "domain", "tightening", "run"):
        if not cp.has_section(name):
            raise ConfigError(f"missing section [{name}]")

    s = cp["system"]
    for key in ("time", "variables", "field", "discount"):
        if key not in s:
            raise ConfigError(f"[system] {key} is required")
    kind = s["time"].strip().lower()
    if kind not in (CONTINUOUS, DISCRETE):
        raise ConfigError(f"[system] time must be '{CONTINUOUS}' or '{DISCRETE}', got {kind!r}")
    variables = tuple(v.strip() for v in s["variables"].replace(",", " ").split())
    exprs = tuple(_split_list(s["field"]))
    if len(exprs) != len(variables):
        raise ConfigError(f"[system] field has {len(exprs)} components for "
                          f"{len(variables)} variables")
    discount = _number(s, "discount", float, required=True)
    system = SystemSpec(kind, variables, exprs, discount)

    d = cp["domain"]
    dkind = d.get("kind", "").strip().lower()
    if dkind not in ("box", "ball", "annulus"):
        raise ConfigError(f"[domain] kind must be box, ball or annulus, got {dkind!r}")
    needed = {"box": ("lower", "upper"), "ball": ("center", "radius"),
              "annulus": ("center", "inner_radius", "outer_radius")}[dkind]
    for key in needed:
        if key not in d:
            raise ConfigError(f"[domain] {dkind} needs {key}")
    vec = lambda k: _floats(d[k], f"[domain] {k}") if k in d else None  # noqa: E731
    domain = DomainSpec(dkind, vec("lower") if dkind == "box" else None,
                        vec("upper") if dkind == "box" else None,
                        vec("center") if dkind != "box" else None,
                        _number(d, "radius", float) if dkind == "ball" else None,
                        _number(d, "inner_radius", float) if dkind == "annulus" else None,
                        _number(d, "outer_radius", float) if dkind == "annulus" else None,
                        tuple(_split_list(d.get("inequalities", ""))))

    t = cp["tightening"]
    if "degrees" not in t:
        raise ConfigError("[tightening] degrees is required")
    try:
        degrees = tuple(_int(v) for v in t["degrees"].replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"[tightening] degrees must be integers: {t['degrees']!r}") from exc
    if not degrees:
        raise ConfigError("[tightening] degrees is empty")
    try:
        scale = t.getboolean("scale", True)
    except ValueError as exc:
        raise ConfigError(f"[tightening] scale: {exc}") from exc
    bound_text = t.get("gram_trace_bound", repr(DEFAULT_TRACE_BOUND)).strip().lower()
    try:
        bound = None if bound_text == "none" else float(bound_text)
    except ValueError as exc:
        raise ConfigError(f"[tightening] gram_trace_bound: cannot read {bound_text!r}") from exc
    if bound is not None and not bound > 0:
        raise ConfigError("[tightening] gram_trace_bound must be positive or 'none'")

    solver = SolverSettings()
    if cp.has_section("solver"):
        sv = cp["solver"]
        kw = {}
        for f in fields(SolverSettings):
            if f.name in sv:
                kw[f.name] = _number(sv, f.name, _int if f.name == "max_iterations" else float)
        try:
            solver = SolverSettings(**kw)
        except ValueError as exc:
            raise ConfigError(f"[solver] {exc}") from exc

    r = cp["run"]
    if "seed" not in r:
        raise ConfigError("[run] seed is required (stochastic actions need a seed)")
    seed = _number(r, "seed", _int)
    if seed < 0:
        raise ConfigError("[run] seed must be >= 0")

    sec = lambda name: cp[name] if cp.has_section(name) else {}  # noqa: E731
    c = sec("certify")
    cert_samples = _number(c, "samples", _int, 10_000) if c else 10_000
    v = sec("volume")
    vol_samples = _number(v, "samples", _int, 100_000) if v else 100_000
    region = v.get("region", "Xk").strip() if v else "Xk"
    if region not in REGIONS + ("intersection",):
        raise ConfigError(f"[volume] region must be Yk, Xk or intersection, got {region!r}")
    if cert_samples < 1:
        raise ConfigError("[certify] samples must be >= 1")
    if vol_samples < 100:
        raise ConfigError("[volume] samples must be >= 100")

    g = sec("grid")
    axes, slices = [], []
    if g:
        for item in _split_list(g.get("axes", "")):
            tok = item.replace(",", " ").split()
            if len(tok) != 4:
                raise ConfigError(f"[grid] axis {item!r} must read 'name min max count'")
            try:
                axes.append((tok[0], float(tok[1]), float(tok[2]), _int(tok[3])))
            except ValueError as exc:
                raise ConfigError(f"[grid] axis {item!r}: {exc}") from exc
        for item in _split_list(g.get("slice", "")):
            tok = item.replace(",", " ").replace("=", " ").split()
            if len(tok) != 2:
                raise ConfigError(f"[grid] slice {item!r} must read 'name value'")
            try:
                slices.append((tok[0], float(tok[1])))
            except ValueError as exc:
                raise ConfigError(f"[grid] slice {item!r}: {exc}") from exc
        for name in [a[0] for a in axes] + [sl[0] for sl in slices]:
            if name not in variables:
                raise ConfigError(f"[grid] unknown variable {name!r}")
    grid = GridSpec(tuple(axes), tuple(slices))

    m = sec("simulate")
    sim = SimulateSpec()
    if m:
        sim = SimulateSpec(
            _floats(m["initial"], "[simulate] initial") if "initial" in m else None,
            _number(m, "burn_in", _int, sim.burn_in), _number(m, "count", _int, sim.count),
            _number(m, "dt", float, sim.dt), _number(m, "stride", _int, sim.stride))
        if sim.initial is not None and len(sim.initial) != len(variables):
            raise ConfigError("[simulate] initial needs one value per variable")
        if sim.burn_in < 1 or sim.count < 1 or sim.stride < 1 or not sim.dt > 0:
            raise ConfigError("[simulate] burn_in, count, stride must be >= 1 and dt > 0")

    cfg = RunConfig(system, domain, degrees, seed, scale, bound, solver, cert_samples,
                    vol_samples, region, grid, sim)
    validate(cfg)
    return cfg


def validate(cfg: RunConfig) -> Tuple[DynamicalSystem, SemialgebraicSet]:
    """Semantic checks that need the built system and state set."""
    sys_ = cfg.build_system()
    X = cfg.build_set()
    deg_f = sys_.field.degree
    for k in cfg.degrees:
        if k % 2 or k < max(2, deg_f):
            raise ConfigError(f"[tightening] degree {k} must be even and >= max(2, deg f = {deg_f})")
    if len(set(cfg.degrees)) != len(cfg.degrees):
        raise ConfigError("[tightening] degrees repeat")
    return sys_, X


def _fmt_float(v: float) -> str:
    return repr(float(v))


def _fmt_vec(v) -> str:
    return ", ".join(_fmt_float(x) for x in v)


def serialize_config(cfg: RunConfig) -> str:
    """Canonical text form; ``parse_config(serialize_config(c)) == c``."""
    cp = configparser.ConfigParser(interpolation=None)
    s = cfg.system
    cp["system"] = {"time": s.time_kind, "variables": ", ".join(s.variables),
                    "field": "; ".join(s.field), "discount": _fmt_float(s.discount)}
    d = cfg.domain
    dom = {"kind": d.kind}
    for key in ("lower", "upper", "center"):
        if getattr(d, key) is not None:
            dom[key] = _fmt_vec(getattr(d, key))
    for key in ("radius", "inner_radius", "outer_radius"):
        if getattr(d, key) is not None:
            dom[key] = _fmt_float(getattr(d, key))
    if d.inequalities:
        dom["inequalities"] = "; ".join(d.inequalities)
    cp["domain"] = dom
    cp["tightening"] = {"degrees": ", ".join(str(k) for k in cfg.degrees),
                        "scale": "true" if cfg.scale else "false",
                        "gram_trace_bound": "none" if cfg.gram_trace_bound is None
                        else _fmt_float(cfg.gram_trace_bound)}
    sv = cfg.solver
    cp["solver"] = {f.name: (str(getattr(sv, f.name)) if f.name == "max_iterations"
                             else _fmt_float(getattr(sv, f.name)))
                    for f in fields(SolverSettings) if f.name != "verbose"}
    cp["run"] = {"seed": str(cfg.seed)}
    cp["certify"] = {"samples": str(cfg.certify_samples)}
    cp["volume"] = {"samples": str(cfg.volume_samples), "region": cfg.volume_region}
    if cfg.grid.axes or cfg.grid.slice:
        grid = {"axes": "; ".join(f"{n} {_fmt_float(lo)} {_fmt_float(hi)} {c}"
                                  for n, lo, hi, c in cfg.grid.axes)}
        if cfg.grid.slice:
            grid["slice"] = "; ".join(f"{n} {_fmt_float(v)}" for n, v in cfg.grid.slice)
        cp["grid"] = grid
    sim = cfg.simulate
    simd = {"burn_in": str(sim.burn_in), "count": str(sim.count), "dt": _fmt_float(sim.dt),
            "stride": str(sim.stride)}
    if sim.initial is not None:
        simd = {"initial": _fmt_vec(sim.initial), **simd}
    cp["simulate"] = simd
    out = io.StringIO()
    cp.write(out)
    return out.getvalue()


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def bundled_config(name: str) -> str:
    """Path of a bundled example configuration (``lorenz``, ``henon``, ``vanderpol``...)."""
    ref = resources.files("attractor_sos") / "configs" / f"{name}.cfg"
    if not ref.is_file():
        raise ConfigError(f"no bundled configuration named {name!r}")
    return str(ref)


def bundled_names() -> List[str]:
    folder = resources.files("attractor_sos") / "configs"
    return sorted(p.name[:-4] for p in folder.iterdir() if p.name.endswith(".cfg"))


def config_warnings(cfg: RunConfig) -> List[str]:
    """Advisories about configurations that are valid but possibly unintended."""
    out = []
    X = cfg.build_set()
    if cfg.domain.inequalities:
        frac = inequality_mismatch(X, 4000, cfg.seed)
        if frac > 0:
            out.append(f"the [domain] inequalities disagree with the {cfg.domain.kind} on "
                       f"{100 * frac:.2g}% of test points; moments are taken over the "
                       f"{cfg.domain.kind}")
    if cfg.system.time_kind == DISCRETE:
        out.append("injectivity of the map on X is not verified; containment of the "
                   "attractor holds regardless, tightness may not")
    return out


# -- result documents ----------------------------------------------------------------

def _atomic_write(path, text: str) -> None:
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=folder)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        mask = os.umask(0)
        os.umask(mask)
        os.chmod(tmp, 0o666 & ~mask)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _coefficient_list(p: Polynomial, k: int) -> List[dict]:
    basis = monomial_basis(p.dim, k)
    return [{"exponent": list(e), "coefficient": float(c)}
            for e, c in zip(basis, p.coefficients(basis))]


def _poly_from_list(n: int, items) -> Polynomial:
    return Polynomial(n, {tuple(int(a) for a in it["exponent"]): float(it["coefficient"])
                          for it in items})


def _solution_dict(sol: SdpSolution) -> dict:
    return {
        "free_values": [float(v) for v in sol.free_values],
        "blocks_upper": [[float(v) for v in np.asarray(B)[np.triu_indices(len(B))]]
                         for B in sol.block_values],
    }


def _solution_from_dict(d: dict, sizes: Sequence[int], status: str) -> SdpSolution:
    blocks = []
    for s, vals in zip(sizes, d["blocks_upper"]):
        B = np.zeros((s, s))
        B[np.triu_indices(s)] = vals
        blocks.append(B + np.triu(B, 1).T)
    if len(blocks) != len(sizes):
        raise ConfigError("stored SDP solution does not match the program")
    return SdpSolution(blocks, np.array(d["free_values"], dtype=float), float("nan"),
                       SdpStatus(status), float("nan"), float("nan"), float("nan"))


def record_dict(approx: AttractorApproximation, sol: SdpSolution) -> dict:
    return {
        "k": approx.k,
        "discount": approx.discount,
        "status": sol.status.value,
        "d_k": approx.d_k,
        "fingerprint": approx.fingerprint,
        "solver": {"iterations": sol.iterations,
                   "objective_value": sol.objective_value,
                   "dual_objective": sol.dual_objective,
                   "equality_inf_norm": sol.equality_inf_norm,
                   "min_block_eigenvalue": sol.min_block_eigenvalue,
                   "duality_gap": sol.duality_gap},
        "certification": approx.certification.to_dict() if approx.certification else None,
        "coefficients": {name: _coefficient_list(getattr(approx, name), approx.k)
                         for name in ("v1", "v2", "w")},
        "sdp_solution": _solution_dict(sol),
    }


def result_document(cfg: RunConfig, records: List[dict], wall_times: Dict[int, float]) -> dict:
    return {
        "toolkit": "attractor_sos",
        "version": __version__,
        "config": serialize_config(cfg),
        "records": records,
        # everything run-dependent lives here so the rest is reproducible byte for byte
        "timestamp": {
            "created": datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds"),
            "wall_time_seconds": {str(k): round(v, 3) for k, v in wall_times.items()},
        },
    }


def dump_document(doc: dict) -> str:
    return json.dumps(doc, indent=1, sort_keys=False, allow_nan=True) + "\n"


@dataclass
class LoadedResult:
    config: RunConfig
    approximations: List[AttractorApproximation]
    records: List[dict]

    def select(self, degree: Optional[int]) -> List[int]:
        idx = [i for i, a in enumerate(self.approximations) if degree is None or a.k == degree]
        if not idx:
            raise ConfigError(f"result has no record with degree {degree}")
        return idx


def load_result(path) -> LoadedResult:
    """Read a result document and rebuild its approximations."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read result {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"result {path} is not valid JSON: {exc}") from exc
    try:
        cfg = parse_config(doc["config"])
        sys_ = cfg.build_system()
        X = cfg.build_set()
        approxs = []
        for rec in doc["records"]:
            polys = {name: _poly_from_list(sys_.dim, rec["coefficients"][name])
                     for name in ("v1", "v2", "w")}
            cert = rec.get("certification")
            approxs.append(AttractorApproximation(
                rec["fingerprint"], X, int(rec["k"]), float(rec["discount"]),
                polys["v1"], polys["v2"], polys["w"], float(rec["d_k"]),
                CertificationRecord.from_dict(cert) if cert else None, sys_.variables))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"result {path} is missing field {exc}") from exc
    if any(a.fingerprint != sys_.fingerprint() for a in approxs):
        raise ConfigError("result records do not match the system in the embedded config")
    return LoadedResult(cfg, approxs, doc["records"])


# -- commands --------------------------------------------------------------------------

def _compile(cfg: RunConfig, k: int) -> CompiledSdp:
    sys_, X = cfg.build_system(), cfg.build_set()
    try:
        return compile_to_sdp(build_tightening(sys_, X, k, scale=cfg.scale,
                                               gram_trace_bound=cfg.gram_trace_bound))
    except TighteningError as exc:
        raise ConfigError(str(exc)) from exc


def _degrees(cfg: RunConfig, degree: Optional[int]) -> Tuple[int, ...]:
    if degree is None:
        return cfg.degrees
    if degree not in cfg.degrees:
        cfg_deg = ", ".join(map(str, cfg.degrees))
        raise ConfigError(f"degree {degree} is not among the configured degrees ({cfg_deg})")
    return (degree,)


def run_solve(cfg: RunConfig, out_path, degree: Optional[int] = None) -> Tuple[dict, int]:
    """Solve and certify every configured degree; write the result document."""
    records, walls, ok = [], {}, True
    sys_ = cfg.build_system()
    for k in _degrees(cfg, degree):
        start = time.perf_counter()
        compiled = _compile(cfg, k)
        sol = solve(compiled.problem, cfg.solver)
        approx = AttractorApproximation.from_solution(compiled, sol, allow_inexact=True)
        record = certify(approx, compiled, sol, approx.X, cfg.certify_samples, cfg.seed)
        approx = approx.with_certification(record)
        walls[k] = time.perf_counter() - start
        records.append(record_dict(approx, sol))
        log.info("k=%d status=%s d_k=%.10g verdict=%s (%.1fs)", k, sol.status.value,
                 approx.d_k, record.verdict, walls[k])
        if sol.status != SdpStatus.OPTIMAL or not record.accepted:
            ok = False
    assert sys_.dim == len(cfg.system.variables)
    doc = result_document(cfg, records, walls)
    _atomic_write(out_path, dump_document(doc))
    return doc, EXIT_OK if ok else EXIT_SOLVER


def run_certify(result_path, out_path, samples: Optional[int], seed: Optional[int],
                degree: Optional[int] = None) -> Tuple[dict, int]:
    """Re-certify stored solutions with fresh samples."""
    res = load_result(result_path)
    cfg = res.config
    seed = cfg.seed if seed is None else seed
    samples = cfg.certify_samples if samples is None else samples
    out, ok = [], True
    for i in res.select(degree):
        a, rec = res.approximations[i], res.records[i]
        compiled = _compile(cfg, a.k)
        sol = _solution_from_dict(rec["sdp_solution"], compiled.problem.block_sizes, rec["status"])
        record = certify(a, compiled, sol, a.X, samples, seed)
        ok &= record.accepted
        out.append({"k": a.k, "certification": record.to_dict()})
    doc = {"result": os.fspath(result_path), "certifications": out}
    _atomic_write(out_path, json.dumps(doc, indent=1) + "\n")
    return doc, EXIT_OK if ok else EXIT_SOLVER


def run_volume(result_path, out_path, samples: Optional[int], seed: Optional[int],
               degree: Optional[int] = None) -> dict:
    res = load_result(result_path)
    cfg = res.config
    seed = cfg.seed if seed is None else seed
    samples = cfg.volume_samples if samples is None else samples
    dom = cfg.build_set().moment_domain
    out = []
    idx = res.select(degree)
    for i in idx:
        a = res.approximations[i]
        for region, pred in (("Yk", a.member_yk_many), ("Xk", a.member_xk_many)):
            r = estimate_volume(pred, dom, samples, seed)
            out.append({"k": a.k, "region": region, "d_k": a.d_k, **r.to_dict()})
    if len(idx) > 1:
        r = estimate_volume(intersect([res.approximations[i] for i in idx]), dom, samples, seed)
        out.append({"k": [res.approximations[i].k for i in idx], "region": "intersection",
                    **r.to_dict()})
    # the configured region of interest, for the highest selected degree
    want = cfg.volume_region if len(idx) > 1 or cfg.volume_region != "intersection" else "Xk"
    primary = [v for v in out if v["region"] == want][-1]
    doc = {"result": os.fspath(result_path), "domain_volume": dom.volume(),
           "primary": primary, "volumes": out}
    _atomic_write(out_path, json.dumps(doc, indent=1) + "\n")
    return doc


def run_grid(result_path, out_path, degree: Optional[int] = None) -> int:
    res = load_result(result_path)
    cfg = res.config
    if not cfg.grid.axes:
        raise ConfigError("[grid] axes are not configured")
    names = list(cfg.system.variables)
    idx = res.select(degree)
    a = res.approximations[idx[-1]]
    axes = [(names.index(n), lo, hi, c) for n, lo, hi, c in cfg.grid.axes]
    slices = {names.index(n): v for n, v in cfg.grid.slice}
    try:
        grid = grid_evaluate(a, axes, slices)
    except ValueError as exc:
        raise ConfigError(f"[grid] {exc}") from exc
    buf = io.StringIO()
    grid.write_csv(buf, names)
    _atomic_write(out_path, buf.getvalue())
    return len(grid.points)


def run_simulate(cfg: RunConfig, out_path) -> int:
    sim = cfg.simulate
    if sim.initial is None:
        raise ConfigError("[simulate] initial is required")
    sys_, X = cfg.build_system(), cfg.build_set()
    try:
        traj = sample_attractor(sys_, X, sim.initial, sim.burn_in, sim.count, sim.dt, sim.stride)
    except ValueError as exc:
        raise ConfigError(f"[simulate] {exc}") from exc
    buf = io.StringIO()
    buf.write(",".join(sys_.variables) + "\n")
    for row in traj.points:
        buf.write(",".join(repr(float(v)) for v in row) + "\n")
    _atomic_write(out_path, buf.getvalue())
    return len(traj.points)


def run_export(cfg: RunConfig, out_path, degree: Optional[int] = None) -> List[str]:
    ks = _degrees(cfg, degree)
    paths = []
    for k in ks:
        path = os.fspath(out_path)
        if len(ks) > 1:
            stem, ext = os.path.splitext(path)
            path = f"{stem}_k{k}{ext or '.dat-s'}"
        text = export_sdpa(_compile(cfg, k).problem)
        _atomic_write(path, text)
        paths.append(path)
    return paths


# -- entry point -----------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="attractor-sos",
                                description="Outer approximations of global attractors.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="verb", required=True)

    def add(name, help_, config=False, result=False, out_required=False):
        sp = sub.add_parser(name, help=help_)
        if config:
            sp.add_argument("--config", required=True,
                            help="config file, or the name of a bundled example")
        if result:
            sp.add_argument("--result", required=True, help="result document from 'solve'")
        sp.add_argument("--out", required=out_required, help="output path")
        sp.add_argument("--degree", type=int, help="restrict to one degree")
        return sp

    sp = add("solve", "solve, certify and write a result document", config=True)
    sp.add_argument("--seed", type=int, help="override the config seed")
    sp.add_argument("--samples", type=int, help="override the certification sample count")
    sp = add("certify", "re-certify a result with fresh samples", result=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--samples", type=int)
    sp = add("volume", "Monte Carlo volumes of Y_k, X_k and their intersection", result=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--samples", type=int)
    add("grid", "evaluate the approximation on the configured grid (CSV)", result=True,
        out_required=True)
    sp = add("simulate", "simulate a trajectory and write it as CSV", config=True,
             out_required=True)
    sp.add_argument("--seed", type=int, help="accepted for symmetry; simulation is deterministic")
    add("export-sdpa", "write the compiled SDP in SDPA sparse format", config=True,
        out_required=True)
    return p


def _resolve_config(arg: str) -> RunConfig:
    if not os.path.exists(arg) and os.sep not in arg and not arg.endswith(".cfg"):
        arg = bundled_config(arg)
    return load_config(arg)


def _default_out(base: str, suffix: str) -> str:
    stem = os.path.splitext(os.path.basename(base))[0]
    return f"{stem}{suffix}"


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        if args.verb in ("solve", "simulate", "export-sdpa"):
            cfg = _resolve_config(args.config)
            if getattr(args, "seed", None) is not None and args.verb == "solve":
                if args.seed < 0:
                    raise ConfigError("--seed must be >= 0")
                cfg = replace(cfg, seed=args.seed)
            if getattr(args, "samples", None) is not None:
                if args.samples < 1:
                    raise ConfigError("--samples must be >= 1")
                cfg = replace(cfg, certify_samples=args.samples)
            for msg in config_warnings(cfg):
                log.warning(msg)
            if args.verb == "solve":
                out = args.out or _default_out(args.config, ".result.json")
                _, code = run_solve(cfg, out, args.degree)
                print(out)
                return code
            if args.verb == "simulate":
                run_simulate(cfg, args.out)
            else:
                for path in run_export(cfg, args.out, args.degree):
                    print(path)
                return EXIT_OK
            print(args.out)
            return EXIT_OK
        if args.verb == "certify":
            out = args.out or _default_out(args.result, ".certify.json")
            _, code = run_certify(args.result, out, args.samples, args.seed, args.degree)
            print(out)
            return code
        if args.verb == "volume":
            if args.samples is not None and args.samples < 100:
                raise ConfigError("--samples must be >= 100")
            out = args.out or _default_out(args.result, ".volume.json")
            run_volume(args.result, out, args.samples, args.seed, args.degree)
            print(out)
            return EXIT_OK
        run_grid(args.result, args.out, args.degree)
        print(args.out)
        return EXIT_OK
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (LeftDomainError, DivergenceError, SamplingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
