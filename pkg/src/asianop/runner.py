"""Command orchestration, result documents and the on-disk result cache."""

from __future__ import annotations

import json
import logging
import math
import os
import shutil
import tempfile
import time
import warnings
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import green
from .config import RunConfig
from .diagnostics import extract_exercise_boundary, growth_bound_check, smooth_pasting_check
from .domains import BlendBoundary, DomainKind, build_grid
from .errors import DomainError
from .mc import european_price_mc, lsmc_price
from .model import SpaceTimePoint, calibrate_supersolution, sample_grid
from .reduction import solve_floating_reduced
from .solver import solve_obstacle
from .validation import run_all

log = logging.getLogger("asianop")

SCHEMA_VERSION = 1
COMMANDS = ("price", "boundary", "validate", "compare", "density")


class _Timer:
    def __init__(self):
        self.marks: dict[str, float] = {}

    @contextmanager
    def __call__(self, name: str):
        t0 = time.perf_counter()
        try:
            yield
        finally:
            self.marks[name] = self.marks.get(name, 0.0) + time.perf_counter() - t0


# ---------------------------------------------------------------------------
# shared pieces
# ---------------------------------------------------------------------------

def check_probes(cfg: RunConfig) -> None:
    """Reject probes outside the solved region before doing any work."""
    dom = cfg.domain_spec()
    for t, s, a in cfg.probes.points:
        if not (dom.epsilon <= t < cfg.model.T):
            raise DomainError(f"probe (t={t}, s={s}, a={a}) has t outside [{dom.epsilon}, "
                              f"{cfg.model.T})")
        if cfg.reduction.enabled:
            continue
        if not bool(dom.contains(s, a)):
            raise DomainError(f"probe (t={t}, s={s}, a={a}) lies outside the {dom.kind.value} "
                              "domain")


def calibrate(cfg: RunConfig):
    """Barrier constants on the bounding box of the computational domain."""
    s0, s1, a0, a1 = cfg.domain_spec().bounding_box()
    return calibrate_supersolution(cfg.model_params(), cfg.payoff_spec(),
                                   sample_grid((s0, s1), (a0, a1), cfg.model.T))


def solve_pde(cfg: RunConfig, p, n_s: int, n_a: int, n_t: int):
    m, spec, dom = cfg.model_params(), cfg.payoff_spec(), cfg.domain_spec()
    grid = build_grid(dom, n_s, n_a, n_t, m.averaging)
    bd = BlendBoundary(spec, p, dom, blend_terminal=dom.kind is DomainKind.LENTIL)
    return solve_obstacle(m, spec, dom, grid, cfg.scheme_options(), bd)


def refinement_allowance(values) -> tuple[float, float]:
    """Tail estimate of the remaining error from a mesh-halving sequence.

    With ``d1, d2`` the last two increments and ``rho = |d2/d1|`` the error
    left after the finest level is bounded by ``|d2| rho / (1 - rho)`` if the
    increments shrink geometrically. With only two levels ``rho = 1/2`` is
    assumed. Returns ``(allowance, rho)``; the allowance is infinite when the
    sequence is not contracting.
    """
    v = [float(x) for x in values]
    if len(v) < 2:
        raise ValueError("need at least two refinement levels")
    d2 = v[-1] - v[-2]
    if len(v) == 2:
        return abs(d2), 0.5
    d1 = v[-2] - v[-3]
    if d1 == 0:
        return (0.0, 0.0) if d2 == 0 else (math.inf, math.inf)
    rho = abs(d2 / d1)
    if rho >= 1:
        return math.inf, rho
    return abs(d2) * rho / (1 - rho), rho


def verdict(diff: float, stderr: float, allowance: float) -> str:
    if not math.isfinite(allowance) or 3 * stderr > allowance:
        return "inconclusive"
    return "agree" if abs(diff) <= 3 * stderr + allowance else "disagree"


def _probe_dicts(cfg):
    return [{"t": t, "s": s, "a": a} for t, s, a in cfg.probes.points]


def _field_diagnostics(field_, p) -> dict:
    growth = growth_bound_check(field_, p.alpha, 1.0)
    gap = np.nanmin(field_.u - field_.payoff)
    return {
        "complementarity_residual": field_.meta["complementarity_residual"],
        "min_u_minus_payoff": float(gap),
        "growth_bound": {"C": p.alpha, "q": 1.0, "passed": growth.passed,
                         "worst_ratio": growth.worst_ratio, "worst_point": growth.worst_point},
        "supersolution": {"alpha": p.alpha, "beta": p.beta},
        "scheme": {k: field_.meta[k] for k in ("method", "theta", "omega", "transport", "tol",
                                                "n_s", "n_a", "n_t", "courant",
                                                "omega_fallbacks", "max_iterations")},
    }


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def run_price(cfg: RunConfig, out: Path, threads: int, timer: _Timer) -> dict:
    check_probes(cfg)
    m, spec = cfg.model_params(), cfg.payoff_spec()
    artifacts = []
    if cfg.reduction.enabled:
        r = cfg.reduction
        with timer("solve"):
            red = solve_floating_reduced(m, spec, r.y_max, r.n_y, r.n_t, cfg.scheme_options(),
                                         cfg.domain.epsilon)
        probes = [dict(pt, u=float(red.lift(pt["t"], pt["s"], pt["a"])))
                  for pt in _probe_dicts(cfg)]
        if "csv" in cfg.output.formats and cfg.scheme.field_slices != "none":
            artifacts.append(_reduced_csv(red, out / "reduced_field.csv", cfg.scheme.field_slices))
        diag = {"solver": "reduced", "complementarity_residual":
                red.meta["complementarity_residual"], "y_max": r.y_max, "n_y": r.n_y, "n_t": r.n_t}
        return {"status": "ok", "probes": probes, "diagnostics": diag, "artifacts": artifacts}

    with timer("calibrate"):
        p = calibrate(cfg)
    with timer("solve"):
        field_ = solve_pde(cfg, p, cfg.grid.n_s, cfg.grid.n_a, cfg.grid.n_t)
    probes = []
    for pt in _probe_dicts(cfg):
        u = float(field_.value_at(pt["t"], pt["s"], pt["a"]))
        probes.append(dict(pt, u=u, payoff=float(spec(pt["t"], pt["s"], pt["a"]))))
    if "csv" in cfg.output.formats and cfg.scheme.field_slices != "none":
        with timer("write"):
            field_.to_csv(out / "field.csv", cfg.scheme.field_slices)
        artifacts.append("field.csv")
    return {"status": "ok", "probes": probes, "diagnostics": _field_diagnostics(field_, p),
            "artifacts": artifacts}


def _reduced_csv(red, path: Path, slices: str) -> str:
    ks = range(red.t.size) if slices == "all" else [0]
    with path.open("w") as fh:
        fh.write("t,y,v\n")
        for k in ks:
            for y, v in zip(red.y, red.v[k]):
                fh.write(f"{float(red.t[k])!r},{float(y)!r},{float(v)!r}\n")
    return path.name


def run_boundary(cfg: RunConfig, out: Path, threads: int, timer: _Timer) -> dict:
    spec = cfg.payoff_spec()
    with timer("calibrate"):
        p = calibrate(cfg)
    with timer("solve"):
        field_ = solve_pde(cfg, p, cfg.grid.n_s, cfg.grid.n_a, cfg.grid.n_t)
    with timer("boundary"):
        b = extract_exercise_boundary(field_)
        # near t = epsilon the payoff a/t is steep and the jump measures that, not pasting
        paste = smooth_pasting_check(field_, b, phi_ds=spec.ds, on_edge="skip",
                                     t_window=(0.5 * cfg.model.T, cfg.model.T))
    artifacts = []
    if "csv" in cfg.output.formats:
        b.to_csv(out / "boundary.csv")
        artifacts.append("boundary.csv")
    diag = _field_diagnostics(field_, p)
    diag["smooth_pasting"] = {"max_mismatch": paste.max_mismatch, "n_points": paste.n_points,
                              "t_window": [0.5 * cfg.model.T, cfg.model.T],
                              "worst_point": paste.worst,
                              "exercise_side_error": paste.exercise_side_error}
    diag["exercised_rows"] = int(np.isfinite(b.s_low).sum())
    return {"status": "ok", "probes": [], "diagnostics": diag, "artifacts": artifacts}


def run_validate(cfg: RunConfig, out: Path, threads: int, timer: _Timer) -> dict:
    s0, s1, a0, a1 = cfg.domain_spec().bounding_box()
    dn = cfg.density
    with timer("checks"):
        checks = run_all(cfg.model_params(), cfg.payoff_spec(), (s0, s1), (a0, a1),
                         (dn.x1, dn.x2), dn.horizon, dn.scaling_paths, dn.seed, threads)
    passed = all(c.passed for c in checks)
    return {"status": "passed" if passed else "failed", "probes": [],
            "diagnostics": {"checks": [c.to_dict() for c in checks]}, "artifacts": []}


def run_compare(cfg: RunConfig, out: Path, threads: int, timer: _Timer) -> dict:
    check_probes(cfg)
    m, spec, mc = cfg.model_params(), cfg.payoff_spec(), cfg.mc
    g, L = cfg.grid, cfg.compare.levels
    with timer("calibrate"):
        p = calibrate(cfg)
    levels, values = [], []
    with timer("pde"):
        for lv in range(L):
            f = 2 ** (L - 1 - lv)
            field_ = solve_pde(cfg, p, g.n_s // f, g.n_a // f, g.n_t // f)
            levels.append([g.n_s // f, g.n_a // f, g.n_t // f])
            values.append([float(field_.value_at(t, s, a)) for t, s, a in cfg.probes.points])
    rows = []
    for i, (t, s, a) in enumerate(cfg.probes.points):
        seq = [v[i] for v in values]
        allowance, rho = refinement_allowance(seq)
        z = SpaceTimePoint(t, s, a)
        with timer("lsmc"):
            am = lsmc_price(m, spec, z, mc.M, mc.N, mc.degree, mc.seed, mc.antithetic, threads)
        with timer("european"):
            eu = european_price_mc(m, spec, z, mc.M, mc.N, mc.seed, mc.antithetic, threads)
        diff = seq[-1] - am.price
        rows.append({"t": t, "s": s, "a": a, "pde": seq[-1], "pde_levels": seq,
                     "contraction": rho, "allowance": allowance, "lsmc": am.to_dict(),
                     "european": {"price": eu.price, "stderr": eu.stderr},
                     "difference": diff, "verdict": verdict(diff, am.stderr, allowance)})
    verdicts = {r["verdict"] for r in rows}
    status = ("disagree" if "disagree" in verdicts
              else "agree" if verdicts <= {"agree"} else "inconclusive")
    return {"status": status, "probes": rows,
            "diagnostics": {"levels": levels, "supersolution": {"alpha": p.alpha, "beta": p.beta}},
            "artifacts": []}


def run_density(cfg: RunConfig, out: Path, threads: int, timer: _Timer) -> dict:
    dn = cfg.density
    with timer("estimate"):
        est = green.estimate_gamma_A((dn.x1, dn.x2), dn.horizon, dn.n_paths, dn.bandwidth,
                                     dn.seed, dn.n_grid, threads=threads)
    artifacts = []
    if "csv" in cfg.output.formats:
        est.to_csv(out / "density.csv")
        artifacts.append("density.csv")
    diag = {"mass": est.mass(), "bandwidth": list(est.bandwidth), "n_paths": est.n_paths,
            "x1_mean": est.extra["x1_mean"], "x1_mean_se": est.extra["x1_mean_se"],
            "x2_min": est.extra["x2_min"], "min_density": float(est.density.min())}
    return {"status": "ok", "probes": [], "diagnostics": diag, "artifacts": artifacts}


_RUNNERS: dict[str, Callable] = {"price": run_price, "boundary": run_boundary,
                                 "validate": run_validate, "compare": run_compare,
                                 "density": run_density}


# ---------------------------------------------------------------------------
# result documents and cache
# ---------------------------------------------------------------------------

def clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, NaN and infinities become null."""
    if isinstance(obj, dict):
        return {str(k): clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, allow_nan=False)


def cache_root() -> Path:
    return Path(os.environ.get("ASIANOP_CACHE_DIR", "~/.cache/asianop")).expanduser()


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def load_cached(command: str, cfg: RunConfig, out: Path) -> Optional[dict]:
    """Stored result for this command and config, with artifacts copied to ``out``."""
    key = f"{command}-{cfg.hash()}"
    path = cache_root() / f"{key}.json"
    if not path.exists():
        return None
    try:
        doc = json.loads(path.read_text())
        if not isinstance(doc, dict) or doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError("unexpected schema")
        if doc.get("command") != command or doc.get("config") != cfg.canonical():
            warnings.warn(f"cache entry {path.name} belongs to a different config; recomputing",
                          RuntimeWarning, stacklevel=2)
            return None
        for name in doc.get("artifacts", []):
            src = cache_root() / key / name
            if not src.is_file():
                raise ValueError(f"artifact {name} missing")
        for name in doc.get("artifacts", []):
            shutil.copyfile(cache_root() / key / name, out / name)
    except (OSError, ValueError) as exc:
        warnings.warn(f"corrupted cache entry {path.name} ({exc}); recomputing",
                      RuntimeWarning, stacklevel=2)
        return None
    doc["cached"] = True
    return doc


def store_cached(doc: dict, out: Path) -> Optional[Path]:
    """Artifacts first, then the JSON via rename; a reader never sees half an entry."""
    root = cache_root()
    key = f"{doc['command']}-{doc['config_hash']}"
    try:
        root.mkdir(parents=True, exist_ok=True)
        if doc["artifacts"]:
            staging = Path(tempfile.mkdtemp(dir=root, prefix=f".{key}."))
            for name in doc["artifacts"]:
                shutil.copyfile(out / name, staging / name)
            final = root / key
            if final.exists():
                shutil.rmtree(final, ignore_errors=True)
            try:
                os.replace(staging, final)
            except OSError:
                shutil.rmtree(staging, ignore_errors=True)   # a concurrent writer won
        path = root / f"{key}.json"
        _atomic_write(path, dumps(doc))
        return path
    except OSError as exc:
        warnings.warn(f"cache directory {root} is not writable ({exc}); result not cached",
                      RuntimeWarning, stacklevel=2)
        return None


def dispatch(command: str, cfg: RunConfig, output: Optional[Path] = None, use_cache: bool = True,
             threads: int = 1) -> dict:
    """Run ``command`` and return the result document (also written to the output directory)."""
    if command not in _RUNNERS:
        raise ValueError(f"unknown command {command!r}")
    out = Path(output if output is not None else cfg.output.directory)
    out.mkdir(parents=True, exist_ok=True)
    if use_cache:
        doc = load_cached(command, cfg, out)
        if doc is not None:
            log.info("cache hit for %s-%s", command, cfg.hash())
            if "json" in cfg.output.formats:
                _atomic_write(out / f"{command}.json", dumps(doc))
            return doc

    timer = _Timer()
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        body = _RUNNERS[command](cfg, out, threads, timer)
    messages = sorted({f"{w.category.__name__}: {w.message}" for w in caught})
    for msg in messages:
        log.warning("%s", msg)
    timings = dict(timer.marks, total=time.perf_counter() - t0)
    doc = clean({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config_hash": cfg.hash(),
        "config": cfg.canonical(),
        "status": body["status"],
        "probes": body["probes"],
        "diagnostics": body["diagnostics"],
        "warnings": messages,
        "artifacts": body["artifacts"],
        "timings": {k: round(v, 6) for k, v in timings.items()},
        "cached": False,
    })
    if "json" in cfg.output.formats:
        _atomic_write(out / f"{command}.json", dumps(doc))
    if use_cache:
        store_cached(doc, out)
    return doc
