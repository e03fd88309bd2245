"""Experiment specs and the runner that turns them into CSV files.

An experiment spec is a JSON document::

    {
      "name": "fig5a",
      "scenario": "scenarios/nt12_nr60.json",      # path or inline object
      "schemes": [4, 16, 64],                       # optional: one run per QAM order
      "detectors": ["MF", {"first": "SimplifiedMMSE", "rest": "MF", "iterations": 4}],
      "sweep": {"axis": "ebn0_db", "values": {"start": -16, "stop": -4, "step": 2}},
      "method": "monte-carlo",                      # semi-analytical | monte-carlo | both | iber
      "bounds": true,
      "n_realizations": 200,
      "mc": {"min_errors": 200, "max_blocks": 2000},
      "seed": 1
    }

With ``"axis": "n_r"`` the values are receive-antenna counts and the Eb/N0
operating point comes from the top-level ``ebn0_db`` key (``"inf"`` for the
noiseless limit, which is what ``"method": "iber"`` implies).
"""
import csv
import hashlib
import io
import json
import logging
import math
import platform
import re
import time
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    BerCurve,
    aggregate_ber,
    curves_from_sinr,
    ensemble_sinr,
    semi_analytical_ber,
    simo_awgn_mfb,
    simo_mfb_curve,
)
from .detectors import DetectorKind, DfSchedule
from .modem import QamScheme
from .montecarlo import McConfig, run_mc
from .numerics import BACKEND
from .scenario import AntennaConfig, derive_noise, scenario_from_dict

__all__ = [
    "ExperimentSpec",
    "SpecError",
    "load_spec",
    "parse_spec",
    "run_experiment",
    "bundled_specs",
    "bundled_spec_path",
    "SPEC_DIR",
]

log = logging.getLogger(__name__)

SPEC_DIR = Path(__file__).parent / "specs"
METHODS = ("semi-analytical", "monte-carlo", "both", "iber")
AXES = ("ebn0_db", "n_r")
_TOP_KEYS = {
    "name", "description", "scenario", "schemes", "detectors", "sweep", "method", "bounds",
    "n_realizations", "mc", "seed", "output", "ebn0_db", "mode",
}


class SpecError(ValueError):
    """Invalid experiment spec; ``line`` points into ``source`` when known."""

    def __init__(self, message, source="<spec>", line=None, path=""):
        self.source, self.line, self.path, self.message = source, line, path, message
        where = f"{source}:{line}" if line else source
        super().__init__(f"{where}: {path + ': ' if path else ''}{message}")


def _locate(text, path):
    """1-based line of the JSON key chain ``path`` in ``text`` (best effort)."""
    if text is None:
        return None
    pos, line = 0, None
    for key in path:
        if isinstance(key, int):
            continue
        m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
        if m is None:
            break
        pos = m.start()
        line = text.count("\n", 0, pos) + 1
    return line


def _float(value):
    if isinstance(value, str) and value.strip().lower() in ("inf", "+inf", "infinity"):
        return math.inf
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise TypeError(value)
    return float(value)


def _expand_values(raw):
    if isinstance(raw, dict):
        start, stop, step = (_float(raw[k]) for k in ("start", "stop", "step"))
        if step <= 0 or stop < start:
            raise ValueError("need start <= stop and step > 0")
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [start + i * step for i in range(n)]
    if not isinstance(raw, list):
        raise TypeError(raw)
    return [_float(v) for v in raw]


def _parse_detector(d):
    if isinstance(d, str):
        return DfSchedule.linear(DetectorKind.parse(d))
    if isinstance(d, dict):
        unknown = set(d) - {"first", "rest", "iterations"}
        if unknown:
            raise ValueError(f"unknown key(s) {sorted(unknown)}")
        return DfSchedule(d.get("first", "SimplifiedMMSE"), d.get("rest", "MF"), int(d.get("iterations", 4)))
    raise ValueError(f"expected a detector name or schedule object, got {d!r}")


def _schedule_json(s):
    if s.iterations == 1:
        return s.first.value
    return {"first": s.first.value, "rest": s.rest.value, "iterations": s.iterations}


@dataclass(frozen=True)
class ExperimentSpec:
    """Validated experiment description. Build with :func:`parse_spec`."""

    name: str
    scenario: object
    detectors: tuple
    axis: str
    values: tuple
    method: str = "semi-analytical"
    ebn0_db: float = math.inf
    schemes: tuple = None
    bounds: bool = False
    n_realizations: int = 200
    mc: McConfig = field(default_factory=McConfig)
    seed: int = 0
    output: str = None
    mode: str = "exact"
    description: str = ""

    def to_dict(self):
        """Canonical, fully resolved form (used for the config hash)."""
        return {
            "name": self.name,
            "description": self.description,
            "scenario": self.scenario.to_dict(),
            "schemes": None if self.schemes is None else [s.order for s in self.schemes],
            "detectors": [_schedule_json(s) for s in self.detectors],
            "sweep": {"axis": self.axis, "values": [_num(v) for v in self.values]},
            "ebn0_db": _num(self.ebn0_db),
            "method": self.method,
            "bounds": self.bounds,
            "n_realizations": self.n_realizations,
            "mc": {f.name: getattr(self.mc, f.name) for f in fields(self.mc) if f.name != "seed"},
            "seed": self.seed,
            "mode": self.mode,
        }

    def config_hash(self):
        """Git blob hash of the canonical JSON, so ``git hash-object`` agrees."""
        body = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()

    def with_seed(self, seed):
        return replace(self, seed=int(seed), mc=replace(self.mc, seed=int(seed)))


def _num(v):
    return "inf" if math.isinf(v) else (int(v) if float(v).is_integer() else v)


def _load_scenario_ref(ref, base, source, text):
    if isinstance(ref, dict):
        return scenario_from_dict(ref), source, text
    if not isinstance(ref, str):
        raise SpecError("expected a file path or an inline object", source, _locate(text, ["scenario"]), "scenario")
    candidates = [base / ref, SPEC_DIR / ref]
    path = next((p for p in candidates if p.is_file()), None)
    if path is None:
        raise SpecError(f"scenario file {ref!r} not found", source, _locate(text, ["scenario"]), "scenario")
    sub_text = path.read_text()
    try:
        data = json.loads(sub_text)
    except json.JSONDecodeError as exc:
        raise SpecError(exc.msg, str(path), exc.lineno) from None
    try:
        return scenario_from_dict(data), str(path), sub_text
    except KeyError as exc:
        raise SpecError(f"missing required key {exc.args[0]!r}", str(path), 1) from None
    except (ValueError, TypeError) as exc:
        raise SpecError(str(exc), str(path), _scenario_line(exc, sub_text)) from None


def _scenario_line(exc, text):
    msg = str(exc)
    for key in ("per_antenna", "profile", "power_control", "NT", "NR", "Ls", "N"):
        if key in msg or key.lower() in msg.lower():
            return _locate(text, [key])
    return None


def parse_spec(data, source="<spec>", text=None, base=None):
    """Validate a decoded spec mapping and return an :class:`ExperimentSpec`.

    ``text`` is the raw JSON, used to attach line numbers to errors.
    """
    base = Path(base) if base is not None else SPEC_DIR

    def fail(msg, *path):
        raise SpecError(msg, source, _locate(text, path) or (1 if text else None), ".".join(map(str, path)))

    if not isinstance(data, dict):
        raise SpecError("top level must be a JSON object", source, 1 if text else None)
    unknown = sorted(set(data) - _TOP_KEYS)
    if unknown:
        fail(f"unknown key {unknown[0]!r}", unknown[0])
    name = data.get("name")
    if not isinstance(name, str) or not re.fullmatch(r"[A-Za-z0-9_.-]+", name or ""):
        fail("name must be a non-empty string of letters, digits, '.', '_' or '-'", "name")
    if "scenario" not in data:
        fail("missing required key 'scenario'")
    try:
        scenario, _, _ = _load_scenario_ref(data["scenario"], base, source, text)
    except SpecError:
        raise
    except KeyError as exc:
        fail(f"scenario is missing required key {exc.args[0]!r}", "scenario")
    except (ValueError, TypeError) as exc:
        fail(f"invalid scenario: {exc}", "scenario")

    schemes = data.get("schemes")
    if schemes is not None:
        if not isinstance(schemes, list) or not schemes:
            fail("schemes must be a non-empty list of QAM orders", "schemes")
        try:
            schemes = tuple(QamScheme.from_order(int(q)) for q in schemes)
        except (ValueError, TypeError) as exc:
            fail(str(exc), "schemes")

    detectors = data.get("detectors")
    if not isinstance(detectors, list) or not detectors:
        fail("detectors must be a non-empty list", "detectors")
    parsed = []
    for i, d in enumerate(detectors):
        try:
            parsed.append(_parse_detector(d))
        except (ValueError, TypeError) as exc:
            fail(f"detector {i}: {exc}", "detectors")
    labels = [s.label for s in parsed]
    if len(set(labels)) != len(labels):
        fail("duplicate detector entries", "detectors")

    method = data.get("method", "semi-analytical")
    if method not in METHODS:
        fail(f"method must be one of {METHODS}, got {method!r}", "method")

    sweep = data.get("sweep")
    if not isinstance(sweep, dict):
        fail("sweep must be an object with 'axis' and 'values'", "sweep")
    axis = sweep.get("axis")
    if axis not in AXES:
        fail(f"sweep axis must be one of {AXES}, got {axis!r}", "sweep", "axis")
    if "values" not in sweep:
        fail("sweep needs 'values'", "sweep")
    try:
        values = _expand_values(sweep["values"])
    except (KeyError, TypeError, ValueError) as exc:
        fail(f"invalid sweep values ({exc})", "sweep", "values")
    if not values:
        fail("sweep values must not be empty", "sweep", "values")
    if any(math.isnan(v) for v in values):
        fail("sweep values must be numbers", "sweep", "values")
    if axis == "n_r":
        if any(math.isinf(v) or v != int(v) for v in values):
            fail("n_r values must be integers", "sweep", "values")
        values = [int(v) for v in values]
        if min(values) < scenario.n_tx:
            fail(f"n_r values must be at least N_T={scenario.n_tx}", "sweep", "values")
    if len(set(values)) != len(values):
        fail("sweep values must be distinct", "sweep", "values")

    try:
        ebn0 = _float(data.get("ebn0_db", "inf"))
    except TypeError:
        fail("ebn0_db must be a number or \"inf\"", "ebn0_db")
    if method == "iber":
        if axis != "n_r":
            fail("method 'iber' needs sweep axis 'n_r'", "sweep", "axis")
        if not math.isinf(ebn0):
            fail("method 'iber' is the noiseless limit; drop ebn0_db or set it to \"inf\"", "ebn0_db")
    elif axis == "n_r" and "ebn0_db" not in data:
        fail("an n_r sweep needs an ebn0_db operating point", "ebn0_db")

    if method in ("semi-analytical", "iber"):
        df = [s.label for s in parsed if s.iterations > 1]
        if df:
            fail(f"{df[0]} needs Monte Carlo; use method 'monte-carlo' or 'both'", "detectors")

    bounds = data.get("bounds", False)
    if not isinstance(bounds, bool):
        fail("bounds must be true or false", "bounds")

    n_real = data.get("n_realizations", 200)
    if isinstance(n_real, bool) or not isinstance(n_real, int) or n_real < 1:
        fail("n_realizations must be a positive integer", "n_realizations")

    seed = data.get("seed", scenario.seed)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        fail("seed must be a non-negative integer", "seed")

    mc_raw = data.get("mc", {})
    if not isinstance(mc_raw, dict):
        fail("mc must be an object", "mc")
    allowed = {f.name for f in fields(McConfig)} - {"seed"}
    bad = sorted(set(mc_raw) - allowed)
    if bad:
        fail(f"unknown mc option {bad[0]!r}", "mc", bad[0])
    try:
        mc = McConfig(seed=seed, **{k: int(v) for k, v in mc_raw.items()})
    except (ValueError, TypeError) as exc:
        fail(str(exc), "mc")

    mode = data.get("mode", "exact")
    if mode not in ("exact", "approx"):
        fail("mode must be 'exact' or 'approx'", "mode")
    output = data.get("output")
    if output is not None and not isinstance(output, str):
        fail("output must be a path string", "output")
    description = data.get("description", "")
    if not isinstance(description, str):
        fail("description must be a string", "description")

    return ExperimentSpec(
        name=name,
        scenario=scenario,
        detectors=tuple(parsed),
        axis=axis,
        values=tuple(values),
        method=method,
        ebn0_db=ebn0,
        schemes=schemes,
        bounds=bounds,
        n_realizations=n_real,
        mc=mc,
        seed=seed,
        output=output,
        mode=mode,
        description=description,
    )


def load_spec(path):
    """Read and validate a spec file; relative scenario paths resolve next to it."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise SpecError(f"cannot read spec: {exc.strerror or exc}", str(path)) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"invalid JSON: {exc.msg} (column {exc.colno})", str(path), exc.lineno) from None
    return parse_spec(data, str(path), text, path.parent)


def bundled_spec_path(name):
    path = SPEC_DIR / f"{name}.json"
    if not path.is_file():
        raise FileNotFoundError(name)
    return path


def bundled_specs():
    """``(name, description)`` of every bundled experiment spec."""
    out = []
    for path in sorted(SPEC_DIR.glob("*.json")):
        data = json.loads(path.read_text())
        if "detectors" in data:
            out.append((path.stem, data.get("description", "")))
    return out


# running


def _variants(spec):
    """``(tag, scenario)`` pairs: one per requested constellation."""
    sc = spec.scenario
    if spec.schemes is None:
        orders = {a.scheme.order for a in sc.antennas}
        tag = f"{orders.pop()}qam" if len(orders) == 1 else "mixed"
        return [(tag, sc)]
    out = []
    for s in spec.schemes:
        ants = tuple(AntennaConfig(s, s.power) for _ in range(sc.n_tx))
        out.append((f"{s.order}qam", replace(sc, antennas=ants)))
    return out


def _stack(curves, x, x_name, label, method, seed):
    """Concatenate single-point curves into one curve over ``x``."""
    def cat(name):
        parts = [getattr(c, name) for c in curves]
        return None if parts[0] is None else np.concatenate(parts)

    return BerCurve(
        method=method,
        x=np.asarray(x, dtype=float),
        ber=np.concatenate([c.ber for c in curves]),
        aggregate=cat("aggregate"),
        stderr=cat("stderr"),
        n_realizations=cat("n_realizations"),
        seed=seed,
        label=label,
        x_name=x_name,
        n_bits=cat("n_bits"),
        n_errors=cat("n_errors"),
        low_confidence=cat("low_confidence"),
        meta=dict(curves[0].meta),
    )


def _points(spec, sc):
    """``(scenario, ebn0_grid)`` per sweep point, and whether to collapse."""
    if spec.axis == "ebn0_db":
        return [(sc, np.asarray(spec.values, dtype=float))]
    return [(sc.with_rx(nr), np.array([spec.ebn0_db])) for nr in spec.values]


def _sa_curves(spec, variants, workers):
    kinds = [s.first for s in spec.detectors if s.iterations == 1]
    if not kinds:
        return []
    out = []
    noiseless = spec.axis == "n_r" and math.isinf(spec.ebn0_db)
    if noiseless and spec.schemes is not None:
        # noiseless SINR depends only on power ratios, which every variant
        # shares: draw the ensemble once per N_R and evaluate each constellation
        per_variant = {tag: {k: [] for k in kinds} for tag, _ in variants}
        for nr in spec.values:
            sc = variants[0][1].with_rx(nr)
            samples = ensemble_sinr(sc, kinds, [math.inf], spec.n_realizations, spec.seed, workers)
            for tag, vsc in variants:
                curves = curves_from_sinr(samples, np.array([math.inf]), kinds, vsc.with_rx(nr), spec.seed,
                                          spec.method, spec.mode)
                for k, c in zip(kinds, curves):
                    per_variant[tag][k].append(c)
        for tag, _ in variants:
            for k in kinds:
                out.append((tag, _stack(per_variant[tag][k], spec.values, "n_r", k.value, spec.method, spec.seed)))
        return out
    for tag, sc in variants:
        results = {k: [] for k in kinds}
        for psc, grid in _points(spec, sc):
            curves = semi_analytical_ber(psc, kinds, grid, spec.n_realizations, spec.seed, spec.mode, workers)
            curves = curves if isinstance(curves, list) else [curves]
            for k, c in zip(kinds, curves):
                results[k].append(c)
        method = "iber" if spec.method == "iber" else "semi-analytical"
        for k in kinds:
            out.append((tag, _stack(results[k], spec.values, spec.axis, k.value, method, spec.seed)))
    return out


def _mc_curves(spec, variants, workers):
    out = []
    for tag, sc in variants:
        for sched in spec.detectors:
            per_iter = [[] for _ in range(sched.iterations)]
            for psc, grid in _points(spec, sc):
                for p, c in enumerate(run_mc(psc, sched, grid, spec.mc, workers)):
                    per_iter[p].append(c)
            for parts in per_iter:
                out.append((tag, _stack(parts, spec.values, spec.axis, parts[0].label, "monte-carlo", spec.seed)))
    return out


def _awgn_curve(sc, x_values, axis, ebn0, mode):
    rows = []
    for psc, grid in _points_like(sc, x_values, axis, ebn0):
        for x in grid:
            per_input = derive_noise(psc, x).ebn0_db
            rows.append([float(simo_awgn_mfb(s, psc.n_rx, psc.eta, e, mode)) for s, e in zip(psc.schemes, per_input)])
    ber = np.array(rows)
    n = len(rows)
    return BerCurve("bound", np.asarray(x_values, dtype=float), ber, aggregate_ber(ber, sc.schemes),
                    np.zeros(n), np.zeros(n, dtype=int), 0, "SIMO_AWGN_MFB", axis)


def _points_like(sc, values, axis, ebn0):
    if axis == "ebn0_db":
        return [(sc, np.asarray(values, dtype=float))]
    return [(sc.with_rx(nr), np.array([ebn0])) for nr in values]


def _bound_curves(spec, variants, workers):
    if spec.axis == "n_r" and math.isinf(spec.ebn0_db):
        return []  # both bounds vanish without noise
    out = []
    for tag, sc in variants:
        out.append((tag, _awgn_curve(sc, spec.values, spec.axis, spec.ebn0_db, spec.mode)))
        parts = [simo_mfb_curve(psc, grid, spec.n_realizations, spec.seed, spec.mode, workers)
                 for psc, grid in _points(spec, sc)]
        out.append((tag, _stack(parts, spec.values, spec.axis, "SIMO_MFB", "bound", spec.seed)))
    return out


_METHOD_PREFIX = {"semi-analytical": "sa", "iber": "iber", "monte-carlo": "mc", "bound": "bound"}


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "inf" if math.isinf(v) else repr(v)


def _csv_text(curve, tag, spec, config_hash):
    """Header metadata (``# key: value``) followed by the data table."""
    n_tx = curve.ber.shape[1]
    meta = {
        "experiment": spec.name,
        "method": curve.method,
        "detector": curve.label,
        "scheme": tag,
        "seed": curve.seed if curve.method != "bound" or curve.label == "SIMO_MFB" else "n/a",
        "config_hash": config_hash,
        "x": curve.x_name,
    }
    if curve.x_name == "n_r":
        meta["ebn0_db"] = _fmt(spec.ebn0_db)
    if curve.method == "monte-carlo":
        meta.update(min_errors=spec.mc.min_errors, max_blocks=spec.mc.max_blocks,
                    min_blocks=spec.mc.min_blocks, batch_blocks=spec.mc.batch_blocks)
    elif curve.label != "SIMO_AWGN_MFB":
        meta["n_realizations"] = spec.n_realizations
    buf = io.StringIO()
    for k, v in meta.items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    cols = [curve.x_name] + [f"ber_{j + 1}" for j in range(n_tx)] + ["aggregate_ber", "stderr"]
    if curve.method == "monte-carlo":
        cols += ["n_realizations", "n_bits", "n_errors", "low_confidence"]
    elif curve.label != "SIMO_AWGN_MFB":
        cols += ["n_realizations"]
    w.writerow(cols)
    for i in range(len(curve.x)):
        x = int(curve.x[i]) if curve.x_name == "n_r" else curve.x[i]
        row = [_fmt(x)] + [_fmt(b) for b in curve.ber[i]] + [_fmt(curve.aggregate[i]), _fmt(curve.stderr[i])]
        if curve.method == "monte-carlo":
            row += [_fmt(curve.n_realizations[i]), _fmt(curve.n_bits[i]), _fmt(curve.n_errors[i]),
                    _fmt(curve.low_confidence[i])]
        elif curve.label != "SIMO_AWGN_MFB":
            row += [_fmt(curve.n_realizations[i])]
        w.writerow(row)
    return buf.getvalue()


def resolve_output(spec, out_dir=None):
    if out_dir is not None:
        return Path(out_dir) / spec.name
    if spec.output:
        return Path(spec.output)
    return Path("results") / spec.name


def run_experiment(spec, seed=None, workers=1, out_dir=None):
    """Run every method/detector/constellation of ``spec`` and write the results.

    Parameters
    ----------
    spec : ExperimentSpec or path
    seed : int, optional
        Overrides the spec's seed.
    workers : int
        Process count; results are identical for any value.
    out_dir : path, optional
        Parent directory; files go to ``out_dir/<name>``. Defaults to the
        spec's ``output`` or ``results/<name>``.

    Returns
    -------
    dict
        The manifest, also written to ``manifest.json``.
    """
    if not isinstance(spec, ExperimentSpec):
        spec = load_spec(spec)
    if seed is not None:
        spec = spec.with_seed(seed)
    target = resolve_output(spec, out_dir)
    target.mkdir(parents=True, exist_ok=True)
    config_hash = spec.config_hash()
    variants = _variants(spec)
    t0 = time.time()

    curves = []
    if spec.method in ("semi-analytical", "both", "iber"):
        curves += _sa_curves(spec, variants, workers)
    if spec.method in ("monte-carlo", "both"):
        curves += _mc_curves(spec, variants, workers)
    if spec.bounds:
        curves += _bound_curves(spec, variants, workers)

    files = []
    for tag, curve in curves:
        fname = f"{_METHOD_PREFIX[curve.method]}_{curve.label}_{tag}.csv"
        text = _csv_text(curve, tag, spec, config_hash)
        (target / fname).write_text(text)
        files.append({
            "file": fname,
            "method": curve.method,
            "detector": curve.label,
            "scheme": tag,
            "sha256": hashlib.sha256(text.encode()).hexdigest(),
        })
        log.info("wrote %s", target / fname)

    manifest = {
        "experiment": spec.name,
        "config_hash": config_hash,
        "seed": spec.seed,
        "spec": spec.to_dict(),
        "files": files,
        "provenance": {
            "package": "scfde-mimo",
            "version": __version__,
            "backend": BACKEND,
            "numpy": np.__version__,
            "python": platform.python_version(),
            "workers": workers,
            "created_utc": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
            "elapsed_s": round(time.time() - t0, 3),
        },
    }
    (target / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest
