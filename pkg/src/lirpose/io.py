"""Text formats used by the command line tools.

Match files start with a header line and hold one correspondence per line::

    #matches version=1 convention=PIXEL
    412.5 300.25 398.0 310.75
    ...

``convention`` is ``PIXEL`` (needs intrinsics) or ``NORMALIZED`` (image
coordinates already multiplied by ``K^-1``).  Further ``#`` lines and blank
lines are ignored.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import ConfigError, MissingIntrinsics, ParseError, TooFewMatches
from .geometry import PairSet, RelativePose
from .robust import GncConfig, RansacConfig
from .simlab import Estimator, Experiment, SceneConfig, SceneKind

MATCH_FORMAT_VERSION = 1
CONVENTIONS = ("PIXEL", "NORMALIZED")
MIN_MATCHES = 6
CONFIG_SCHEMA_VERSION = 1


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _floats(tokens, lineno):
    try:
        vals = [float(s) for s in tokens]
    except ValueError:
        raise ParseError(f"not a number in {' '.join(tokens)!r}", lineno) from None
    if not all(math.isfinite(v) for v in vals):
        raise ParseError("non-finite value", lineno)
    return vals


def parse_match_header(line: str, lineno: int = 1) -> dict:
    tokens = line.split()
    if not tokens or tokens[0] != "#matches":
        raise ParseError("expected header '#matches version=1 convention=PIXEL|NORMALIZED'", lineno)
    fields = {}
    for tok in tokens[1:]:
        key, sep, value = tok.partition("=")
        if not sep:
            raise ParseError(f"malformed header field {tok!r}", lineno)
        fields[key] = value
    if fields.get("version") != str(MATCH_FORMAT_VERSION):
        raise ParseError(f"unsupported match format version {fields.get('version')!r}", lineno)
    conv = fields.get("convention", "").upper()
    if conv not in CONVENTIONS:
        raise ParseError(f"convention must be PIXEL or NORMALIZED, got {fields.get('convention')!r}", lineno)
    return {"version": MATCH_FORMAT_VERSION, "convention": conv}


def read_match_records(path) -> tuple[str, np.ndarray]:
    """Header convention and the raw ``(n, 4)`` coordinates of a match file."""
    header, rows = None, []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if header is None:
                if not line:
                    continue
                header = parse_match_header(line, lineno)
                continue
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            if len(tokens) != 4:
                raise ParseError(f"expected 4 values (x y x' y'), got {len(tokens)}", lineno)
            rows.append(_floats(tokens, lineno))
    if header is None:
        raise ParseError("empty file, header missing", 1)
    return header["convention"], np.array(rows, dtype=float).reshape(-1, 4)


def pixels_to_bearings(uv, K) -> np.ndarray:
    uv = np.asarray(uv, dtype=float)
    h = np.column_stack([uv, np.ones(len(uv))])
    m = np.linalg.solve(np.asarray(K, dtype=float), h.T).T
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def load_matches(path, intrinsics=None, min_matches: int = MIN_MATCHES) -> PairSet:
    """Read a match file into unit bearing pairs.

    ``intrinsics`` is a 3x3 matrix (or a path to one) and is required for
    PIXEL files.
    """
    conv, rec = read_match_records(path)
    if len(rec) < max(min_matches, MIN_MATCHES):
        raise TooFewMatches(f"{len(rec)} matches, need at least {max(min_matches, MIN_MATCHES)}")
    if conv == "PIXEL":
        if intrinsics is None:
            raise MissingIntrinsics("PIXEL match files need intrinsics")
        K = load_intrinsics(intrinsics) if isinstance(intrinsics, (str, Path)) else np.asarray(intrinsics, float)
        return PairSet(pixels_to_bearings(rec[:, :2], K), pixels_to_bearings(rec[:, 2:], K))
    one = np.ones((len(rec), 1))
    return PairSet(np.hstack([rec[:, :2], one]), np.hstack([rec[:, 2:], one]))


def write_matches(path, pairs: PairSet, convention: str = "NORMALIZED", K=None) -> None:
    """Inverse of ``load_matches``; bearings must point in front of the cameras."""
    convention = convention.upper()
    if convention not in CONVENTIONS:
        raise ValueError(f"unknown convention {convention!r}")
    cols = []
    for b in (pairs.x, pairs.x_prime):
        if np.any(b[:, 2] <= 0):
            raise ValueError("bearings with z <= 0 have no image coordinates")
        m = b / b[:, 2:3]
        if convention == "PIXEL":
            if K is None:
                raise MissingIntrinsics("PIXEL output needs intrinsics")
            m = m @ np.asarray(K, dtype=float).T
        cols.append(m[:, :2])
    rec = np.hstack(cols)
    lines = [f"#matches version={MATCH_FORMAT_VERSION} convention={convention}"]
    lines += [" ".join(repr(float(v)) for v in row) for row in rec]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_values(path, count: int, what: str) -> np.ndarray:
    vals = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                vals += _floats(line.split(), lineno)
    if len(vals) != count:
        raise ParseError(f"{what} needs {count} values, found {len(vals)}")
    return np.array(vals)


def load_intrinsics(path) -> np.ndarray:
    """Nine whitespace-separated values, row-major 3x3 ``K``."""
    K = _read_values(path, 9, "intrinsics").reshape(3, 3)
    if abs(np.linalg.det(K)) < 1e-12:
        raise ParseError("intrinsics matrix is singular")
    return K


def write_intrinsics(path, K) -> None:
    K = np.asarray(K, dtype=float)
    Path(path).write_text("\n".join(" ".join(repr(float(v)) for v in row) for row in K) + "\n")


def load_pose(path) -> RelativePose:
    """Row-major ``R`` (nine values) followed by ``t`` (three values)."""
    v = _read_values(path, 12, "pose")
    return RelativePose(v[:9].reshape(3, 3), v[9:])


def write_pose(path, pose: RelativePose) -> None:
    vals = list(pose.R.ravel()) + list(pose.t)
    Path(path).write_text(" ".join(repr(float(v)) for v in vals) + "\n")


# -- experiment configuration ----------------------------------------------------

# key -> (kind, default); kinds: grid lists, scalars and enums
CONFIG_KEYS = {
    "schema_version": ("int", CONFIG_SCHEMA_VERSION),
    "scene_kind": ("grid_str", ["normal"]),
    "n_points": ("grid_int", [30]),
    "noise_px": ("grid_float", [0.0]),
    "outlier_fraction": ("grid_float", [0.0]),
    "estimator": ("str", "lirp"),
    "n_trials": ("int", 1),
    "seed": ("int", 0),
    "identification": ("str", "ppo"),
    "depth_range": ("pair", [4.0, 18.0]),
    "max_translation": ("float", 2.0),
    "rotation_perturbation_deg": ("float", 0.5),
    "focal_px": ("float", 800.0),
    "gnc_stop_epsilon": ("float", GncConfig.stop_epsilon),
    "gnc_max_iterations": ("int", GncConfig.max_iterations),
    "gnc_mu_schedule": ("str", GncConfig.mu_schedule),
    "gnc_mu_factor": ("float", GncConfig.mu_factor),
    "gnc_mu0": ("float", GncConfig.mu0),
    "gnc_mu_power": ("float", GncConfig.mu_power),
    "gnc_sigma_mode": ("str", GncConfig.sigma_mode),
    "ransac_sample_size": ("int", RansacConfig.sample_size),
    "ransac_max_iterations": ("int", RansacConfig.max_iterations),
    "ransac_theta": ("float", RansacConfig.inlier_threshold),
}


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _check(key, kind, value):
    if kind == "int":
        if not (isinstance(value, int) and not isinstance(value, bool)):
            raise ConfigError(key, f"expected an integer, got {value!r}")
        return value
    if kind == "float":
        if not _is_number(value):
            raise ConfigError(key, f"expected a number, got {value!r}")
        return float(value)
    if kind == "str":
        if not isinstance(value, str):
            raise ConfigError(key, f"expected a string, got {value!r}")
        return value
    if kind == "pair":
        if not (isinstance(value, list) and len(value) == 2 and all(_is_number(v) for v in value)):
            raise ConfigError(key, f"expected [min, max], got {value!r}")
        return [float(v) for v in value]
    if not isinstance(value, list):
        raise ConfigError(key, f"expected a list, got {value!r}")
    inner = kind.split("_", 1)[1]
    return [_check(f"{key}[{i}]", inner, v) for i, v in enumerate(value)]


def parse_experiment_config(doc) -> dict:
    """Validate a flat config document and fill defaults."""
    if not isinstance(doc, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    unknown = sorted(set(doc) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(unknown[0], "unknown key")
    if "schema_version" not in doc:
        raise ConfigError("schema_version", "missing")
    cfg = {}
    for key, (kind, default) in CONFIG_KEYS.items():
        cfg[key] = _check(key, kind, doc[key]) if key in doc else default
    if cfg["schema_version"] != CONFIG_SCHEMA_VERSION:
        raise ConfigError("schema_version", f"unsupported version {cfg['schema_version']}")
    for i, k in enumerate(cfg["scene_kind"]):
        if k not in [s.value for s in SceneKind]:
            raise ConfigError("scene_kind", f"unknown scene kind {k!r} at index {i}")
    if cfg["estimator"] not in [e.value for e in Estimator]:
        raise ConfigError("estimator", f"unknown estimator {cfg['estimator']!r}")
    for i, f in enumerate(cfg["outlier_fraction"]):
        if not 0.0 <= f < 1.0:
            raise ConfigError("outlier_fraction", f"value {f} at index {i} outside [0, 1)")
    for i, s in enumerate(cfg["noise_px"]):
        if s < 0:
            raise ConfigError("noise_px", f"negative value at index {i}")
    for i, n in enumerate(cfg["n_points"]):
        if n < 6:
            raise ConfigError("n_points", f"value {n} at index {i} is below 6")
    return cfg


def _build(field, factory, **kwargs):
    try:
        return factory(**kwargs)
    except ValueError as exc:
        raise ConfigError(field, str(exc)) from None


def experiment_from_config(cfg: dict) -> Experiment:
    scene = _build(
        "depth_range",
        SceneConfig,
        depth_range=tuple(cfg["depth_range"]),
        max_translation=cfg["max_translation"],
        rotation_perturbation_deg=cfg["rotation_perturbation_deg"],
        focal_px=cfg["focal_px"],
        seed=cfg["seed"],
    )
    gnc = _build(
        "gnc_mu_schedule",
        GncConfig,
        stop_epsilon=cfg["gnc_stop_epsilon"],
        max_iterations=cfg["gnc_max_iterations"],
        mu_schedule=cfg["gnc_mu_schedule"],
        mu_factor=cfg["gnc_mu_factor"],
        mu0=cfg["gnc_mu0"],
        mu_power=cfg["gnc_mu_power"],
        sigma_mode=cfg["gnc_sigma_mode"],
    )
    ransac = _build(
        "ransac_sample_size",
        RansacConfig,
        sample_size=cfg["ransac_sample_size"],
        max_iterations=cfg["ransac_max_iterations"],
        inlier_threshold=cfg["ransac_theta"],
        stop_epsilon=cfg["gnc_stop_epsilon"],
        seed=cfg["seed"],
    )
    if cfg["n_trials"] < 1:
        raise ConfigError("n_trials", "must be at least 1")
    if cfg["identification"] not in ("ppo", "truth"):
        raise ConfigError("identification", f"unknown value {cfg['identification']!r}")
    cells = Experiment.grid(cfg["scene_kind"], cfg["n_points"], cfg["noise_px"], cfg["outlier_fraction"])
    return Experiment(
        scene=scene,
        cells=cells,
        estimator=Estimator(cfg["estimator"]),
        n_trials=cfg["n_trials"],
        gnc=gnc,
        ransac=ransac,
        seed=cfg["seed"],
        identification=cfg["identification"],
    )


def load_experiment(path) -> Experiment:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", exc.lineno) from None
    return experiment_from_config(parse_experiment_config(doc))


def config_dict(obj) -> Optional[dict]:
    """JSON-friendly view of a (nested) config dataclass."""
    if obj is None:
        return None
    out = {}
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if hasattr(v, "value"):
            v = v.value
        elif isinstance(v, tuple):
            v = list(v)
        out[f.name] = v
    return out
