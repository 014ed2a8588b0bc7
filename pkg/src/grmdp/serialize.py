"""File formats: dataset CSV, environment JSON, policy artifact JSON, config JSON.

Floats are written with ``repr`` (shortest round-tripping form), so every
writer/loader pair reproduces arrays bit-exactly.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .baselines import EnsembleArtifact, PeviArtifact
from .estimator import PolicyArtifact
from .model import (BetaMeasures, ConfigError, DataError, DiscreteMeasures, EnvSpec, OfflineDataset,
                    RewardNoise, SiteData, feature_map_from_dict)

FORMAT_VERSION = 1


def _plain(obj):
    """Recursively convert numpy values to JSON-native types."""
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def dumps(obj) -> str:
    return json.dumps(_plain(obj), indent=1, sort_keys=True)


def fingerprint(obj) -> str:
    """Short stable hash of a JSON-able object."""
    text = json.dumps(_plain(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def read_json(path) -> dict:
    text = Path(path).read_text(encoding="utf-8")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# datasets


def dataset_header(state_width: int | None) -> list[str]:
    head = ["site", "traj", "h", "a", "r"]
    if state_width is None:
        return head + ["s_code", "s_next_code"]
    return head + [f"s{j}" for j in range(state_width)] + [f"s_next{j}" for j in range(state_width)]


def _state_width(dataset: OfflineDataset) -> int | None:
    for sd in dataset.sites:
        return None if sd.s.ndim == 1 else sd.s.shape[1]
    raise DataError("dataset has no sites")


def write_dataset(dataset: OfflineDataset, path) -> Path:
    width = _state_width(dataset)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(dataset_header(width))
        for k, sd in enumerate(dataset.sites):
            for n in range(len(sd)):
                if width is None:
                    states = [str(int(sd.s[n])), str(int(sd.s_next[n]))]
                else:
                    states = [repr(float(v)) for v in sd.s[n]] + [repr(float(v)) for v in sd.s_next[n]]
                out.writerow([k, int(sd.traj[n]), int(sd.h[n]), int(sd.a[n]), repr(float(sd.r[n]))] + states)
    return path


def read_dataset(path, H: int | None = None, K: int | None = None) -> OfflineDataset:
    """Load a dataset file; ``K`` keeps trailing empty sites, ``H`` defaults to the largest step."""
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file, header line required") from None
        finite = header[5:] == ["s_code", "s_next_code"]
        width = None if finite else (len(header) - 5) // 2
        if header[:5] != ["site", "traj", "h", "a", "r"] or header != dataset_header(width):
            raise DataError(f"{path}: unexpected header {header}")
        cols: dict[int, list] = {}
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                site, traj, h, a = (int(v) for v in row[:4])
                r = float(row[4])
                if finite:
                    s, s_next = int(row[5]), int(row[6])
                else:
                    vals = [float(v) for v in row[5:]]
                    s, s_next = vals[:width], vals[width:]
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from exc
            if site < 0:
                raise DataError(f"{path}:{lineno}: negative site index")
            cols.setdefault(site, []).append((traj, h, a, r, s, s_next))
    n_sites = max([K or 0] + [k + 1 for k in cols])
    sites = []
    for k in range(n_sites):
        rows = cols.get(k)
        if not rows:
            sites.append(SiteData.empty(width))
            continue
        traj, h, a, r, s, s_next = zip(*rows)
        dtype = int if finite else float
        sites.append(SiteData(np.array(traj, int), np.array(h, int), np.array(a, int), np.array(r, float),
                              np.array(s, dtype), np.array(s_next, dtype)))
    if H is None:
        H = max([1] + [int(sd.h.max()) for sd in sites if len(sd)])
    return OfflineDataset(sites, H)


# ---------------------------------------------------------------------------
# environments


def env_to_dict(env: EnvSpec) -> dict:
    m = env.measures
    if isinstance(m, DiscreteMeasures):
        measures = {"kind": m.kind, "probs": m.probs}
    else:
        measures = {"kind": m.kind, "alpha": m.alpha, "beta": m.beta, "floor": m.floor}
    return _plain({
        "format": FORMAT_VERSION,
        "feature_map": env.feature_map.to_dict(),
        "theta": env.theta,
        "measures": measures,
        "reward_noise": {"kind": env.reward_noise.kind, "scale": env.reward_noise.scale},
        "n_states": env.n_states,
        "initial_state": env.initial_state,
        "seed": env.seed,
        "meta": env.meta,
    })


def env_from_dict(d: dict) -> EnvSpec:
    try:
        fm = feature_map_from_dict(d["feature_map"])
        m = d["measures"]
        if m["kind"] == "discrete":
            measures = DiscreteMeasures(np.array(m["probs"], dtype=float))
        elif m["kind"] == "beta_product":
            measures = BetaMeasures(np.array(m["alpha"], dtype=float), np.array(m["beta"], dtype=float),
                                    float(m["floor"]))
        else:
            raise ConfigError(f"unknown measure kind {m['kind']!r}")
        noise = RewardNoise(d["reward_noise"]["kind"], float(d["reward_noise"]["scale"]))
        return EnvSpec(fm, np.array(d["theta"], dtype=float), measures, noise, d.get("n_states"),
                       d.get("initial_state"), d.get("seed"), dict(d.get("meta") or {}))
    except KeyError as exc:
        raise DataError(f"environment document missing key {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, (ConfigError, DataError)):
            raise
        raise DataError(f"invalid environment document: {exc}") from exc


def write_env(env: EnvSpec, path) -> Path:
    return write_text(path, dumps(env_to_dict(env)))


def read_env(path) -> EnvSpec:
    return env_from_dict(read_json(path))


# ---------------------------------------------------------------------------
# policy artifacts


def artifact_to_dict(art) -> dict:
    if isinstance(art, PolicyArtifact):
        body = {"w": art.w, "m": art.m, "beta": art.beta, "lambda": art.lam, "fingerprint": art.fingerprint}
    elif isinstance(art, PeviArtifact):
        body = {"w": art.w, "Lambda_inv": art.Lambda_inv, "beta": art.beta, "lambda": art.lam}
    elif isinstance(art, EnsembleArtifact):
        return _plain({"format": FORMAT_VERSION, "method": art.method, "rule": art.rule,
                       "members": [artifact_to_dict(m) for m in art.members]})
    else:
        raise TypeError(f"cannot serialize {type(art).__name__}")
    body.update(format=FORMAT_VERSION, method=art.method, feature_map=art.feature_map.to_dict())
    return _plain(body)


def artifact_from_dict(d: dict):
    try:
        if "members" in d:
            return EnsembleArtifact(tuple(artifact_from_dict(m) for m in d["members"]), d["rule"])
        fm = feature_map_from_dict(d["feature_map"])
        w = np.array(d["w"], dtype=float)
        if "m" in d:
            return PolicyArtifact(fm, w, np.array(d["m"], dtype=float), float(d["beta"]), float(d["lambda"]),
                                  d["method"], d.get("fingerprint", ""))
        return PeviArtifact(fm, w, np.array(d["Lambda_inv"], dtype=float), float(d["beta"]),
                            float(d["lambda"]), d["method"])
    except KeyError as exc:
        raise DataError(f"artifact document missing key {exc}") from exc


def write_artifact(art, path) -> Path:
    return write_text(path, dumps(artifact_to_dict(art)))


def read_artifact(path):
    return artifact_from_dict(read_json(path))
