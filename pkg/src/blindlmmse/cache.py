"""On-disk cache of theoretical moments, keyed by a hash of everything they depend on."""

import hashlib
import json
from pathlib import Path

from .datagen import FORMAT_VERSION, _read_blob, _write_blob, read_manifest
from .errors import DatasetIOError, MalformedDatasetError
from .lmmse import MomentSet, gamma_quadrature, theoretical_moments

_NAMES = ("mean_x", "mean_h", "mean_y", "C_xy", "C_hy", "C_yy")


def moment_key(signal, kernel, noise, M, ridge=None):
    dictionary = signal.dictionary
    payload = {
        "n": dictionary.n, "K": dictionary.K, "d": kernel.d, "M": int(M),
        "b": signal.b, "a": kernel.a, "beta": kernel.beta, "c_eps": noise.c_eps,
        "ridge": ridge, "atoms": dictionary.atom_indices.tolist(),
        "mu": dictionary.mu_alpha.tolist(),
    }
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def save_moments(m, path, key=""):
    path = Path(path)
    n, d = m.n, m.d
    manifest = {"version": FORMAT_VERSION, "kind": m.kind, "n": n, "d": d,
                "n_samples": m.n_samples, "var_alpha": m.var_alpha, "key": key}
    try:
        path.mkdir(parents=True, exist_ok=True)
        for name in _NAMES:
            _write_blob(path / f"{name}.f64", getattr(m, name))
        (path / "manifest.json").write_text(json.dumps(manifest, indent=1))
    except OSError as exc:
        raise DatasetIOError(f"cannot write moments to {path}: {exc}") from exc


def load_moments(path, dictionary=None):
    path = Path(path)
    man = read_manifest(path)
    try:
        n, d = int(man["n"]), int(man["d"])
        kind = man["kind"]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedDatasetError(f"{path}/manifest.json: bad field ({exc})") from exc
    N, D = n * n, d * d
    shapes = {"mean_x": (N,), "mean_h": (D,), "mean_y": (N,), "C_xy": (N, N),
              "C_hy": (D, N), "C_yy": (N, N)}
    arrays = {name: _read_blob(path / f"{name}.f64", shapes[name]) for name in _NAMES}
    return MomentSet(**arrays, kind=kind, n_samples=int(man.get("n_samples", 0)),
                     dictionary=dictionary if kind == "theoretical" else None,
                     var_alpha=float(man.get("var_alpha", 0.0)))


def cached_theoretical_moments(signal, kernel, noise, M, cache_dir=None):
    """Theoretical moments, read from ``cache_dir/<key>`` when present."""
    if cache_dir is None:
        return theoretical_moments(signal, kernel, noise, gamma_quadrature(kernel.a, kernel.beta, M))
    key = moment_key(signal, kernel, noise, M)
    target = Path(cache_dir) / key
    if (target / "manifest.json").exists():
        return load_moments(target, signal.dictionary)
    m = theoretical_moments(signal, kernel, noise, gamma_quadrature(kernel.a, kernel.beta, M))
    save_moments(m, target, key)
    return m

