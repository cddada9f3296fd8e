"""Problem instances, seeded datasets and their on-disk layout.

A dataset directory holds ``manifest.json`` plus one little-endian float64
blob per array, ``inst<i>_<name>.f64``.
"""

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import rng as streams
from .conv import Dictionary, blur, synthesize
from .errors import (DatasetIOError, DatasetVersionError, InvalidArgumentError,
                     MalformedDatasetError)
from .priors import (KernelPrior, NoiseModel, SignalPrior, gaussian_kernel,
                     sample_alpha, sample_sigma)

FORMAT_VERSION = 1
ARRAY_NAMES = ("alpha", "x", "h", "eps", "y", "sigma")


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    alpha: np.ndarray
    x: np.ndarray
    sigma: float
    h: np.ndarray
    eps: np.ndarray
    y: np.ndarray

    def arrays(self):
        return {"alpha": self.alpha, "x": self.x, "h": self.h, "eps": self.eps,
                "y": self.y, "sigma": np.array([self.sigma])}

    def __eq__(self, other):
        if not isinstance(other, ProblemInstance):
            return NotImplemented
        a, b = self.arrays(), other.arrays()
        return all(a[k].shape == b[k].shape and a[k].tobytes() == b[k].tobytes() for k in a)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Dataset:
    instances: list
    signal: SignalPrior
    kernel: KernelPrior
    noise: NoiseModel
    base_seed: int

    def __len__(self):
        return len(self.instances)

    def __getitem__(self, i):
        return self.instances[i]

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (self.base_seed == other.base_seed
                and self.signal == other.signal
                and self.kernel == other.kernel
                and self.noise == other.noise
                and len(self.instances) == len(other.instances)
                and all(a == b for a, b in zip(self.instances, other.instances)))

    __hash__ = None


def generate_instance(signal, kernel, noise, rng):
    """Draw ``alpha``, ``sigma`` and the noise in that order, then blur."""
    alpha = sample_alpha(signal, rng)
    sigma = sample_sigma(kernel, rng)
    n = signal.dictionary.n
    eps = np.sqrt(noise.c_eps) * rng.standard_normal((n, n))
    x = synthesize(signal.dictionary, alpha)
    h = gaussian_kernel(sigma, kernel.d)
    y = blur(x, h) + eps
    return ProblemInstance(alpha=alpha, x=x, sigma=sigma, h=h, eps=eps, y=y)


def instance_at(signal, kernel, noise, base_seed, index, purpose=streams.INSTANCE):
    return generate_instance(signal, kernel, noise, streams.stream(base_seed, purpose, index))


def generate_dataset(signal, kernel, noise, count, base_seed):
    if count < 1:
        raise InvalidArgumentError(f"count must be >= 1, got {count}")
    instances = [instance_at(signal, kernel, noise, base_seed, i) for i in range(count)]
    return Dataset(instances=instances, signal=signal, kernel=kernel, noise=noise,
                   base_seed=int(base_seed))


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Row-stacked draws: ``X`` (m, N), ``H`` (m, D), ``Y`` (m, N), ``sigma`` (m,)."""

    X: np.ndarray
    H: np.ndarray
    Y: np.ndarray
    sigma: np.ndarray

    def __len__(self):
        return self.X.shape[0]


def sample_batch(signal, kernel, noise, rng, count):
    """Vectorized draw of ``count`` instances from one stream (for Monte-Carlo work)."""
    dictionary = signal.dictionary
    n, d = dictionary.n, kernel.d
    alpha = sample_alpha(signal, rng, size=count)
    sigma = sample_sigma(kernel, rng, size=count)
    eps = np.sqrt(noise.c_eps) * rng.standard_normal((count, n, n))
    X = alpha @ dictionary.atoms
    off = np.arange(d) - d // 2
    r2 = (off[:, None] ** 2 + off[None, :] ** 2).ravel()
    H = np.exp(-r2[None, :] / (2.0 * sigma[:, None] ** 2))
    H /= H.sum(axis=1, keepdims=True)
    G = np.zeros((count, n, n))
    idx = off % n
    G[:, idx[:, None], idx[None, :]] = H.reshape(count, d, d)
    Y = np.fft.irfft2(np.fft.rfft2(G) * np.fft.rfft2(X.reshape(count, n, n)), s=(n, n))
    Y = (Y + eps).reshape(count, n * n)
    return SampleBatch(X=X, H=H, Y=Y, sigma=sigma)


def _write_blob(path, arr):
    np.ascontiguousarray(arr, dtype="<f8").tofile(path)


def _read_blob(path, shape):
    expected = int(np.prod(shape)) * 8
    try:
        size = os.path.getsize(path)
    except FileNotFoundError:
        raise MalformedDatasetError(f"missing array file {path}") from None
    except OSError as exc:
        raise DatasetIOError(f"cannot stat {path}: {exc}") from exc
    if size != expected:
        raise MalformedDatasetError(f"{path}: expected {expected} bytes, found {size}")
    try:
        data = np.fromfile(path, dtype="<f8")
    except OSError as exc:
        raise DatasetIOError(f"cannot read {path}: {exc}") from exc
    return data.astype(np.float64).reshape(shape)


def save_dataset(ds, path):
    path = Path(path)
    sig, ker, noi = ds.signal, ds.kernel, ds.noise
    d = sig.dictionary
    manifest = {
        "version": FORMAT_VERSION,
        "n": d.n, "K": d.K, "d": ker.d, "a": ker.a, "beta": ker.beta,
        "b": sig.b, "c_eps": noi.c_eps, "count": len(ds.instances),
        "base_seed": ds.base_seed,
        "atom_indices": d.atom_indices.tolist(),
        "mu_alpha": d.mu_alpha.tolist(),
    }
    try:
        path.mkdir(parents=True, exist_ok=True)
        for i, inst in enumerate(ds.instances):
            for name, arr in inst.arrays().items():
                _write_blob(path / f"inst{i}_{name}.f64", arr)
        # manifest last: a directory without one is an incomplete write
        (path / "manifest.json").write_text(json.dumps(manifest, indent=1))
    except OSError as exc:
        raise DatasetIOError(f"cannot write dataset to {path}: {exc}") from exc


def read_manifest(path):
    path = Path(path)
    mpath = path / "manifest.json"
    try:
        text = mpath.read_text()
    except FileNotFoundError:
        raise DatasetIOError(f"no manifest.json in {path}") from None
    except OSError as exc:
        raise DatasetIOError(f"cannot read {mpath}: {exc}") from exc
    try:
        manifest = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedDatasetError(f"{mpath}: invalid JSON ({exc})") from exc
    if not isinstance(manifest, dict) or "version" not in manifest:
        raise MalformedDatasetError(f"{mpath}: missing version tag")
    if manifest["version"] != FORMAT_VERSION:
        raise DatasetVersionError(f"{mpath}: unsupported version {manifest['version']!r}, "
                                  f"expected {FORMAT_VERSION}")
    return manifest


def load_dataset(path):
    path = Path(path)
    m = read_manifest(path)
    try:
        n, K, d, count = int(m["n"]), int(m["K"]), int(m["d"]), int(m["count"])
        dictionary = Dictionary.from_indices(n, m["atom_indices"], m["mu_alpha"])
        signal = SignalPrior(dictionary, float(m["b"]))
        kernel = KernelPrior(d, float(m["a"]), float(m["beta"]))
        noise = NoiseModel(float(m["c_eps"]))
        base_seed = int(m["base_seed"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedDatasetError(f"{path}/manifest.json: bad field ({exc})") from exc
    if dictionary.K != K:
        raise MalformedDatasetError(f"{path}/manifest.json: K={K} but {dictionary.K} atoms listed")
    shapes = {"alpha": (K,), "x": (n, n), "h": (d, d), "eps": (n, n), "y": (n, n), "sigma": (1,)}
    instances = []
    for i in range(count):
        arr = {name: _read_blob(path / f"inst{i}_{name}.f64", shapes[name]) for name in ARRAY_NAMES}
        instances.append(ProblemInstance(alpha=arr["alpha"], x=arr["x"], sigma=float(arr["sigma"][0]),
                                         h=arr["h"], eps=arr["eps"], y=arr["y"]))
    return Dataset(instances=instances, signal=signal, kernel=kernel, noise=noise, base_seed=base_seed)
