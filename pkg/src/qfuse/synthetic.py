"""Synthetic two-class time-course corpora with planted structure.

Each subject is a Φ×B matrix of unit-variance series.  Two effects carry
the class signal, both confined to the discriminative pair of regions:

* connectivity — the pair is driven by a shared latent factor so its
  Pearson correlation is ρ_c for class c (exactly, in expectation);
* complexity — the pair's series are AR(1)-smoothed with a per-class
  coefficient φ_c, shifting dispersion entropy across scales.

All remaining regions are iid standard normal for every class, so any
separability must come from the planted pair.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .features import TimeCourses
from .seeding import derive_seed


class SyntheticConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticConfig:
    n_regions: int = 8
    n_timepoints: int = 64
    subjects_per_class: int = 200
    pair: tuple[int, int] = (2, 5)  # 0-based discriminative regions
    rho: tuple[float, float] = (0.8, 0.0)  # pair correlation per class
    phi: tuple[float, float] = (0.9, 0.0)  # AR(1) smoothing per class
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "pair", tuple(int(i) for i in self.pair))
        object.__setattr__(self, "rho", tuple(float(r) for r in self.rho))
        object.__setattr__(self, "phi", tuple(float(p) for p in self.phi))
        if self.n_regions < 2 or self.n_timepoints < 2:
            raise SyntheticConfigError("need at least 2 regions and 2 time points")
        if self.subjects_per_class < 1:
            raise SyntheticConfigError("subjects_per_class must be >= 1")
        i, j = self.pair
        if i == j or not all(0 <= k < self.n_regions for k in (i, j)):
            raise SyntheticConfigError(
                f"pair {self.pair} must be two distinct regions in "
                f"[0, {self.n_regions})")
        for r in self.rho:
            if not -1.0 < r < 1.0:
                raise SyntheticConfigError(f"correlation {r} outside (-1, 1)")
        for p in self.phi:
            if not -1.0 < p < 1.0:
                raise SyntheticConfigError(f"AR coefficient {p} outside (-1, 1)")


def chance_config(base: SyntheticConfig = SyntheticConfig()) -> SyntheticConfig:
    """Same corpus shape with the class contrast removed (equal ρ, equal
    φ): every feature should score at chance."""
    return replace(base, rho=(0.0, 0.0), phi=(0.0, 0.0))


def ar1(phi: float, n: int, rng) -> np.ndarray:
    """Unit-variance stationary AR(1): v[0]=g[0], v[t]=φ v[t-1]+√(1-φ²) g[t]."""
    g = rng.standard_normal(n)
    if phi == 0.0:
        return g
    v = np.empty(n)
    v[0] = g[0]
    scale = np.sqrt(1.0 - phi * phi)
    for t in range(1, n):
        v[t] = phi * v[t - 1] + scale * g[t]
    return v


def _subject(config: SyntheticConfig, label: int, rng) -> np.ndarray:
    n, b = config.n_timepoints, config.n_regions
    rho = config.rho[label]
    phi = config.phi[label]
    x = rng.standard_normal((n, b))
    i, j = config.pair
    # shared factor construction: x_i = a f + b e_i gives corr(x_i, x_j)
    # = sign(rho) a^2 = rho with unit variance preserved
    a = np.sqrt(abs(rho))
    c = np.sqrt(1.0 - abs(rho))
    f = ar1(phi, n, rng)
    ei = ar1(phi, n, rng)
    ej = ar1(phi, n, rng)
    x[:, i] = a * f + c * ei
    x[:, j] = np.sign(rho) * a * f + c * ej if rho != 0.0 else a * f + c * ej
    return x


def gen_synthetic(config: SyntheticConfig) -> tuple[list[TimeCourses], np.ndarray]:
    """Parallel lists: subjects (class 0 block then class 1 block) and
    labels.  Each subject draws from its own derived seed, so the corpus
    is stable under changes to subjects_per_class elsewhere."""
    subjects: list[TimeCourses] = []
    labels: list[int] = []
    for label in (0, 1):
        for k in range(config.subjects_per_class):
            rng = np.random.default_rng(
                derive_seed(config.seed, f"subject-c{label}-{k}"))
            data = _subject(config, label, rng)
            sid = f"sub-{label}{k:03d}"
            subjects.append(TimeCourses(data=data, subject_id=sid))
            labels.append(label)
    return subjects, np.asarray(labels, dtype=np.int64)


def config_hash(config: SyntheticConfig) -> str:
    payload = json.dumps(asdict(config), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


def save_dataset(out_dir, subjects: list[TimeCourses], labels,
                 config: SyntheticConfig) -> Path:
    """One CSV per subject under subjects/ plus manifest.json recording
    ids, labels, seed and a config hash."""
    out = Path(out_dir)
    sub_dir = out / "subjects"
    sub_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for tc, label in zip(subjects, labels):
        fname = f"{tc.subject_id}.csv"
        header = [f"r{k}" for k in range(tc.data.shape[1])]
        with open(sub_dir / fname, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for row in tc.data:
                w.writerow([f"{v:.17g}" for v in row])
        entries.append({"subject_id": tc.subject_id, "label": int(label),
                        "file": f"subjects/{fname}"})
    manifest = {
        "config": asdict(config),
        "config_hash": config_hash(config),
        "seed": config.seed,
        "n_subjects": len(entries),
        "subjects": entries,
    }
    path = out / "manifest.json"
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_dataset(in_dir) -> tuple[list[TimeCourses], np.ndarray]:
    root = Path(in_dir)
    with open(root / "manifest.json") as fh:
        manifest = json.load(fh)
    subjects, labels = [], []
    for entry in manifest["subjects"]:
        with open(root / entry["file"], newline="") as fh:
            rows = list(csv.reader(fh))
        data = np.array([[float(v) for v in row] for row in rows[1:]])
        subjects.append(TimeCourses(data=data, subject_id=entry["subject_id"]))
        labels.append(entry["label"])
    return subjects, np.asarray(labels, dtype=np.int64)
