"""Stochastic segmentation sampling and uncertainty maps.

Covers the three probabilistic output families the toolkit consumes:

* low-rank Gaussian logit models (mean + factor + diagonal), sampled in
  factor form without ever materialising the dense covariance;
* Dirichlet evidence fields, whose class probabilities are available in
  closed form;
* plain sample sets (e.g. dropout or ensemble inferences) loaded from disk.

Uncertainty is the binary predictive entropy of the mean foreground
probability (natural log, range [0, ln 2]).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import xlogy

from .errors import DimensionMismatchError, RaggedSamplesError
from .grid import LN2, ProbMap, UncertaintyMap, VoxelGrid
from .vgf import read_vgf, write_vgf

# Foreground is class channel 1 of a C=2 logit/evidence layout.
FOREGROUND_CLASS = 1


@dataclass
class LogitModel:
    """Gaussian over per-voxel class logits with covariance P @ P.T + diag(D).

    ``mean`` is (V, C); ``factor`` is (V*C, R); ``diag`` is (V*C,) and holds
    variances (>= 0). Logit vectors are flattened voxel-major, class fastest:
    flat index = v * C + c. ``dims``/``spacing`` give the spatial geometry
    with V = nx*ny*nz (x fastest in the voxel ordering).
    """

    mean: np.ndarray
    factor: np.ndarray
    diag: np.ndarray
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.factor = np.asarray(self.factor, dtype=np.float64)
        self.diag = np.asarray(self.diag, dtype=np.float64)
        self.dims = tuple(int(d) for d in self.dims)
        self.spacing = tuple(float(s) for s in self.spacing)
        v = int(np.prod(self.dims))
        if self.mean.ndim != 2 or self.mean.shape[0] != v:
            raise DimensionMismatchError(
                f"mean must be (V, C) with V={v}, got {self.mean.shape}"
            )
        vc = v * self.classes
        if self.factor.ndim != 2 or self.factor.shape[0] != vc:
            raise DimensionMismatchError(
                f"factor must be (V*C, R) with V*C={vc}, got {self.factor.shape}"
            )
        if self.diag.shape != (vc,):
            raise DimensionMismatchError(
                f"diag must be (V*C,) with V*C={vc}, got {self.diag.shape}"
            )
        if self.diag.size and self.diag.min() < 0:
            raise ValueError("diag variances must be >= 0")

    @property
    def classes(self) -> int:
        return self.mean.shape[1]

    @property
    def rank(self) -> int:
        return self.factor.shape[1]

    def covariance(self) -> np.ndarray:
        """Dense (V*C, V*C) covariance. For tests and tiny grids only."""
        return self.factor @ self.factor.T + np.diag(self.diag)


@dataclass
class DirichletField:
    """Nonnegative per-class evidence; concentrations are (evidence + 1)^2."""

    evidence: np.ndarray
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        self.evidence = np.asarray(self.evidence, dtype=np.float64)
        self.dims = tuple(int(d) for d in self.dims)
        self.spacing = tuple(float(s) for s in self.spacing)
        v = int(np.prod(self.dims))
        if self.evidence.ndim != 2 or self.evidence.shape[0] != v:
            raise DimensionMismatchError(
                f"evidence must be (V, C) with V={v}, got {self.evidence.shape}"
            )
        if self.evidence.size and self.evidence.min() < 0:
            raise ValueError("evidence must be >= 0")

    def concentrations(self) -> np.ndarray:
        """Posterior Dirichlet concentrations, (evidence + 1)^2, all >= 1."""
        return (self.evidence + 1.0) ** 2

    def class_probs(self) -> np.ndarray:
        """(V, C) class probabilities: concentrations / per-voxel strength."""
        conc = self.concentrations()
        return conc / conc.sum(axis=1, keepdims=True)


@dataclass
class SampleSet:
    """Ordered collection of segmentation realisations from one model.

    Members share dims and spacing. ``provenance`` records the generating
    family: 'ssn', 'ensemble' or 'external'.
    """

    members: list = field(default_factory=list)
    provenance: str = "external"

    def __post_init__(self):
        if not self.members:
            raise ValueError("a SampleSet needs at least one member")
        first = self.members[0]
        for m in self.members[1:]:
            first.require_same_geometry(m)

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def __getitem__(self, i):
        return self.members[i]

    @property
    def dims(self):
        return self.members[0].dims

    @property
    def spacing(self):
        return self.members[0].spacing

    def stack(self) -> np.ndarray:
        """(S, nx, ny, nz) array of member data."""
        return np.stack([np.asarray(m.data, dtype=np.float64) for m in self.members])

    def mean_prob(self) -> ProbMap:
        """Voxelwise mean foreground probability across members."""
        return ProbMap(self.stack().mean(axis=0), self.spacing)


def _softmax_rows(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def draw_logits(model: LogitModel, n: int, seed) -> np.ndarray:
    """Draw ``n`` logit fields, shape (n, V, C). Deterministic under seed.

    Each draw is mean + P @ eps_R + sqrt(D) * eps_V with independent standard
    normal eps; cost O(V*C*R) per draw, the covariance is never formed.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    vc = model.factor.shape[0]
    r = model.rank
    flat_mean = model.mean.reshape(vc)
    sqrt_d = np.sqrt(model.diag)
    out = np.empty((n, vc), dtype=np.float64)
    for s in range(n):
        eps_r = rng.standard_normal(r)
        eps_v = rng.standard_normal(vc)
        out[s] = flat_mean + model.factor @ eps_r + sqrt_d * eps_v
    return out.reshape(n, -1, model.classes)


def sample_logits(model: LogitModel, n: int, seed) -> SampleSet:
    """Sample ``n`` foreground probability maps from a logit model."""
    logits = draw_logits(model, n, seed)
    members = []
    for s in range(n):
        probs = _softmax_rows(logits[s])
        fg = probs[:, FOREGROUND_CLASS].reshape(model.dims, order="F")
        members.append(ProbMap(fg, model.spacing))
    return SampleSet(members, provenance="ssn")


def mean_probs(model: LogitModel) -> ProbMap:
    """Softmax of the mean logits (the noise-free prediction)."""
    probs = _softmax_rows(model.mean)
    return ProbMap(probs[:, FOREGROUND_CLASS].reshape(model.dims, order="F"), model.spacing)


def dirichlet_probs(field: DirichletField) -> ProbMap:
    """Foreground-channel probability map of a Dirichlet evidence field."""
    probs = field.class_probs()
    return ProbMap(probs[:, FOREGROUND_CLASS].reshape(field.dims, order="F"), field.spacing)


def mix_ensemble(sets: list[SampleSet], draws_per_member: int, seed) -> SampleSet:
    """Pool ``draws_per_member`` samples from each member set uniformly.

    Draws are a seeded random subset (without replacement) of each member's
    samples, concatenated in member order. With draws_per_member equal to
    each member's size this is a within-member shuffle, so the pooled mean
    equals the uniform average of member means.
    """
    if not sets:
        raise ValueError("need at least one member set")
    first = sets[0]
    for s in sets[1:]:
        if s.dims != first.dims or s.spacing != first.spacing:
            raise DimensionMismatchError("ensemble members must share dims and spacing")
    rng = np.random.default_rng(seed)
    pooled = []
    for s in sets:
        if draws_per_member > len(s):
            raise ValueError(
                f"cannot draw {draws_per_member} from a member with {len(s)} samples"
            )
        idx = rng.choice(len(s), size=draws_per_member, replace=False)
        pooled.extend(s.members[i] for i in idx)
    return SampleSet(pooled, provenance="ensemble")


def binary_entropy(p: np.ndarray) -> np.ndarray:
    """Elementwise -p*ln(p) - (1-p)*ln(1-p), with 0*ln(0) = 0."""
    p = np.asarray(p, dtype=np.float64)
    return -(xlogy(p, p) + xlogy(1.0 - p, 1.0 - p))


def predictive_entropy(source) -> UncertaintyMap:
    """Entropy of the mean foreground probability, in nats.

    ``source`` may be a :class:`SampleSet` (the mean is taken across members)
    or a single :class:`ProbMap`/grid of probabilities. Values lie in
    [0, ln 2]; exactly ln 2 where the mean probability is 0.5.
    """
    if isinstance(source, SampleSet):
        mean = source.mean_prob()
    else:
        mean = source
    h = binary_entropy(mean.data)
    # Clamp float roundoff; true range is [0, ln 2].
    np.clip(h, 0.0, LN2, out=h)
    return UncertaintyMap(h, mean.spacing)


def assemble_3d_samples(per_slice: dict, spacing=(1.0, 1.0, 1.0)) -> SampleSet:
    """Stack 2D slice samples into volume-ranked 3D samples.

    ``per_slice`` maps slice index (z) to a list of S 2D arrays of foreground
    probability. Within every slice the samples are ranked by total
    foreground volume, descending (ties keep the original order), and 3D
    sample n is the stack of every slice's rank-n sample. Total volume of
    sample n is therefore non-increasing in n.
    """
    if not per_slice:
        raise ValueError("need at least one slice")
    z_order = sorted(per_slice)
    counts = {z: len(per_slice[z]) for z in z_order}
    s = counts[z_order[0]]
    if any(c != s for c in counts.values()):
        raise RaggedSamplesError(f"slice sample counts differ: {counts}")
    if s < 1:
        raise ValueError("need at least one sample per slice")
    ranked = {}
    shape2d = None
    for z in z_order:
        arrs = [np.asarray(a, dtype=np.float64) for a in per_slice[z]]
        for a in arrs:
            if a.ndim != 2:
                raise ValueError("slice samples must be 2D arrays")
            if shape2d is None:
                shape2d = a.shape
            elif a.shape != shape2d:
                raise DimensionMismatchError(
                    f"slice sample shapes differ: {a.shape} vs {shape2d}"
                )
        vols = np.array([a.sum() for a in arrs])
        # Descending volume, stable in the original index on ties.
        order = np.argsort(-vols, kind="stable")
        ranked[z] = [arrs[i] for i in order]
    members = []
    for n in range(s):
        vol = np.stack([ranked[z][n] for z in z_order], axis=2)
        members.append(ProbMap(vol, spacing))
    return SampleSet(members, provenance="external")


def write_logit_model(directory, model: LogitModel, name: str = "model") -> Path:
    """Write a logit model as VGF volumes plus a JSON manifest.

    The manifest layout is ``{"mu": path, "diag": path, "factors": [paths],
    "classes": C}``. Each referenced volume stores the values for the
    foreground logit margin (class 1 relative to class 0, whose mean/noise
    are zero); for the binary task this loses nothing because the softmax
    depends only on the logit difference.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    if model.classes != 2:
        raise ValueError("manifest format stores binary (C=2) models")
    v = int(np.prod(model.dims))
    c = model.classes
    fg = FOREGROUND_CLASS

    def as_grid(flat_vc_values):
        vals = flat_vc_values.reshape(v, c)[:, fg]
        return VoxelGrid(vals.reshape(model.dims, order="F"), model.spacing)

    mu_path = directory / f"{name}_mu.vgf"
    write_vgf(mu_path, VoxelGrid(model.mean[:, fg].reshape(model.dims, order="F"), model.spacing))
    diag_path = directory / f"{name}_diag.vgf"
    write_vgf(diag_path, as_grid(model.diag))
    factor_paths = []
    for r in range(model.rank):
        p = directory / f"{name}_factor{r:02d}.vgf"
        write_vgf(p, as_grid(model.factor[:, r]))
        factor_paths.append(p.name)
    manifest = {
        "mu": mu_path.name,
        "diag": diag_path.name,
        "factors": factor_paths,
        "classes": 2,
    }
    manifest_path = directory / f"{name}.json"
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest_path


def read_logit_model(manifest_path) -> LogitModel:
    """Load a logit model from a manifest written by :func:`write_logit_model`."""
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    manifest = json.loads(manifest_path.read_text())
    c = int(manifest["classes"])
    if c != 2:
        raise ValueError("manifest format stores binary (C=2) models")
    mu = read_vgf(base / manifest["mu"])
    diag = read_vgf(base / manifest["diag"])
    dims, spacing = mu.dims, mu.spacing
    v = int(np.prod(dims))
    fg = FOREGROUND_CLASS

    mean = np.zeros((v, c))
    mean[:, fg] = np.asarray(mu.data, dtype=np.float64).ravel(order="F")
    d = np.zeros(v * c)
    d[fg::c] = np.asarray(diag.data, dtype=np.float64).ravel(order="F")
    factors = np.zeros((v * c, len(manifest["factors"])))
    for r, rel in enumerate(manifest["factors"]):
        g = read_vgf(base / rel)
        factors[fg::c, r] = np.asarray(g.data, dtype=np.float64).ravel(order="F")
    return LogitModel(mean=mean, factor=factors, diag=d, dims=dims, spacing=spacing)
