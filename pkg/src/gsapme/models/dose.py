"""Restricted CT organ-dose model on synthetic coefficient tables.

The absorbed dose to an organ is the sum over 1 cm axial slices ``z`` of the
scan range of ``CTDIvol * DC(organ, age, gender, kVp, filter, z)``, where

    CTDIvol = nCTDIw(model, kVp, filter) / pitch * mAs / 100.

The real CTDI and dose-coefficient libraries are not public. The tables built
by :func:`synth_dose_tables` are smooth parametric curves whose structure
(peaks, age trends, kVp trends, filter ordering) is plausible, so that
sensitivity rankings reflect the dose equation rather than noise.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy.stats import beta as beta_dist, norm

from ..dataset import CATEGORICAL, DISCRETE, NUMERIC, ColumnSpec, Dataset
from ..errors import ModelError

ORGANS = ("brain", "rbm")
PHANTOM_AGES = (0, 1, 5, 10, 15, 18)
GENDERS = ("F", "M")
KVPS = (80, 100, 120, 140)
FILTERS = ("head", "body")
MODELS = tuple(range(1, 13))
Z_MAX = 165
EXAM_CLASSES = ("head", "chest", "abdopelvis", "multiple")

INPUT_SPECS = (
    ColumnSpec("age", DISCRETE, bounds=(0, 18)),
    ColumnSpec("gender", CATEGORICAL, levels=GENDERS),
    ColumnSpec("start", DISCRETE, bounds=(1, Z_MAX)),
    ColumnSpec("end", DISCRETE, bounds=(1, Z_MAX)),
    ColumnSpec("mAs", DISCRETE, bounds=(4, 505)),
    ColumnSpec("kVp", DISCRETE, levels=KVPS),
    ColumnSpec("pitch", NUMERIC, bounds=(0.2, 1.75)),
    ColumnSpec("model", CATEGORICAL, levels=tuple(str(m) for m in MODELS)),
)

# standing height (cm) of each phantom, used to place organs along z
_HEIGHT = {0: 50.0, 1: 75.0, 5: 110.0, 10: 140.0, 15: 165.0, 18: 170.0}

# (start window, end window) per exam class, in cm from the top of the head
_WINDOWS = {
    "head": ((1, 10), (15, 30)),
    "chest": ((30, 45), (60, 80)),
    "abdopelvis": ((65, 85), (100, 125)),
    "multiple": ((1, 45), (70, 140)),
}
# pitch range per class; head protocols use a narrower band than body scans
_PITCH = {
    "head": (0.5, 1.3),
    "chest": (0.2, 1.75),
    "abdopelvis": (0.2, 1.75),
    "multiple": (0.2, 1.75),
}

# target Pearson correlations between inputs (others are independent)
CORRELATION_TARGETS = {
    ("start", "end"): 0.79,
    ("pitch", "start"): 0.43,
    ("pitch", "end"): 0.47,
    ("pitch", "kVp"): -0.37,
}
_LATENT = ("age", "start", "end", "mAs", "kVp", "pitch")
_KVP_PROBS = (0.2, 0.35, 0.35, 0.1)


@dataclass(frozen=True)
class ScanRecord:
    age: int
    gender: str
    start: int
    end: int
    mAs: int
    kVp: int
    pitch: float
    model: int

    def __post_init__(self):
        if not 0 <= self.age <= 18:
            raise ModelError(f"age {self.age} outside 0..18")
        if self.gender not in GENDERS:
            raise ModelError(f"gender {self.gender!r} not in {GENDERS}")
        if not 1 <= self.start <= self.end <= Z_MAX:
            raise ModelError(f"scan range {self.start}..{self.end} invalid (need 1 <= start <= end <= {Z_MAX})")
        if not 4 <= self.mAs <= 505:
            raise ModelError(f"mAs {self.mAs} outside 4..505")
        if self.kVp not in KVPS:
            raise ModelError(f"kVp {self.kVp} not in {KVPS}")
        if not 0.2 <= self.pitch <= 1.75:
            raise ModelError(f"pitch {self.pitch} outside [0.2, 1.75]")
        if int(self.model) not in MODELS:
            raise ModelError(f"CT model {self.model} not in 1..12")


def filter_for(exam_class: str) -> str:
    """Head filter for head exams, body filter for everything else."""
    if exam_class not in EXAM_CLASSES:
        raise ModelError(f"unknown exam class {exam_class!r}")
    return "head" if exam_class == "head" else "body"


def nearest_phantom(age: int, phantom_ages=PHANTOM_AGES) -> int:
    """Phantom age closest to ``age``; ties go to the younger phantom."""
    ages = np.asarray(phantom_ages)
    return int(ages[np.argmin(np.abs(ages - age))])


@dataclass(frozen=True, eq=False)
class DoseTables:
    """``nctdiw[model, kVp, filter]`` in mGy per 100 mAs and
    ``dc[organ, phantom, gender, kVp, filter, z - 1]`` (dimensionless)."""

    nctdiw: np.ndarray
    dc: np.ndarray
    phantom_ages: tuple = PHANTOM_AGES

    def __post_init__(self):
        if self.nctdiw.shape != (len(MODELS), len(KVPS), len(FILTERS)):
            raise ModelError(f"nCTDIw table has shape {self.nctdiw.shape}")
        expected = (len(ORGANS), len(self.phantom_ages), len(GENDERS), len(KVPS), len(FILTERS), Z_MAX)
        if self.dc.shape != expected:
            raise ModelError(f"DC table has shape {self.dc.shape}, expected {expected}")
        if np.any(self.nctdiw <= 0):
            raise ModelError("nCTDIw values must be positive")
        if np.any(self.dc < 0):
            raise ModelError("DC values must be non-negative")
        for arr in (self.nctdiw, self.dc):
            arr.setflags(write=False)
        cum = np.concatenate([np.zeros(self.dc.shape[:-1] + (1,)), np.cumsum(self.dc, axis=-1)], axis=-1)
        cum.setflags(write=False)
        object.__setattr__(self, "_cum", cum)

    @staticmethod
    def _key(seq, value, what):
        try:
            return seq.index(value)
        except ValueError:
            raise ModelError(f"no table entry for {what} = {value!r}") from None

    def nctdiw_value(self, model, kVp, filter) -> float:
        return float(self.nctdiw[self._key(MODELS, int(model), "model"), self._key(KVPS, int(kVp), "kVp"),
                                 self._key(FILTERS, filter, "filter")])

    def dc_value(self, organ, age, gender, kVp, filter, z) -> float:
        if not 1 <= int(z) <= Z_MAX:
            raise ModelError(f"no DC entry for slice z = {z}")
        return float(self.dc[self._dc_index(organ, age, gender, kVp, filter)][int(z) - 1])

    def _dc_index(self, organ, age, gender, kVp, filter):
        phantom = nearest_phantom(age, self.phantom_ages)
        return (self._key(ORGANS, organ, "organ"), self.phantom_ages.index(phantom),
                self._key(GENDERS, gender, "gender"), self._key(KVPS, int(kVp), "kVp"),
                self._key(FILTERS, filter, "filter"))

    def to_json(self, path) -> None:
        """Write the tables as JSON records.

        ``{"phantom_ages": [...],
           "nCTDIw": [{"model", "kVp", "filter", "value"}, ...],
           "DC": [{"organ", "age", "gender", "kVp", "filter", "z", "coefficient"}, ...]}``
        where ``age`` in DC records is a phantom age.
        """
        nct = [
            {"model": m, "kVp": k, "filter": f, "value": float(self.nctdiw[a, b, c])}
            for a, m in enumerate(MODELS) for b, k in enumerate(KVPS) for c, f in enumerate(FILTERS)
        ]
        dc = []
        for o, organ in enumerate(ORGANS):
            for p, age in enumerate(self.phantom_ages):
                for g, gender in enumerate(GENDERS):
                    for k, kvp in enumerate(KVPS):
                        for f, filt in enumerate(FILTERS):
                            row = self.dc[o, p, g, k, f]
                            dc.extend(
                                {"organ": organ, "age": age, "gender": gender, "kVp": kvp,
                                 "filter": filt, "z": z + 1, "coefficient": float(row[z])}
                                for z in range(Z_MAX)
                            )
        doc = {"phantom_ages": list(self.phantom_ages), "nCTDIw": nct, "DC": dc}
        Path(path).write_text(json.dumps(doc, separators=(",", ":")), encoding="utf-8")

    @classmethod
    def from_json(cls, path) -> "DoseTables":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        ages = tuple(int(a) for a in doc["phantom_ages"])
        nct = np.full((len(MODELS), len(KVPS), len(FILTERS)), np.nan)
        for rec in doc["nCTDIw"]:
            nct[MODELS.index(int(rec["model"])), KVPS.index(int(rec["kVp"])), FILTERS.index(rec["filter"])] = rec["value"]
        dc = np.full((len(ORGANS), len(ages), len(GENDERS), len(KVPS), len(FILTERS), Z_MAX), np.nan)
        for rec in doc["DC"]:
            dc[ORGANS.index(rec["organ"]), ages.index(int(rec["age"])), GENDERS.index(rec["gender"]),
               KVPS.index(int(rec["kVp"])), FILTERS.index(rec["filter"]), int(rec["z"]) - 1] = rec["coefficient"]
        if np.isnan(nct).any() or np.isnan(dc).any():
            raise ModelError(f"{path}: incomplete dose tables")
        return cls(nct, dc, ages)


def synth_dose_tables(seed: int = 0) -> DoseTables:
    """Deterministic synthetic coefficient tables.

    * ``nCTDIw`` grows like ``kVp**2.5``; the 16 cm head phantom reads about
      twice the 32 cm body phantom; each CT model has its own output factor.
    * brain DC is a Gaussian bump centred ``0.1 * h + 4`` cm below the top of
      the head (``h`` the phantom height in cm), with an exponential scatter
      tail; it falls like ``1 / h``, is about 10% higher in female phantoms
      and grows mildly with kVp.
    * RBM DC mixes a skull bump with a trunk plateau (spine and pelvis); the
      skull share of marrow falls from 25% at birth to 8% in adults.
    """
    rng = np.random.default_rng(seed)
    model_factor = rng.uniform(0.6, 1.6, size=len(MODELS))
    kvp_rel = np.asarray(KVPS, dtype=float) / 120.0
    filter_factor = np.array([2.0, 1.0])
    nct = 9.0 * model_factor[:, None, None] * kvp_rel[None, :, None] ** 2.5 * filter_factor[None, None, :]

    z = np.arange(1, Z_MAX + 1, dtype=float)
    gender_factor = {"F": 1.0 + rng.uniform(0.08, 0.12), "M": 1.0}
    dc = np.zeros((len(ORGANS), len(PHANTOM_AGES), len(GENDERS), len(KVPS), len(FILTERS), Z_MAX))
    for p, age in enumerate(PHANTOM_AGES):
        h = _HEIGHT[age]
        size_factor = (50.0 / h) ** 1.0
        brain_c, brain_w = 0.1 * h + 4.0, 0.04 * h + 4.0
        brain = np.exp(-0.5 * ((z - brain_c) / brain_w) ** 2) + 0.08 * np.exp(-np.abs(z - brain_c) / (0.1 * h))
        head_share = 0.25 - 0.17 * age / 18.0
        skull = np.exp(-0.5 * ((z - 0.07 * h) / (0.05 * h + 1.5)) ** 2)
        trunk = 1.0 / (1.0 + np.exp(-(z - 0.15 * h) / 2.0)) / (1.0 + np.exp((z - 0.55 * h) / 2.0))
        rbm = head_share * skull / skull.sum() + (1 - head_share) * trunk / trunk.sum()
        rbm = rbm * 40.0 + 0.002 * np.exp(-z / h)
        for g, gender in enumerate(GENDERS):
            for k, kvp in enumerate(KVPS):
                kvp_factor = (kvp / 120.0) ** 0.5
                for f, filt in enumerate(FILTERS):
                    filt_factor = 1.0 if filt == "head" else 0.9
                    scale = size_factor * gender_factor[gender] * kvp_factor * filt_factor
                    dc[0, p, g, k, f] = 0.12 * scale * brain
                    dc[1, p, g, k, f] = 0.05 * scale * rbm * (1 + 0.1 * (kvp - 100) / 40)
    return DoseTables(nct, dc, PHANTOM_AGES)


def ctdi_vol(model, kVp, filter, mAs, pitch, tables: DoseTables) -> float:
    """Volumetric CT dose index in mGy."""
    if not pitch > 0:
        raise ModelError(f"pitch must be positive, got {pitch}")
    return tables.nctdiw_value(model, kVp, filter) / pitch * mAs / 100.0


def organ_dose(rec: ScanRecord, organ: str, tables: DoseTables, filter: str | None = None,
               exam_class: str | None = None) -> float:
    """Absorbed organ dose in mGy, summed slice by slice over ``start..end``.

    The filter is given directly or derived from ``exam_class``; with neither,
    the body filter is used.
    """
    if filter is None:
        filter = filter_for(exam_class) if exam_class is not None else "body"
    ctdi = ctdi_vol(rec.model, rec.kVp, filter, rec.mAs, rec.pitch, tables)
    total = 0.0
    for z in range(rec.start, rec.end + 1):
        total += ctdi * tables.dc_value(organ, rec.age, rec.gender, rec.kVp, filter, z)
    return total


def organ_doses(columns: dict, organ: str, tables: DoseTables, filter: str) -> np.ndarray:
    """Vectorised :func:`organ_dose` over columns of scan records.

    Uses cumulative sums of DC along z, so it agrees with the slice-by-slice
    sum up to rounding.
    """
    age = np.asarray(columns["age"], dtype=np.int64)
    ages = np.asarray(tables.phantom_ages)
    phantom = np.argmin(np.abs(age[:, None] - ages[None, :]), axis=1)
    gender = np.array([GENDERS.index(str(g)) for g in columns["gender"]])
    kvp = np.searchsorted(KVPS, np.asarray(columns["kVp"], dtype=np.int64))
    model = np.asarray(columns["model"]).astype(np.int64) - 1
    f = FILTERS.index(filter)
    o = ORGANS.index(organ)
    start = np.asarray(columns["start"], dtype=np.int64)
    end = np.asarray(columns["end"], dtype=np.int64)
    cum = tables._cum[o, phantom, gender, kvp, f]
    dc_sum = cum[np.arange(len(age)), end] - cum[np.arange(len(age)), start - 1]
    ctdi = tables.nctdiw[model, kvp, f] / np.asarray(columns["pitch"], dtype=float) * np.asarray(columns["mAs"]) / 100.0
    return ctdi * dc_sum


def _discrete_from_uniform(u, low, high, a=2.0, b=2.0):
    x = low + (high - low + 1) * beta_dist.ppf(u, a, b)
    return np.clip(np.floor(x), low, high).astype(np.int64)


def _marginals(zlat: np.ndarray, exam_class: str) -> dict:
    u = norm.cdf(zlat)
    (s_lo, s_hi), (e_lo, e_hi) = _WINDOWS[exam_class]
    cols = {}
    cols["age"] = _discrete_from_uniform(u[:, 0], 0, 18, 1.3, 1.3)
    cols["start"] = _discrete_from_uniform(u[:, 1], s_lo, s_hi)
    cols["end"] = _discrete_from_uniform(u[:, 2], e_lo, e_hi)
    cols["mAs"] = np.clip(np.round(np.exp(np.log(140.0) + 0.55 * zlat[:, 3])), 4, 505).astype(np.int64)
    edges = np.cumsum(_KVP_PROBS)[:-1]
    cols["kVp"] = np.asarray(KVPS)[np.searchsorted(edges, u[:, 4], side="right")]
    p_lo, p_hi = _PITCH[exam_class]
    cols["pitch"] = p_lo + (p_hi - p_lo) * beta_dist.ppf(u[:, 5], 3.0, 4.0)
    return cols


def _observed(cols: dict) -> dict:
    x = np.column_stack([cols[name].astype(float) for name in _LATENT])
    r = np.corrcoef(x, rowvar=False)
    return {pair: r[_LATENT.index(pair[0]), _LATENT.index(pair[1])] for pair in CORRELATION_TARGETS}


def latent_correlation(exam_class: str, iterations: int = 12, calib_n: int = 40_000) -> np.ndarray:
    """Gaussian-copula correlation whose transformed marginals hit the targets.

    Fixed-point iteration on the latent entries against a large calibration
    draw with a fixed internal seed, so the result is deterministic (and
    cached per argument set).
    """
    if exam_class not in EXAM_CLASSES:
        raise ModelError(f"unknown exam class {exam_class!r}")
    return _calibrate(exam_class, iterations, calib_n).copy()


@lru_cache(maxsize=None)
def _calibrate(exam_class: str, iterations: int, calib_n: int) -> np.ndarray:
    k = len(_LATENT)
    lat = np.eye(k)
    for (a, b), target in CORRELATION_TARGETS.items():
        i, j = _LATENT.index(a), _LATENT.index(b)
        lat[i, j] = lat[j, i] = target
    z0 = np.random.default_rng(12345).standard_normal((calib_n, k))
    for _ in range(iterations):
        chol = _cholesky(lat)
        obs = _observed(_marginals(z0 @ chol.T, exam_class))
        for (a, b), target in CORRELATION_TARGETS.items():
            i, j = _LATENT.index(a), _LATENT.index(b)
            lat[i, j] = lat[j, i] = np.clip(lat[i, j] + (target - obs[(a, b)]), -0.999, 0.999)
    _cholesky(lat)
    return lat


def _cholesky(mat):
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError:
        raise ModelError("infeasible correlation matrix: not positive definite") from None


def ncict_sample(n: int, exam_class: str, tables: DoseTables, seed: int, organ: str = "brain") -> Dataset:
    """Synthetic examination records of one class and the resulting organ dose.

    Age, scan start/end, mAs, kVp and pitch are drawn through a Gaussian
    copula calibrated to the target correlations; gender and CT model are
    independent of everything else.
    """
    if n < 100:
        raise ModelError(f"ncict_sample needs n >= 100, got {n}")
    if organ not in ORGANS:
        raise ModelError(f"unknown organ {organ!r}")
    filt = filter_for(exam_class)
    chol = _cholesky(latent_correlation(exam_class))
    rng = np.random.default_rng(seed)
    zlat = rng.standard_normal((n, len(_LATENT))) @ chol.T
    cols = _marginals(zlat, exam_class)
    cols["gender"] = np.asarray(GENDERS, dtype=object)[rng.integers(0, 2, size=n)]
    model_p = np.random.default_rng(777).dirichlet(np.full(len(MODELS), 4.0))
    cols["model"] = np.asarray([str(m) for m in MODELS], dtype=object)[rng.choice(len(MODELS), size=n, p=model_p)]
    dose = organ_doses(cols, organ, tables, filt)
    out = f"{organ}_dose"
    data = {spec.name: cols[spec.name] for spec in INPUT_SPECS}
    data[out] = dose
    return Dataset.from_columns([*INPUT_SPECS, ColumnSpec(out, NUMERIC, output=True)], data)


def records(ds: Dataset) -> list[ScanRecord]:
    c = ds.columns
    return [
        ScanRecord(int(c["age"][i]), str(c["gender"][i]), int(c["start"][i]), int(c["end"][i]),
                   int(c["mAs"][i]), int(c["kVp"][i]), float(c["pitch"][i]), int(c["model"][i]))
        for i in range(ds.n)
    ]
