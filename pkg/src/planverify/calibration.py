"""Distance-based calibration of the safety classifier.

Samples whose interpreter label agrees with the checker are *safe*
(``y_safe = 1``), the others *unsafe*.  Centroids are the latent means of
correctly classified calibration samples of each class.  For a query ``z``
with nearest centroid ``c`` at distance ``d``, the guarantee is::

    p_hat = 1 - (1 - F_c(d)) * prior_c / max(support / N, 1 / N)

where ``F_c(d)`` is the fraction of opposite-class calibration samples
farther than ``d`` from ``c``, ``prior_c`` the fraction of opposite-class
samples, and ``support`` the number of calibration samples within ``d`` of
``c``.  Algebraically this is one minus the fraction of opposite-class
samples among those within ``d``.
"""
from __future__ import annotations

import bisect
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .projector import ProjectorParams, classify, project

SCHEMA_TABLE = "planverify.calibration/1"
LOW_SUPPORT = 5
CLASSES = ("unsafe", "safe")  # index = y_safe


class DegenerateCalibration(ValueError):
    pass


@dataclass(frozen=True)
class CentroidTable:
    """Distances of every calibration sample to one centroid."""

    centroid: tuple[float, ...]
    same: tuple[float, ...]  # sorted, samples of the centroid's class
    opposite: tuple[float, ...]  # sorted, samples of the other class

    @property
    def all(self) -> tuple[float, ...]:
        return tuple(sorted(self.same + self.opposite))

    def survival(self, d: float) -> float:
        """F_C(d): fraction of opposite-class distances strictly greater than ``d``."""
        if not self.opposite:
            return 1.0
        within = bisect.bisect_right(self.opposite, d)
        return (len(self.opposite) - within) / len(self.opposite)

    def support(self, d: float) -> int:
        return bisect.bisect_right(self.same, d) + bisect.bisect_right(self.opposite, d)


@dataclass(frozen=True)
class CalibrationTable:
    tables: tuple[CentroidTable, CentroidTable]  # index = y_safe class of the centroid
    n: int

    def centroid(self, k: int) -> np.ndarray:
        return np.asarray(self.tables[k].centroid, dtype=np.float64)

    @property
    def centroid_safe(self) -> np.ndarray:
        return self.centroid(1)

    @property
    def centroid_unsafe(self) -> np.ndarray:
        return self.centroid(0)

    def prior(self, k: int) -> float:
        """Pr[y_i != y_c]: share of calibration samples of the other class."""
        return len(self.tables[k].opposite) / self.n

    def to_doc(self) -> dict:
        return {
            "schema": SCHEMA_TABLE,
            "n": self.n,
            "centroids": {
                CLASSES[k]: {
                    "centroid": list(t.centroid),
                    "same": list(t.same),
                    "opposite": list(t.opposite),
                    "prior": self.prior(k),
                }
                for k, t in enumerate(self.tables)
            },
        }

    @classmethod
    def from_doc(cls, doc) -> "CalibrationTable":
        if doc.get("schema") != SCHEMA_TABLE:
            raise ValueError(f"unsupported calibration schema {doc.get('schema')!r}")
        tables = []
        for name in CLASSES:
            c = doc["centroids"][name]
            tables.append(CentroidTable(tuple(map(float, c["centroid"])), tuple(map(float, c["same"])), tuple(map(float, c["opposite"]))))
        table = cls((tables[0], tables[1]), int(doc["n"]))
        for t in table.tables:
            if list(t.same) != sorted(t.same) or list(t.opposite) != sorted(t.opposite):
                raise ValueError("calibration distances must be sorted")
        return table

    def dumps(self) -> str:
        return json.dumps(self.to_doc(), sort_keys=True, indent=1) + "\n"


@dataclass(frozen=True)
class GuaranteeResult:
    nearest_centroid: str
    d_prime: float
    p_hat: float
    support: int
    low_support: bool
    distances: tuple[float, float]  # (to unsafe centroid, to safe centroid)


def build_table(z: np.ndarray, y_safe: Sequence[int], y_hat_safe: Sequence[int]) -> CalibrationTable:
    """Calibration table from latent vectors and labels."""
    z = np.asarray(z, dtype=np.float64)
    y_safe = np.asarray(y_safe, dtype=int)
    y_hat = np.asarray(y_hat_safe, dtype=int)
    if z.ndim != 2 or len(z) != len(y_safe) or len(z) != len(y_hat):
        raise ValueError("z, y_safe and y_hat_safe must describe the same samples")
    tables = []
    for k in (0, 1):
        members = (y_safe == k) & (y_hat == k)
        if not members.any():
            raise DegenerateCalibration(f"no correctly classified {CLASSES[k]} calibration samples")
        c = z[members].mean(axis=0)
        d = np.sqrt(((z - c) ** 2).sum(axis=1))
        same = tuple(sorted(float(v) for v in d[y_safe == k]))
        opp = tuple(sorted(float(v) for v in d[y_safe != k]))
        tables.append(CentroidTable(tuple(float(v) for v in c), same, opp))
    return CalibrationTable((tables[0], tables[1]), len(z))


def calibrate(embeddings, y_safe: Sequence[int], params: ProjectorParams) -> CalibrationTable:
    z = project(params, np.asarray(embeddings, dtype=np.float64))
    y_hat = classify(params, z)
    return build_table(z, y_safe, y_hat)


def guarantee(table: CalibrationTable, z) -> GuaranteeResult:
    z = np.asarray(z, dtype=np.float64)
    d = [float(np.sqrt(((z - table.centroid(k)) ** 2).sum())) for k in (0, 1)]
    k = 1 if d[1] < d[0] else 0  # ties go to the unsafe centroid
    d_prime = d[k]
    t = table.tables[k]
    support = t.support(d_prime)
    denom = max(support, 1) / table.n
    p = 1.0 - (1.0 - t.survival(d_prime)) * table.prior(k) / denom
    p = min(1.0, max(0.0, p))
    return GuaranteeResult(CLASSES[k], d_prime, p, support, support < LOW_SUPPORT, (d[0], d[1]))


def complies(y: int, y_hat_safe: int) -> bool:
    """Final verdict: the interpreter's label, trusted when the latent classifier
    calls the sample safe and inverted when it calls it unsafe."""
    return (y_hat_safe == 1 and y == 1) or (y_hat_safe == 0 and y == 0)
