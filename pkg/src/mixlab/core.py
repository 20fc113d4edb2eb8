"""Degree sequences, the in-degree law, entropy, and total variation.

Two model kinds are supported: DCM prescribes both out- and in-degrees
and pairs edge stubs by a uniform matching; OCM prescribes out-degrees
only and each vertex picks distinct targets uniformly.  All degrees must
be at least 2, which keeps walk entropy positive and the graphs
aperiodic-in-distribution.
"""

from __future__ import annotations

import enum
import json
import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import (
    BadValue,
    DegreeTooLarge,
    DegreeTooSmall,
    LengthMismatch,
    MismatchedSums,
    ModelMismatch,
)

# Distributions are plain float64 vectors; mass bookkeeping lives at this
# tolerance everywhere (propagation drift, export checks).
DIST_TOL = 1e-9

# Degrees above this are legal but put the graphs far outside the sparse
# regime the estimators are calibrated for; we warn instead of refusing.
DEGREE_WARN_THRESHOLD = 50

MIN_DEGREE = 2


class ModelKind(enum.Enum):
    DCM = "dcm"
    OCM = "ocm"


@dataclass(frozen=True, eq=False)
class DegreeSequence:
    """Validated degree data plus the derived totals.

    ``in_degrees`` is None exactly for OCM sequences.  Arrays are stored
    read-only; treat instances as immutable.
    """

    model: ModelKind
    out_degrees: np.ndarray
    in_degrees: Optional[np.ndarray]
    n: int
    m: int
    delta: int

    @property
    def is_eulerian(self) -> bool:
        """True when every vertex has equal in- and out-degree (DCM only)."""
        if self.model is not ModelKind.DCM:
            return False
        return bool(np.array_equal(self.out_degrees, self.in_degrees))


def _as_degree_array(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.int64)
    if arr.ndim != 1 or arr.size == 0:
        raise LengthMismatch(f"{name} must be a nonempty 1-d sequence")
    return arr


def validate_degrees(model: ModelKind, out_degrees, in_degrees=None) -> DegreeSequence:
    """Check a raw degree prescription and package it as a DegreeSequence.

    Raises LengthMismatch, DegreeTooSmall, DegreeTooLarge, MismatchedSums,
    or ModelMismatch; warns when the max degree exceeds
    DEGREE_WARN_THRESHOLD.
    """
    model = ModelKind(model)
    out = _as_degree_array(out_degrees, "out_degrees")
    n = int(out.size)

    if model is ModelKind.DCM:
        if in_degrees is None:
            raise ModelMismatch("DCM requires in_degrees")
        inn = _as_degree_array(in_degrees, "in_degrees")
        if inn.size != n:
            raise LengthMismatch(
                f"out_degrees has length {n} but in_degrees has length {inn.size}"
            )
    else:
        if in_degrees is not None:
            raise ModelMismatch("OCM prescribes out-degrees only")
        inn = None

    if out.min() < MIN_DEGREE:
        raise DegreeTooSmall(f"all out-degrees must be >= {MIN_DEGREE}")
    if inn is not None and inn.min() < MIN_DEGREE:
        raise DegreeTooSmall(f"all in-degrees must be >= {MIN_DEGREE}")

    if model is ModelKind.OCM and out.max() > n:
        raise DegreeTooLarge(
            f"out-degree {int(out.max())} exceeds vertex count {n}"
        )

    if model is ModelKind.DCM:
        m = int(out.sum())
        if m != int(inn.sum()):
            raise MismatchedSums(
                f"out-degree total {m} != in-degree total {int(inn.sum())}"
            )
        delta = int(max(out.max(), inn.max()))
    else:
        m = int(out.sum())
        delta = int(out.max())

    if delta > DEGREE_WARN_THRESHOLD:
        warnings.warn(
            f"max degree {delta} exceeds {DEGREE_WARN_THRESHOLD}; "
            "estimator calibrations assume bounded degrees",
            stacklevel=2,
        )

    out = out.copy()
    out.setflags(write=False)
    if inn is not None:
        inn = inn.copy()
        inn.setflags(write=False)
    return DegreeSequence(model=model, out_degrees=out, in_degrees=inn,
                          n=n, m=m, delta=delta)


def load_degree_sequence(source) -> DegreeSequence:
    """Build a DegreeSequence from a JSON document or an already-parsed dict.

    Expected shape: {"model": "dcm"|"ocm", "out_degrees": [...],
    "in_degrees": [...]?}.
    """
    if isinstance(source, (str, bytes)):
        doc = json.loads(source)
    elif hasattr(source, "read"):
        doc = json.load(source)
    else:
        doc = source
    if "model" not in doc or "out_degrees" not in doc:
        raise BadValue("degree document needs 'model' and 'out_degrees'")
    return validate_degrees(
        ModelKind(doc["model"]), doc["out_degrees"], doc.get("in_degrees")
    )


def in_degree_distribution(seq: DegreeSequence) -> np.ndarray:
    """The limiting one-step law: in-degree biased for DCM, uniform for OCM."""
    if seq.model is ModelKind.DCM:
        return seq.in_degrees.astype(np.float64) / float(seq.m)
    return np.full(seq.n, 1.0 / seq.n)


@dataclass(frozen=True)
class EntropicScale:
    """Walk entropy per step and the matching mixing-time scale."""

    entropy: float
    entropic_time: float


def entropic_scale(seq: DegreeSequence) -> EntropicScale:
    """Entropy H = sum_x mu(x) log d_x over the in-degree law, and log(n)/H.

    H always lands in [log 2, log delta] because degrees are >= 2.
    """
    mu = in_degree_distribution(seq)
    h = float(np.dot(mu, np.log(seq.out_degrees.astype(np.float64))))
    assert math.log(MIN_DEGREE) - 1e-12 <= h <= math.log(seq.delta) + 1e-12
    return EntropicScale(entropy=h, entropic_time=math.log(seq.n) / h)


def tv_distance(a, b) -> float:
    """Total variation distance: half the L1 difference of two mass vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatch(f"shape mismatch {a.shape} vs {b.shape}")
    return 0.5 * float(np.abs(a - b).sum())


def assert_distribution(p, tol: float = DIST_TOL) -> np.ndarray:
    """Validate a probability vector; returns it as float64."""
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise BadValue("distribution must be 1-d")
    if p.min() < -tol:
        raise BadValue(f"negative mass {p.min():g}")
    if abs(p.sum() - 1.0) > tol:
        raise BadValue(f"mass {p.sum():.15g} not within {tol:g} of 1")
    return p
