"""Linear SDE model dx = (Ax + Bu + F nu) dt + [C_1 x, ..., C_l1 x, D] dW.

The multiplicative-noise map is kept as the list of matrices C_i; it is
never materialized as a function.
"""
from __future__ import annotations

import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import DimensionError, ParseError

UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class PowerConstraint:
    """Bound on (1/t) * integral_0^t E||u||^2; ``math.inf`` means unbounded."""

    u_hat: float

    def __post_init__(self):
        u = float(self.u_hat)
        if math.isnan(u) or u < 0:
            raise ValueError(f"u_hat must be >= 0, got {self.u_hat!r}")
        object.__setattr__(self, "u_hat", u)

    @classmethod
    def parse(cls, value) -> "PowerConstraint":
        if isinstance(value, cls):
            return value
        if isinstance(value, str):
            if value.strip().lower() == UNBOUNDED:
                return cls(math.inf)
            return cls(float(value))
        return cls(float(value))

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.u_hat)

    def to_json(self):
        return UNBOUNDED if self.unbounded else self.u_hat


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SystemModel:
    A: np.ndarray
    B: np.ndarray
    C: tuple = ()
    D: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    F: np.ndarray | None = None
    u_hat: PowerConstraint | None = None
    label: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(np.atleast_2d(self.A)))
        object.__setattr__(self, "B", _frozen(_as_2d_cols(self.B)))
        object.__setattr__(self, "C", tuple(_frozen(np.atleast_2d(c)) for c in self.C))
        object.__setattr__(self, "D", _frozen(_as_2d_cols(self.D)))
        if self.F is not None:
            object.__setattr__(self, "F", _frozen(_as_2d_cols(self.F)))
        if self.u_hat is not None:
            object.__setattr__(self, "u_hat", PowerConstraint.parse(self.u_hat))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def ell1(self) -> int:
        return len(self.C)

    @property
    def ell2(self) -> int:
        return self.D.shape[1] if self.D.ndim == 2 else 0

    @property
    def additive_only(self) -> bool:
        """True when the multiplicative map is identically zero."""
        return all(not np.any(c) for c in self.C)

    def replace(self, **changes) -> "SystemModel":
        kw = dict(A=self.A, B=self.B, C=self.C, D=self.D, F=self.F,
                  u_hat=self.u_hat, label=self.label)
        kw.update(changes)
        return SystemModel(**kw)

    def to_dict(self) -> dict:
        doc = {
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": [c.tolist() for c in self.C],
            "D": self.D.tolist(),
        }
        if self.F is not None:
            doc["F"] = self.F.tolist()
        if self.u_hat is not None:
            doc["u_hat"] = self.u_hat.to_json()
        if self.label is not None:
            doc["label"] = self.label
        return doc

    def digest(self) -> str:
        """SHA-256 over the canonical encoding of the matrices (label and u_hat excluded)."""
        doc = {k: v for k, v in self.to_dict().items() if k not in ("label", "u_hat")}
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _as_2d_cols(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if arr.size else arr.reshape(0, 0)
    return arr


def validate(model: SystemModel) -> list[str]:
    """Human-readable invariant violations; empty when the model is well formed."""
    issues = []
    A, B, D = model.A, model.B, model.D
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        issues.append(f"A must be square, got shape {A.shape}")
        return issues
    n = A.shape[0]
    if n == 0:
        issues.append("A is empty")
    if B.ndim != 2 or B.shape[0] != n:
        issues.append(f"B must have {n} rows, got shape {B.shape}")
    for i, c in enumerate(model.C):
        if c.shape != (n, n):
            issues.append(f"C[{i}] must be {n}x{n}, got shape {c.shape}")
    if D.ndim != 2 or D.size == 0 or D.shape[1] == 0:
        issues.append("D must have at least one column (ell2 >= 1)")
    elif D.shape[0] != n:
        issues.append(f"D must have {n} rows, got shape {D.shape}")
    if model.F is not None and (model.F.ndim != 2 or model.F.shape[0] != n):
        issues.append(f"F must have {n} rows, got shape {model.F.shape}")

    named = [("A", A), ("B", B), ("D", D)] + [(f"C[{i}]", c) for i, c in enumerate(model.C)]
    if model.F is not None:
        named.append(("F", model.F))
    for name, arr in named:
        if arr.size and not np.all(np.isfinite(arr)):
            issues.append(f"{name} has a non-finite entry")
    return issues


def check(model: SystemModel) -> SystemModel:
    """Raise DimensionError/ValueError for the first class of violation found."""
    issues = validate(model)
    if not issues:
        return model
    ell2_zero = [s for s in issues if "ell2" in s]
    nonfinite = [s for s in issues if "non-finite" in s]
    shape = [s for s in issues if s not in ell2_zero and s not in nonfinite]
    if ell2_zero:
        raise ValueError("; ".join(ell2_zero))
    if shape:
        raise DimensionError("; ".join(shape))
    raise ValueError("; ".join(nonfinite))


def _matrix(doc, key, required=True):
    if key not in doc:
        if required:
            raise ParseError(f"missing key {key!r}")
        return None
    val = doc[key]
    try:
        arr = np.array(val, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{key!r} is not a numeric matrix: {exc}") from exc
    if arr.ndim == 1 and arr.size:
        arr = arr.reshape(-1, 1)
    if arr.ndim == 1:
        arr = arr.reshape(0, 0)
    if arr.ndim != 2:
        raise ParseError(f"{key!r} must be an array of rows")
    return arr


def from_dict(doc) -> SystemModel:
    if not isinstance(doc, dict):
        raise ParseError("model document must be an object")
    A = _matrix(doc, "A")
    B = _matrix(doc, "B")
    D = _matrix(doc, "D")
    F = _matrix(doc, "F", required=False)
    raw_c = doc.get("C", [])
    if not isinstance(raw_c, list):
        raise ParseError("'C' must be a list of matrices")
    C = []
    for i, c in enumerate(raw_c):
        try:
            arr = np.array(c, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ParseError(f"C[{i}] is not a numeric matrix: {exc}") from exc
        if arr.ndim != 2:
            raise ParseError(f"C[{i}] must be an array of rows")
        C.append(arr)
    u_hat = doc.get("u_hat")
    if u_hat is not None:
        try:
            u_hat = PowerConstraint.parse(u_hat)
        except ValueError as exc:
            raise ParseError(f"bad u_hat: {exc}") from exc
    label = doc.get("label")
    return check(SystemModel(A=A, B=B, C=tuple(C), D=D, F=F, u_hat=u_hat, label=label))


def loads(text: str) -> SystemModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed model document: {exc}") from exc
    return from_dict(doc)


def load_model(path) -> SystemModel:
    """Load and validate a model file; ``-`` reads standard input."""
    if str(path) == "-":
        return loads(sys.stdin.read())
    return loads(Path(path).read_text(encoding="utf-8"))


def save_model(model: SystemModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), indent=2) + "\n", encoding="utf-8")


# -- reference systems -------------------------------------------------------

def van_der_pol(a: float, c1: float = 0.0, c2: float = 0.0, d: float = 1.0,
                label: str | None = None) -> SystemModel:
    """Linearized forced Van der Pol oscillator with two multiplicative channels.

    Channels with zero coefficient are dropped so that c1 = c2 = 0 gives an
    additive-only model.
    """
    A = [[0.0, 1.0], [-1.0, a]]
    C = []
    if c1 != 0:
        C.append([[0.0, 0.0], [c1, 0.0]])
    if c2 != 0:
        C.append([[0.0, 0.0], [0.0, c2]])
    return SystemModel(A=A, B=[[0.0], [1.0]], C=tuple(C), D=[[d], [d]], label=label)


def satellite(zeta: float, label: str | None = None) -> SystemModel:
    """Equatorial-plane satellite dynamics with identity multiplicative noise."""
    z = zeta
    A = [[0, 1, 0, 0], [3 * z * z, 0, 0, 2 * z], [0, 0, 0, 1], [0, -2 * z, 0, 0]]
    B = [[0, 0], [1, 0], [0, 0], [0, 1]]
    return SystemModel(A=A, B=B, C=(np.eye(4),), D=B, label=label)


def scalar(A: float, B: float, C1: float, D: float, label: str | None = None) -> SystemModel:
    C = ([[C1]],) if C1 != 0 else ()
    return SystemModel(A=[[A]], B=[[B]], C=C, D=[[D]], label=label)


TABLE1 = {
    1: dict(a=-0.5, c1=2.0, c2=2.0, d=1.0),
    2: dict(a=1.5, c1=2.0, c2=2.0, d=1.0),
    3: dict(a=1.5, c1=2.0, c2=0.0, d=1.0),
    4: dict(a=1.5, c1=0.0, c2=2.0, d=1.0),
    5: dict(a=1.5, c1=0.0, c2=0.0, d=1.0),
    6: dict(a=1.5, c1=0.0, c2=0.0, d=2.0),
}


def table1_setting(k: int) -> SystemModel:
    return van_der_pol(**TABLE1[k], label=f"table1-setting{k}")


def bundled_config(name: str) -> Path:
    """Path of a bundled example config, e.g. ``bundled_config("table1_setting5")``."""
    ref = resources.files("instab") / "configs" / f"{name}.json"
    return Path(str(ref))


def bundled_names() -> list[str]:
    root = resources.files("instab") / "configs"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))
