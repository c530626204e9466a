"""
LQ social-optimization model: matrices, initial laws, validation.

dX^i = (A X^i + B u^i + G X^(-i)) dt + D dW^i + D0 dW^0
J_i  = E ∫ |X^i - Γ X^(-i) - η|²_Q + u^iᵀ R u^i dt + E |X^i_T - Γ_f X^(-i)_T - η_f|²_{Q_f}
"""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Optional

import numpy as np
from scipy import linalg

from ..core.constants import SYMMETRY_TOLERANCE, InitialKind
from ..core.exceptions import ConfigError, ModelValidationError

logger = logging.getLogger(__name__)

_MATRIX_FIELDS = ("A", "B", "G", "D", "D0", "Q", "R", "Gamma", "Qf", "Gammaf")
_VECTOR_FIELDS = ("eta", "etaf")


def _as_matrix(value: Any) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim == 0:
        arr = arr.reshape(1, 1)
    return arr


@dataclass(frozen=True)
class LqModel:
    """All coefficients of the LQ model plus the horizon."""

    A: np.ndarray
    B: np.ndarray
    G: np.ndarray
    D: np.ndarray
    D0: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Gamma: np.ndarray
    eta: np.ndarray
    Qf: np.ndarray
    Gammaf: np.ndarray
    etaf: np.ndarray
    T: float

    def __post_init__(self):
        for name in _MATRIX_FIELDS:
            object.__setattr__(self, name, _as_matrix(getattr(self, name)))
        for name in _VECTOR_FIELDS:
            object.__setattr__(self, name, np.array(getattr(self, name), dtype=float).reshape(-1))
        object.__setattr__(self, "T", float(self.T))
        for name in _MATRIX_FIELDS + _VECTOR_FIELDS:
            getattr(self, name).setflags(write=False)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def n1(self) -> int:
        return self.B.shape[1]

    @property
    def n2(self) -> int:
        return self.D.shape[1]

    @property
    def n3(self) -> int:
        return self.D0.shape[1]

    @cached_property
    def R_inv_BT(self) -> np.ndarray:
        """R⁻¹Bᵀ through a Cholesky solve."""
        return linalg.cho_solve(linalg.cho_factor(self.R), self.B.T)

    @cached_property
    def K(self) -> np.ndarray:
        """BR⁻¹Bᵀ."""
        k = self.B @ self.R_inv_BT
        return 0.5 * (k + k.T)

    @cached_property
    def DDT(self) -> np.ndarray:
        return self.D @ self.D.T

    @cached_property
    def D0D0T(self) -> np.ndarray:
        return self.D0 @ self.D0.T

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LqModel":
        """Build from a mapping of nested row-major lists (the config schema)."""
        missing = [k for k in _MATRIX_FIELDS + _VECTOR_FIELDS + ("T",) if k not in data]
        if missing:
            raise ConfigError(f"model section missing keys: {missing}", {"missing": missing})
        return cls(**{k: data[k] for k in _MATRIX_FIELDS + _VECTOR_FIELDS + ("T",)})

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {k: getattr(self, k).tolist() for k in _MATRIX_FIELDS + _VECTOR_FIELDS}
        out["T"] = self.T
        return out

    def replace(self, **changes: Any) -> "LqModel":
        data = {k: getattr(self, k) for k in _MATRIX_FIELDS + _VECTOR_FIELDS + ("T",)}
        data.update(changes)
        return LqModel(**data)


@dataclass
class ValidationReport:
    """Outcome of `validate`: empty violation list means pass."""

    violations: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    def raise_if_failed(self) -> None:
        if self.violations:
            raise ModelValidationError(
                f"LQ model validation failed: {'; '.join(self.violations)}", self.violations
            )

    def to_dict(self) -> Dict[str, Any]:
        return {"passed": self.passed, "violations": list(self.violations)}


def _check_shape(errors: List[str], name: str, arr: np.ndarray, shape: tuple) -> bool:
    if arr.shape != shape:
        errors.append(f"dimension mismatch: {name} has shape {arr.shape}, expected {shape}")
        return False
    return True


def _check_symmetric(errors: List[str], name: str, arr: np.ndarray) -> bool:
    scale = max(1.0, float(np.linalg.norm(arr)))
    if np.max(np.abs(arr - arr.T)) > SYMMETRY_TOLERANCE * scale:
        errors.append(f"{name} asymmetric")
        return False
    return True


def _check_psd(errors: List[str], name: str, arr: np.ndarray) -> None:
    scale = max(1.0, float(np.linalg.norm(arr)))
    smallest = float(np.min(np.linalg.eigvalsh(0.5 * (arr + arr.T))))
    if smallest < -SYMMETRY_TOLERANCE * scale:
        errors.append(f"{name} not positive semidefinite (smallest eigenvalue {smallest:.3e})")


def validate(model: LqModel) -> ValidationReport:
    """Classify a model as valid or list every violated invariant. Never raises."""
    errors: List[str] = []
    try:
        n = model.A.shape[0]
        shapes_ok = _check_shape(errors, "A", model.A, (n, n))
        n1 = model.B.shape[1]
        shapes_ok &= _check_shape(errors, "B", model.B, (n, n1))
        shapes_ok &= _check_shape(errors, "G", model.G, (n, n))
        shapes_ok &= _check_shape(errors, "D", model.D, (n, model.D.shape[1]))
        shapes_ok &= _check_shape(errors, "D0", model.D0, (n, model.D0.shape[1]))
        shapes_ok &= _check_shape(errors, "Q", model.Q, (n, n))
        shapes_ok &= _check_shape(errors, "R", model.R, (n1, n1))
        shapes_ok &= _check_shape(errors, "Gamma", model.Gamma, (n, n))
        shapes_ok &= _check_shape(errors, "eta", model.eta, (n,))
        shapes_ok &= _check_shape(errors, "Qf", model.Qf, (n, n))
        shapes_ok &= _check_shape(errors, "Gammaf", model.Gammaf, (n, n))
        shapes_ok &= _check_shape(errors, "etaf", model.etaf, (n,))

        for name in _MATRIX_FIELDS + _VECTOR_FIELDS:
            if not np.all(np.isfinite(getattr(model, name))):
                errors.append(f"{name} has non-finite entries")
        if not np.isfinite(model.T) or model.T <= 0:
            errors.append(f"horizon T must be positive, got {model.T}")

        if shapes_ok and not errors:
            for name in ("Q", "Qf"):
                if _check_symmetric(errors, name, getattr(model, name)):
                    _check_psd(errors, name, getattr(model, name))
            if _check_symmetric(errors, "R", model.R):
                try:
                    linalg.cholesky(model.R, lower=True)
                except linalg.LinAlgError:
                    errors.append("R not positive definite")
    except Exception as e:  # validate is total
        errors.append(f"model could not be inspected: {e}")

    if errors:
        logger.debug(f"LQ model validation found {len(errors)} violation(s)")
    return ValidationReport(errors)


@dataclass(frozen=True)
class InitialDistribution:
    """Law of the i.i.d. initial states."""

    kind: InitialKind
    mean: np.ndarray
    covariance: Optional[np.ndarray] = None
    half_widths: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "kind", InitialKind(self.kind))
        object.__setattr__(self, "mean", np.array(self.mean, dtype=float).reshape(-1))
        if self.covariance is not None:
            object.__setattr__(self, "covariance", _as_matrix(self.covariance))
        if self.half_widths is not None:
            object.__setattr__(self, "half_widths", np.array(self.half_widths, dtype=float).reshape(-1))
        errors = self._validate_without_exception()
        if errors:
            raise ConfigError(f"InitialDistribution validation failed: {'; '.join(errors)}", {"errors": errors})

    def _validate_without_exception(self) -> List[str]:
        errors = []
        n = self.mean.size
        if not np.all(np.isfinite(self.mean)):
            errors.append("mean must be finite")
        if self.kind == InitialKind.GAUSSIAN:
            if self.covariance is None:
                errors.append("gaussian initial law needs a covariance")
            elif self.covariance.shape != (n, n):
                errors.append(f"covariance must be {n}x{n}")
            else:
                _check_symmetric(errors, "covariance", self.covariance)
                if not errors:
                    _check_psd(errors, "covariance", self.covariance)
        elif self.kind == InitialKind.UNIFORM_BOX:
            if self.half_widths is None or self.half_widths.shape != (n,):
                errors.append(f"uniform-box initial law needs {n} half-widths")
            elif np.any(self.half_widths < 0):
                errors.append("half-widths must be non-negative")
        return errors

    @property
    def n(self) -> int:
        return self.mean.size

    @cached_property
    def _factor(self) -> np.ndarray:
        # symmetric square root; works for singular covariances
        w, v = np.linalg.eigh(self.covariance)
        return v * np.sqrt(np.clip(w, 0.0, None))

    @classmethod
    def point_mass(cls, mean: Any) -> "InitialDistribution":
        return cls(kind=InitialKind.POINT_MASS, mean=mean)

    @classmethod
    def gaussian(cls, mean: Any, covariance: Any) -> "InitialDistribution":
        return cls(kind=InitialKind.GAUSSIAN, mean=mean, covariance=covariance)

    @classmethod
    def uniform_box(cls, mean: Any, half_widths: Any) -> "InitialDistribution":
        return cls(kind=InitialKind.UNIFORM_BOX, mean=mean, half_widths=half_widths)

    def second_moment(self) -> float:
        """E|X_0|²."""
        m2 = float(self.mean @ self.mean)
        if self.kind == InitialKind.GAUSSIAN:
            m2 += float(np.trace(self.covariance))
        elif self.kind == InitialKind.UNIFORM_BOX:
            m2 += float(np.sum(self.half_widths**2) / 3.0)
        return m2


def sample_initial_states(dist: InitialDistribution, N: int, rng: np.random.Generator) -> np.ndarray:
    """Draw N i.i.d. initial states, shape (N, n). Deterministic in the stream."""
    if N < 2:
        raise ConfigError(f"need at least two agents, got N={N}")
    n = dist.n
    if dist.kind == InitialKind.POINT_MASS:
        return np.tile(dist.mean, (N, 1))
    if dist.kind == InitialKind.GAUSSIAN:
        z = rng.standard_normal((N, n))
        return dist.mean + z @ dist._factor.T
    u = rng.uniform(-1.0, 1.0, size=(N, n))
    return dist.mean + u * dist.half_widths
