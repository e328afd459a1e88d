"""Homogeneous coagulation kernels ``sum_k w_k (x^a_k y^b_k + x^b_k y^a_k)``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConstraintViolation, DomainError

ALPHA_NEG = "alpha_neg"
ALPHA_ZERO = "alpha_zero"
ALPHA_POS = "alpha_pos"


@dataclass(frozen=True)
class KernelTerm:
    alpha: float
    beta: float
    weight: float = 1.0

    @property
    def lam(self) -> float:
        return self.alpha + self.beta


def validate(alpha: float, beta: float, weight: float = 1.0) -> KernelTerm:
    """Build a term, checking ``-1 < alpha <= beta < 1`` and ``alpha + beta in (-1, 1)``."""
    alpha, beta, weight = float(alpha), float(beta), float(weight)
    if not -1.0 < alpha:
        raise ConstraintViolation(f"-1 < alpha violated (alpha={alpha})")
    if not alpha <= beta:
        raise ConstraintViolation(f"alpha <= beta violated (alpha={alpha}, beta={beta})")
    if not beta < 1.0:
        raise ConstraintViolation(f"beta < 1 violated (beta={beta})")
    lam = alpha + beta
    if not -1.0 < lam < 1.0:
        raise ConstraintViolation(f"lambda = alpha + beta in (-1, 1) violated (lambda={lam})")
    if not weight > 0:
        raise ConstraintViolation(f"weight > 0 violated (weight={weight})")
    return KernelTerm(alpha, beta, weight)


def _pow(x, e):
    # exact short-circuit for exponent 0; exp/log elsewhere
    if e == 0.0:
        return np.ones_like(x)
    return np.exp(e * np.log(x))


@dataclass(frozen=True)
class KernelSpec:
    """Nonempty list of terms sharing one homogeneity degree."""

    terms: tuple[KernelTerm, ...]

    def __post_init__(self):
        if not self.terms:
            raise ConstraintViolation("a kernel needs at least one term")
        lams = {t.lam for t in self.terms}
        if len(lams) != 1:
            raise ConstraintViolation(f"terms have different homogeneity degrees {sorted(lams)}")

    @classmethod
    def single(cls, alpha: float, beta: float, weight: float = 1.0) -> "KernelSpec":
        return cls((validate(alpha, beta, weight),))

    @classmethod
    def from_terms(cls, terms) -> "KernelSpec":
        """From dicts ``{"alpha", "beta", "weight"}`` or ``(alpha, beta[, weight])`` tuples."""
        out = []
        for t in terms:
            if isinstance(t, KernelTerm):
                out.append(validate(t.alpha, t.beta, t.weight))
            elif isinstance(t, dict):
                out.append(validate(t["alpha"], t["beta"], t.get("weight", 1.0)))
            else:
                out.append(validate(*t))
        return cls(tuple(out))

    @property
    def lam(self) -> float:
        return self.terms[0].lam

    @property
    def alpha_eff(self) -> float:
        return min(t.alpha for t in self.terms)

    @property
    def beta_eff(self) -> float:
        return max(t.beta for t in self.terms)

    @property
    def kernel_class(self) -> str:
        a = self.alpha_eff
        if a < 0:
            return ALPHA_NEG
        if a == 0:
            return ALPHA_ZERO
        return ALPHA_POS

    def __call__(self, x, y):
        return evaluate(self, x, y)

    def to_dict(self) -> dict:
        return {"terms": [{"alpha": t.alpha, "beta": t.beta, "weight": t.weight} for t in self.terms]}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls.from_terms(d["terms"])


def evaluate(k: KernelSpec, x, y):
    """``a(x, y)``; works elementwise on arrays. Symmetric in ``(x, y)`` by construction."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise DomainError("kernel is defined for x, y > 0 only")
    out = np.zeros(np.broadcast(x, y).shape)
    for t in k.terms:
        # summing the two products in a fixed (sorted) order keeps a(x,y) == a(y,x) bitwise
        p = _pow(x, t.alpha) * _pow(y, t.beta)
        q = _pow(x, t.beta) * _pow(y, t.alpha)
        out = out + t.weight * (np.minimum(p, q) + np.maximum(p, q))
    return out if out.ndim else float(out)
