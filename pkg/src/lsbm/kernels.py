"""Dot-product Gaussian-process kernels over finite function bases.

Every covariance used by the clustering model has the form
``xi(t, u) = phi(t)' Delta phi(u)`` for a finite basis ``phi`` and a
symmetric positive-definite scaling matrix ``Delta``.  The basis families
implemented here are monomial sets (constant, linear, polynomial) and the
cubic truncated-power spline basis.  A special marker spec denotes an
output dimension that equals the latent coordinate itself, with no free
coefficients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "BasisFamily",
    "KernelSpec",
    "KernelAssignment",
    "identity_spec",
    "phi",
    "design_matrix",
    "gram",
    "zellner_delta",
]

_VARIANTS = (
    "constant",
    "homogeneous_linear",
    "affine_linear",
    "polynomial",
    "homogeneous_polynomial",
    "truncated_power_spline",
)


@dataclass(frozen=True)
class BasisFamily:
    """A finite set of basis functions of a scalar coordinate.

    The basis is a list of monomials ``t**p`` optionally followed by cubic
    truncated-power terms ``max(t - knot, 0)**3``, one per knot.

    Parameters
    ----------
    variant : str
        One of ``constant``, ``homogeneous_linear``, ``affine_linear``,
        ``polynomial``, ``homogeneous_polynomial``,
        ``truncated_power_spline``.
    degree : int, optional
        Polynomial degree, required for the two polynomial variants.
    intercept : bool
        Whether ``polynomial`` includes the constant term.  Ignored by the
        other variants.
    knots : tuple of float
        Strictly increasing knots, required for the spline variant.
    """

    variant: str
    degree: int | None = None
    intercept: bool = True
    knots: tuple[float, ...] = ()

    def __post_init__(self):
        if self.variant not in _VARIANTS:
            raise ValueError(f"unknown basis variant {self.variant!r}")
        if self.variant in ("polynomial", "homogeneous_polynomial"):
            if self.degree is None or self.degree < 1:
                raise ValueError(f"{self.variant} requires degree >= 1")
        elif self.degree is not None:
            raise ValueError(f"{self.variant} does not take a degree")
        if self.variant == "truncated_power_spline":
            if len(self.knots) < 1:
                raise ValueError("spline basis requires at least one knot")
            object.__setattr__(self, "knots", tuple(float(t) for t in self.knots))
            if np.any(np.diff(self.knots) <= 0):
                raise ValueError("spline knots must be strictly increasing")
        elif self.knots:
            raise ValueError(f"{self.variant} does not take knots")

    @classmethod
    def constant(cls) -> "BasisFamily":
        return cls("constant")

    @classmethod
    def homogeneous_linear(cls) -> "BasisFamily":
        return cls("homogeneous_linear")

    @classmethod
    def affine_linear(cls) -> "BasisFamily":
        return cls("affine_linear")

    @classmethod
    def polynomial(cls, degree: int, intercept: bool = True) -> "BasisFamily":
        return cls("polynomial", degree=degree, intercept=intercept)

    @classmethod
    def homogeneous_polynomial(cls, degree: int) -> "BasisFamily":
        return cls("homogeneous_polynomial", degree=degree)

    @classmethod
    def truncated_power_spline(cls, knots) -> "BasisFamily":
        return cls("truncated_power_spline", knots=tuple(knots))

    @property
    def powers(self) -> tuple[int, ...]:
        """Monomial exponents, in evaluation order."""
        if self.variant == "constant":
            return (0,)
        if self.variant == "homogeneous_linear":
            return (1,)
        if self.variant == "affine_linear":
            return (0, 1)
        if self.variant == "polynomial":
            start = 0 if self.intercept else 1
            return tuple(range(start, self.degree + 1))
        if self.variant == "homogeneous_polynomial":
            return tuple(range(1, self.degree + 1))
        return (1, 2, 3)  # spline: cubic monomials then one term per knot

    @property
    def size(self) -> int:
        """Number of basis functions."""
        return len(self.powers) + len(self.knots)

    def to_config(self) -> dict:
        cfg = {"variant": self.variant}
        if self.degree is not None:
            cfg["degree"] = self.degree
            if self.variant == "polynomial":
                cfg["intercept"] = self.intercept
        if self.knots:
            cfg["knots"] = list(self.knots)
        return cfg

    @classmethod
    def from_config(cls, cfg: dict) -> "BasisFamily":
        return cls(
            cfg["variant"],
            degree=cfg.get("degree"),
            intercept=cfg.get("intercept", True),
            knots=tuple(cfg.get("knots", ())),
        )


def design_matrix(basis: BasisFamily, theta) -> np.ndarray:
    """Evaluate the basis on a vector of coordinates.

    Returns the ``(len(theta), basis.size)`` matrix whose i-th row is the
    basis evaluated at ``theta[i]``.
    """
    t = np.atleast_1d(np.asarray(theta, dtype=float))
    cols = [t**p for p in basis.powers]
    for tau in basis.knots:
        cols.append(np.clip(t - tau, 0.0, None) ** 3)
    return np.column_stack(cols) if cols else np.empty((t.size, 0))


def phi(basis: BasisFamily, theta: float) -> np.ndarray:
    """Evaluate the basis at one coordinate, returning a length-q vector."""
    if not np.isfinite(theta):
        raise ValueError("basis argument must be finite")
    return design_matrix(basis, [theta])[0]


@dataclass(frozen=True, eq=False)
class KernelSpec:
    """A dot-product kernel: a basis plus its scaling matrix.

    ``delta`` is either a concrete symmetric positive-definite matrix of
    shape ``(basis.size, basis.size)`` or the string ``"zellner"``, meaning
    the matrix is derived from the data at sampler initialisation (see
    :func:`zellner_delta`).  ``basis=None`` marks the fixed first dimension
    whose latent function is the identity, with no free coefficients.
    """

    basis: BasisFamily | None
    delta: object = "zellner"  # np.ndarray | "zellner" | None (identity)

    def __post_init__(self):
        if self.basis is None:
            if self.delta is not None:
                raise ValueError("identity spec takes no scaling matrix")
            return
        if isinstance(self.delta, str):
            if self.delta != "zellner":
                raise ValueError(f"unknown delta policy {self.delta!r}")
            return
        d = np.asarray(self.delta, dtype=float)
        q = self.basis.size
        if d.shape != (q, q):
            raise ValueError(f"delta must be {q}x{q}, got {d.shape}")
        if not np.allclose(d, d.T):
            raise ValueError("delta must be symmetric")
        if np.linalg.eigvalsh(d).min() <= 0:
            raise ValueError("delta must be positive definite")
        object.__setattr__(self, "delta", d)

    @property
    def is_identity(self) -> bool:
        return self.basis is None

    @property
    def is_resolved(self) -> bool:
        return self.is_identity or isinstance(self.delta, np.ndarray)

    def delta_matrix(self) -> np.ndarray:
        if self.is_identity:
            raise ValueError("identity spec has no scaling matrix")
        if not isinstance(self.delta, np.ndarray):
            raise ValueError("delta not resolved yet; initialise the sampler first")
        return self.delta

    def with_delta(self, delta: np.ndarray) -> "KernelSpec":
        return KernelSpec(self.basis, np.asarray(delta, dtype=float))

    def __eq__(self, other):
        if not isinstance(other, KernelSpec):
            return NotImplemented
        if self.is_identity or other.is_identity:
            return self.is_identity and other.is_identity
        if self.basis != other.basis:
            return False
        a, b = self.delta, other.delta
        if isinstance(a, str) or isinstance(b, str):
            return isinstance(a, str) and isinstance(b, str) and a == b
        return np.array_equal(a, b)

    def __repr__(self):
        if self.is_identity:
            return "KernelSpec(identity)"
        dd = "zellner" if isinstance(self.delta, str) else "matrix"
        return f"KernelSpec({self.basis.variant}, delta={dd})"

    def to_config(self) -> dict:
        if self.is_identity:
            return {"kind": "identity"}
        cfg = self.basis.to_config()
        cfg["delta"] = "zellner" if isinstance(self.delta, str) else np.asarray(self.delta).tolist()
        return cfg

    @classmethod
    def from_config(cls, cfg: dict) -> "KernelSpec":
        if cfg.get("kind") == "identity":
            return identity_spec()
        basis = BasisFamily.from_config(cfg)
        delta = cfg.get("delta", "zellner")
        if not isinstance(delta, str):
            delta = np.asarray(delta, dtype=float)
        return cls(basis, delta)


def identity_spec() -> KernelSpec:
    """The marker spec for the fixed identity dimension."""
    return KernelSpec(basis=None, delta=None)


def gram(spec: KernelSpec, theta_a, theta_b=None) -> np.ndarray:
    """Kernel matrix ``Phi(a) Delta Phi(b)'`` between two coordinate vectors.

    With ``theta_b`` omitted the matrix is the (symmetric PSD) Gram matrix
    of ``theta_a`` against itself.
    """
    if spec.is_identity:
        raise ValueError("identity dimension has no kernel matrix")
    delta = spec.delta_matrix()
    pa = design_matrix(spec.basis, theta_a)
    pb = pa if theta_b is None else design_matrix(spec.basis, theta_b)
    return pa @ delta @ pb.T


def zellner_delta(basis: BasisFamily, theta_all) -> np.ndarray:
    """Data-driven scaling matrix ``n^2 (Phi'Phi)^{-1}``.

    ``theta_all`` must hold the coordinates of all n nodes; a small jitter
    proportional to ``trace(Phi'Phi)`` keeps near-duplicate coordinates from
    producing a singular design.
    """
    t = np.asarray(theta_all, dtype=float)
    n = t.size
    q = basis.size
    if n < q:
        raise ValueError(f"need at least q={q} coordinates, got {n}")
    p = design_matrix(basis, t)
    g = p.T @ p
    eps = 1e-8 * np.trace(g) / q
    try:
        delta = n**2 * np.linalg.inv(g + eps * np.eye(q))
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            "rank-deficient design: coordinate configuration is degenerate"
        ) from exc
    delta = (delta + delta.T) / 2.0
    if not np.all(np.isfinite(delta)) or np.linalg.eigvalsh(delta).min() <= 0:
        raise np.linalg.LinAlgError(
            "rank-deficient design: coordinate configuration is degenerate"
        )
    return delta


@dataclass(frozen=True)
class KernelAssignment:
    """One kernel spec per (community, output dimension).

    ``communities[k]`` is the tuple of specs for community k, one per
    embedding dimension.  If any community uses the identity marker on the
    first dimension, all communities must, and the marker is only legal
    there.
    """

    communities: tuple[tuple[KernelSpec, ...], ...]

    def __post_init__(self):
        comms = tuple(tuple(c) for c in self.communities)
        object.__setattr__(self, "communities", comms)
        if not comms:
            raise ValueError("assignment needs at least one community")
        d = len(comms[0])
        if d == 0:
            raise ValueError("assignment needs at least one dimension")
        ident = comms[0][0].is_identity
        for specs in comms:
            if len(specs) != d:
                raise ValueError("all communities must cover the same dimensions")
            if specs[0].is_identity != ident:
                raise ValueError(
                    "identity first dimension must be used by all communities or none"
                )
            for j, s in enumerate(specs):
                if j > 0 and s.is_identity:
                    raise ValueError("identity marker is only legal on dimension 0")

    @classmethod
    def shared(cls, specs, n_communities: int) -> "KernelAssignment":
        """Replicate one per-dimension spec vector across communities."""
        return cls(tuple(tuple(specs) for _ in range(n_communities)))

    @property
    def n_communities(self) -> int:
        return len(self.communities)

    @property
    def n_dims(self) -> int:
        return len(self.communities[0])

    @property
    def identity_first(self) -> bool:
        return self.communities[0][0].is_identity

    @property
    def is_resolved(self) -> bool:
        return all(s.is_resolved for c in self.communities for s in c)

    @property
    def is_homogeneous(self) -> bool:
        return all(c == self.communities[0] for c in self.communities[1:])

    def resolve_zellner(self, theta_all) -> "KernelAssignment":
        """Replace every ``"zellner"`` delta with its concrete matrix.

        Matrices are shared between specs with equal bases so the result
        can be compared structurally.
        """
        cache: list[tuple[BasisFamily, np.ndarray]] = []

        def _resolve(s: KernelSpec) -> KernelSpec:
            if s.is_identity or isinstance(s.delta, np.ndarray):
                return s
            for b, m in cache:
                if b == s.basis:
                    return s.with_delta(m)
            m = zellner_delta(s.basis, theta_all)
            cache.append((s.basis, m))
            return s.with_delta(m)

        return KernelAssignment(
            tuple(tuple(_resolve(s) for s in c) for c in self.communities)
        )

    def to_config(self) -> list:
        return [[s.to_config() for s in c] for c in self.communities]

    @classmethod
    def from_config(cls, cfg: list) -> "KernelAssignment":
        return cls(
            tuple(tuple(KernelSpec.from_config(s) for s in c) for c in cfg)
        )
