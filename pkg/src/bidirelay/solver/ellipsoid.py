"""Central-cut ellipsoid updates.

The ellipsoid is ``{x : (x - c)^T P^{-1} (x - c) <= 1}``.  A cut with vector
``g`` keeps the half ``g^T (x - c) <= 0``: for an objective cut ``g`` is a
subgradient of the function being minimised (so the centre moves along
``-P g``); for a constraint cut it is the gradient of a violated constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DegenerateCut(ValueError):
    pass


@dataclass(frozen=True)
class EllipsoidState:
    center: np.ndarray
    shape: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        c = np.array(self.center, dtype=np.float64)
        p = np.array(self.shape, dtype=np.float64)
        q = c.size
        if q < 2 or p.shape != (q, q):
            raise ValueError(f"need q >= 2 and a ({q}, {q}) shape matrix, got {p.shape}")
        if not np.allclose(p, p.T, rtol=1e-12, atol=0.0):
            raise ValueError("shape matrix is not symmetric")
        try:
            np.linalg.cholesky(p)
        except np.linalg.LinAlgError as exc:
            raise ValueError("shape matrix is not positive definite") from exc
        c.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "shape", p)

    @classmethod
    def ball(cls, center, radius: float) -> "EllipsoidState":
        c = np.asarray(center, dtype=np.float64)
        return cls(c, radius**2 * np.eye(c.size))

    @property
    def dim(self) -> int:
        return self.center.size

    def width(self, g: np.ndarray) -> float:
        """``sqrt(g^T P g)``: half the extent of the ellipsoid along ``g``."""
        return math.sqrt(max(float(g @ self.shape @ g), 0.0))


def volume_ratio(q: int) -> float:
    """Per-step volume ratio of the central-cut update in dimension ``q``."""
    return (q / (q + 1)) * (q * q / (q * q - 1.0)) ** ((q - 1) / 2.0)


def central_cut(center: np.ndarray, shape: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Raw update on arrays; raises :class:`DegenerateCut` if ``g^T P g <= 0``."""
    q = center.size
    pg = shape @ g
    gpg = float(g @ pg)
    if not gpg > 0.0:
        raise DegenerateCut(f"g^T P g = {gpg} is not positive")
    b = pg / math.sqrt(gpg)
    new_center = center - b / (q + 1)
    new_shape = (q * q / (q * q - 1.0)) * (shape - (2.0 / (q + 1)) * np.outer(b, b))
    # keep exact symmetry against drift over thousands of steps
    new_shape = 0.5 * (new_shape + new_shape.T)
    return new_center, new_shape


def central_cut_factor(center: np.ndarray, factor: np.ndarray,
                       g: np.ndarray) -> tuple[np.ndarray, np.ndarray] | None:
    """The same update on a factor ``L`` with ``P = L L^T``.

    ``L <- sqrt(q^2/(q^2-1)) (L - gamma (L u) u^T)`` with ``u = L^T g / |L^T g|``
    and ``gamma = 1 - sqrt((q-1)/(q+1))`` reproduces the shape update exactly in
    exact arithmetic, while ``g^T P g = |L^T g|^2`` can never turn negative
    through rounding however ill-conditioned ``P`` becomes.  Returns ``None``
    when ``L^T g`` vanishes.
    """
    q = center.size
    v = factor.T @ g
    norm = math.sqrt(float(v @ v))
    if not norm > 0.0:
        return None
    u = v / norm
    b = factor @ u
    gamma = 1.0 - math.sqrt((q - 1.0) / (q + 1.0))
    new_factor = math.sqrt(q * q / (q * q - 1.0)) * (factor - gamma * np.outer(b, u))
    return center - b / (q + 1), new_factor


def ellipsoid_step(state: EllipsoidState, cut: np.ndarray, cut_kind: str = "objective") -> EllipsoidState:
    """One central-cut update.

    ``cut_kind`` is ``"objective"`` (``cut`` is a subgradient of the minimised
    function) or ``"constraint"`` (``cut`` is the gradient of a violated
    constraint); both keep the half-space ``cut^T (x - c) <= 0``.
    """
    if cut_kind not in ("objective", "constraint"):
        raise ValueError(f"unknown cut kind {cut_kind!r}")
    g = np.asarray(cut, dtype=np.float64)
    if g.shape != state.center.shape or not np.any(g):
        raise DegenerateCut("cut must be a non-zero vector of the ellipsoid's dimension")
    c, p = central_cut(state.center, state.shape, g)
    return EllipsoidState(c, p, state.iteration + 1)
