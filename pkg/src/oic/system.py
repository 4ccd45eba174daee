"""Discrete LTI system model and perturbation sources."""

import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from oic import geometry
from oic.geometry import Polytope

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LtiSystem:
    """x(t+1) = A x(t) + B u(t) + w(t) with polytopic constraints.

    u_skip is the input applied on skipped steps (zero by default).
    """

    A: np.ndarray
    B: np.ndarray
    X: Polytope
    U: Polytope
    W: Polytope
    u_skip: np.ndarray = None

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        n, m = A.shape[0], B.shape[1]
        if A.shape != (n, n):
            raise ValueError("A must be square")
        if B.shape[0] != n:
            raise ValueError("B row count must match state dimension")
        if self.X.dim != n or self.W.dim != n:
            raise ValueError("X and W must live in the state space")
        if self.U.dim != m:
            raise ValueError("U must live in the input space")
        u_skip = self.u_skip
        if u_skip is None:
            u_skip = np.zeros(m)
        u_skip = np.asarray(u_skip, dtype=float).ravel()
        if u_skip.size != m:
            raise ValueError("u_skip dimension mismatch")
        if not self.U.contains(u_skip):
            raise ValueError("u_skip must be an admissible input")
        object.__setattr__(self, "u_skip", u_skip)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    def definition_hash(self):
        """Stable hash of the system definition, used for bundle provenance."""
        parts = [
            np.array2string(self.A, precision=17),
            np.array2string(self.B, precision=17),
            geometry.to_text(self.X),
            geometry.to_text(self.U),
            geometry.to_text(self.W),
            np.array2string(self.u_skip, precision=17),
        ]
        return hashlib.sha256("\n".join(parts).encode()).hexdigest()[:16]


def step(sys, x, u, w, strict=True):
    """One transition of the difference equation; returns A x + B u + w."""
    x = np.asarray(x, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    if x.size != sys.n or u.size != sys.m or w.size != sys.n:
        raise ValueError("step dimension mismatch")
    if not sys.U.contains(u):
        if strict:
            raise ValueError(f"input {u} violates U")
        logger.warning("input %s outside U", u)
    if not sys.W.contains(w):
        if strict:
            raise ValueError(f"perturbation {w} violates W")
        logger.warning("perturbation %s outside W", w)
    return sys.A @ x + sys.B @ u + w


def energy(u_sequence):
    """Total actuation energy: sum of 1-norms over the input sequence."""
    return float(sum(np.abs(np.asarray(u, dtype=float)).sum() for u in u_sequence))


class PerturbationSource:
    """Deterministic per-seed stream of perturbations w(t) in W.

    forecast(t, H) is only available on clairvoyant sources; the
    model-based skip optimizer requires it, the DRL policy never uses it.
    """

    clairvoyant = False

    def query(self, t):
        raise NotImplementedError

    def forecast(self, t, horizon):
        if not self.clairvoyant:
            raise ValueError("source does not support perturbation forecasts")
        return np.array([self.query(t + k) for k in range(horizon)])

    def clone(self, seed):
        raise NotImplementedError


class ConstantSource(PerturbationSource):
    clairvoyant = True

    def __init__(self, w):
        self.w = np.asarray(w, dtype=float).ravel()

    def query(self, t):
        return self.w

    def clone(self, seed):
        return ConstantSource(self.w)


class UniformBoxSource(PerturbationSource):
    """Uniform draws from a box-shaped W; lazily extends a cached trace."""

    def __init__(self, lo, hi, seed, clairvoyant=False):
        self.lo = np.asarray(lo, dtype=float).ravel()
        self.hi = np.asarray(hi, dtype=float).ravel()
        self.seed = seed
        self.clairvoyant = clairvoyant
        self._rng = np.random.default_rng(seed)
        self._trace = []

    def query(self, t):
        while len(self._trace) <= t:
            self._trace.append(self._rng.uniform(self.lo, self.hi))
        return self._trace[t]

    def clone(self, seed):
        return UniformBoxSource(self.lo, self.hi, seed, self.clairvoyant)
