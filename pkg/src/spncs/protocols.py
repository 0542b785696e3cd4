"""Scheduling protocols for the network channels and their certificates.

A protocol owns one channel error vector split into nodes; at each
transmission exactly one node resets.  Each protocol carries a Lyapunov
function W with

    aW_lower |e| <= W(kappa, e) <= aW_upper |e|
    W(kappa+1, jump(kappa, e)) <= lam * W(kappa, e),        lam < 1
    |dW/de| <= M   (almost everywhere)

Supported kinds:

* ``zeroing``          -- single logical node, whole vector resets; W = |e|.
* ``round-robin``      -- node (kappa mod l)+1 resets; W is the weighted
                          norm with per-node weights (l/(l-1))^d where d is
                          the number of jumps until that node resets, which
                          contracts tightly with lam = sqrt((l-1)/l).
* ``try-once-discard`` -- the node with the largest error-block norm resets
                          (ties: lowest index); W = |e|, lam = sqrt((l-1)/l).

Round-robin / try-once-discard contraction factors are validated
empirically at certificate construction; a failed validation is a bug, not
a tunable, and raises.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import InvalidInput

KINDS = ("zeroing", "round-robin", "try-once-discard")

_CERT_VALIDATION_SAMPLES = 4096
_CERT_VALIDATION_SLACK = 1e-12


@dataclass(frozen=True)
class NodePartition:
    """Per-node dimensions of a channel error vector."""

    dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if not dims or any(d < 1 for d in dims):
            raise InvalidInput("every node needs dimension >= 1")
        object.__setattr__(self, "dims", dims)

    @property
    def total(self) -> int:
        return sum(self.dims)

    @property
    def count(self) -> int:
        return len(self.dims)

    def block(self, e: np.ndarray, k: int) -> np.ndarray:
        at = sum(self.dims[:k])
        return e[at : at + self.dims[k]]

    def block_slice(self, k: int) -> slice:
        at = sum(self.dims[:k])
        return slice(at, at + self.dims[k])


@dataclass(frozen=True)
class ProtocolCertificate:
    aW_lower: float
    aW_upper: float
    lam: float
    M: float

    def __post_init__(self):
        if not (0 < self.aW_lower <= self.aW_upper):
            raise InvalidInput("need 0 < aW_lower <= aW_upper")
        if not (0.0 <= self.lam < 1.0):
            raise InvalidInput("contraction factor must lie in [0, 1)")
        if self.M < 0:
            raise InvalidInput("gradient bound must be nonnegative")


@dataclass
class ProtocolState:
    kind: str
    partition: NodePartition
    counter: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInput(f"unknown protocol kind {self.kind!r}")
        if self.kind == "zeroing" and self.partition.count != 1:
            # zeroing treats the whole channel as one node
            raise InvalidInput("zeroing protocol takes a single-node partition")


def _check_dim(proto: ProtocolState, e: np.ndarray) -> np.ndarray:
    e = np.atleast_1d(np.asarray(e, dtype=float))
    if e.shape != (proto.partition.total,):
        raise InvalidInput(
            f"error vector has dimension {e.shape}, partition expects {proto.partition.total}"
        )
    return e


def _rr_weights(proto: ProtocolState, kappa: int) -> np.ndarray:
    """Per-coordinate round-robin weights (l/(l-1))^d, d = jumps until reset."""
    part = proto.partition
    ell = part.count
    w = np.ones(part.total)
    if ell == 1:
        return w
    q = ell / (ell - 1.0)
    for k in range(ell):
        d = (k - kappa) % ell  # node k resets when counter hits kappa + d
        w[part.block_slice(k)] = q**d
    return w


def w_value(proto: ProtocolState, kappa: int, e) -> float:
    """Protocol Lyapunov function W(kappa, e)."""
    e = _check_dim(proto, e)
    if proto.kind == "round-robin":
        return float(np.sqrt(np.sum(_rr_weights(proto, kappa) * e * e)))
    return float(np.linalg.norm(e))


def jump(proto: ProtocolState, kappa: int, e) -> tuple:
    """Apply the protocol reset; returns (e_plus, node index)."""
    e = _check_dim(proto, e)
    part = proto.partition
    if proto.kind == "zeroing":
        return np.zeros_like(e), 0
    if proto.kind == "round-robin":
        node = kappa % part.count
    else:  # try-once-discard: largest block norm, lowest index on ties
        norms = [np.linalg.norm(part.block(e, k)) for k in range(part.count)]
        node = int(np.argmax(norms))
    e_plus = e.copy()
    e_plus[part.block_slice(node)] = 0.0
    return e_plus, node


def certificate(proto: ProtocolState) -> ProtocolCertificate:
    """Certificate constants for the protocol, validated empirically."""
    ell = proto.partition.count
    if proto.kind == "zeroing" or ell == 1:
        return ProtocolCertificate(1.0, 1.0, 0.0, 1.0)
    lam = float(np.sqrt((ell - 1.0) / ell))
    if proto.kind == "round-robin":
        q = ell / (ell - 1.0)
        upper = float(q ** ((ell - 1) / 2.0))
        cert = ProtocolCertificate(1.0, upper, lam, upper)
    else:
        cert = ProtocolCertificate(1.0, 1.0, lam, 1.0)
    _validate_contraction(proto, cert)
    return cert


def _validate_contraction(proto: ProtocolState, cert: ProtocolCertificate):
    rng = np.random.default_rng(2024)
    n = proto.partition.total
    worst = 0.0
    for _ in range(_CERT_VALIDATION_SAMPLES):
        kappa = int(rng.integers(0, 4 * proto.partition.count))
        e = rng.normal(size=n) * 10.0 ** rng.integers(-2, 3)
        w0 = w_value(proto, kappa, e)
        if w0 == 0.0:
            continue
        e_plus, _ = jump(proto, kappa, e)
        w1 = w_value(proto, kappa + 1, e_plus)
        worst = max(worst, w1 / w0)
        if w1 > cert.lam * w0 + _CERT_VALIDATION_SLACK:
            raise InvalidInput(
                f"{proto.kind} contraction certificate violated: ratio {w1 / w0:.6f} > {cert.lam:.6f}"
            )
    return worst


def combine_certificates(*certs: ProtocolCertificate) -> ProtocolCertificate:
    """Certificate of independent sub-channels jumping at the same instants.

    With W = sqrt(sum W_i^2) the combined function inherits
    (min lower, max upper, max lam, max M).
    """
    if not certs:
        raise InvalidInput("need at least one certificate")
    return ProtocolCertificate(
        aW_lower=min(c.aW_lower for c in certs),
        aW_upper=max(c.aW_upper for c in certs),
        lam=max(c.lam for c in certs),
        M=max(c.M for c in certs),
    )


def companion_jumps(kappa: int, e_ys, etil_ps, vhat1, v1_now, node: int, partition: NodePartition) -> tuple:
    """Reset the ideal-output error and latch fresh noise for the served node.

    The node was selected by the protocol jump on the measured error; for
    that node both the plant- and observer-side held outputs refresh, so the
    corresponding e_ys block zeroes and the held-noise block becomes the
    current noise value.  Other blocks are untouched.
    """
    del etil_ps  # the measured error already jumped through the protocol
    e_ys = np.atleast_1d(np.asarray(e_ys, dtype=float)).copy()
    vhat1 = np.atleast_1d(np.asarray(vhat1, dtype=float)).copy()
    v1_now = np.atleast_1d(np.asarray(v1_now, dtype=float))
    if not (0 <= node < partition.count):
        raise InvalidInput("node index outside partition")
    sl = partition.block_slice(node)
    e_ys[sl] = 0.0
    vhat1[sl] = v1_now[sl]
    return e_ys, vhat1
