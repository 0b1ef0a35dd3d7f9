"""Dot-product kernels over lattice points, with op counting and cycle models.

A lattice coefficient of magnitude m is realized by m repeated additions
(or subtractions) of the other operand, so a whole dot product against a
point with pulse budget k costs at most k - 1 additions/subtractions and
no multiplications.  The cycle models mirror two serial datapaths: one
with a multiplier that skips zero coefficients, and an add/sub-only one
that spends exactly one cycle per pulse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pvq import PvqPoint, QuantizedVector

__all__ = [
    "DotStats",
    "CycleEstimate",
    "IntegerOverflowError",
    "ARCHITECTURES",
    "dot_reference",
    "dot_addsub",
    "dot_quantized",
    "estimate_cycles",
]

INT64_MIN = -(2**63)
INT64_MAX = 2**63 - 1


class IntegerOverflowError(OverflowError):
    """A 64-bit signed accumulator left its representable range."""


@dataclass(frozen=True)
class DotStats:
    """Operation tally of one dot product."""

    additions: int = 0
    subtractions: int = 0
    multiplications: int = 0

    @property
    def addsub(self) -> int:
        return self.additions + self.subtractions


@dataclass(frozen=True)
class CycleEstimate:
    arch: str
    cycles: int


def _as_vector(x) -> np.ndarray:
    x = np.asarray(x)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {x.shape}")
    return x


def dot_reference(w, x) -> float:
    """Plain float64 dot product; the correctness oracle for the kernels."""
    w = _as_vector(w).astype(np.float64)
    x = _as_vector(x).astype(np.float64)
    if w.size != x.size:
        raise ValueError(f"dimension mismatch: {w.size} vs {x.size}")
    return float(np.dot(w, x))


def dot_addsub(p: PvqPoint, x, shift: int = 0) -> tuple[float | int, DotStats]:
    """Dot product of a lattice point with x using only additions/subtractions.

    Each coefficient is applied as repeated +/- of the matching x entry;
    zero coefficients are skipped (their positions are known from the
    point).  Loading the first operand into the accumulator is not
    counted, so the tally never exceeds k - 1 add/subs.

    Integer input accumulates in a checked signed 64-bit range and
    returns an int; real input accumulates in float64.  The optional
    shift arithmetic-shifts an integer result right by that many bits
    (cheap power-of-two rescaling between layers); it is rejected for
    real input.
    """
    x = _as_vector(x)
    if p.n != x.size:
        raise ValueError(f"dimension mismatch: point has {p.n}, input has {x.size}")
    if shift < 0:
        raise ValueError(f"shift must be non-negative, got {shift}")
    integer = np.issubdtype(x.dtype, np.integer) or x.dtype == object
    if not integer and shift:
        raise ValueError("shift applies to the integer path only")

    acc = None
    adds = subs = 0
    for v, xi in zip(p.coords, x.tolist()):
        if v == 0:
            continue
        for _ in range(abs(v)):
            if acc is None:
                acc = xi if v > 0 else -xi
                continue
            if v > 0:
                acc = acc + xi
                adds += 1
            else:
                acc = acc - xi
                subs += 1
            if integer and not INT64_MIN <= acc <= INT64_MAX:
                raise IntegerOverflowError(
                    f"accumulator reached {acc} on a 64-bit integer path"
                )
    if acc is None:  # all coords zero cannot happen for a valid point
        acc = 0
    if integer and shift:
        acc >>= shift
    return acc, DotStats(additions=adds, subtractions=subs)


def dot_quantized(q: QuantizedVector, x) -> tuple[float, DotStats]:
    """rho times the add/sub dot product; exactly one multiplication recorded."""
    if q.rho == 0.0:
        x = _as_vector(x)
        if q.point.n != x.size:
            raise ValueError(f"dimension mismatch: point has {q.point.n}, input has {x.size}")
        return 0.0, DotStats(multiplications=1)
    value, stats = dot_addsub(q.point, np.asarray(x, dtype=np.float64))
    stats = DotStats(stats.additions, stats.subtractions, stats.multiplications + 1)
    return q.rho * value, stats


ARCH_MULTIPLIER = "multiplier"
ARCH_ADDSUB = "addsub"
ARCH_BINARY_ACCUMULATE = "binary-accumulate"
ARCH_BINARY_COUNTER = "binary-counter"

ARCHITECTURES = (
    ARCH_MULTIPLIER,
    ARCH_ADDSUB,
    ARCH_BINARY_ACCUMULATE,
    ARCH_BINARY_COUNTER,
)


def estimate_cycles(p: PvqPoint, arch: str) -> CycleEstimate:
    """Serial-datapath cycle count for one dot product against p.

    A multiplier-style unit spends one cycle per nonzero coefficient; an
    add/sub-only unit spends one cycle per pulse, so exactly k cycles
    whatever the support looks like.  The binary variants behave the
    same way: the accumulating datapath visits nonzeros, the
    counter-based one clocks once per pulse.
    """
    if arch in (ARCH_MULTIPLIER, ARCH_BINARY_ACCUMULATE):
        return CycleEstimate(arch, p.nonzeros)
    if arch in (ARCH_ADDSUB, ARCH_BINARY_COUNTER):
        return CycleEstimate(arch, p.k)
    raise ValueError(f"unknown architecture {arch!r}, expected one of {ARCHITECTURES}")
