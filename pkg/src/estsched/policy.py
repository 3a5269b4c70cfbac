"""Rank functions for size-based scheduling with estimated job sizes.

A job is described by its state (s, z, a): true size, estimated size and age.
The scheduler always serves a job of least rank.  Every rank here is
piecewise linear in the age, so the simulator can compute exactly when a
served job's rank will next cross a given level.

The scalar kernels take an integer policy code so they can be called from
the compiled simulator; the public functions wrap them for ``Policy`` and
``JobState`` arguments.
"""

from __future__ import annotations

import enum
import math
from typing import NamedTuple, Optional

from numba import njit

SRPT, PSJF, SRPT_E, PSJF_E, SRPT_B, SRPT_SE, SRPT_UB = range(7)


class Policy(enum.IntEnum):
    SRPT = SRPT
    PSJF = PSJF
    SRPT_E = SRPT_E
    PSJF_E = PSJF_E
    SRPT_B = SRPT_B
    SRPT_SE = SRPT_SE
    SRPT_UB = SRPT_UB

    @property
    def label(self) -> str:
        return self.name.replace("_", "-")

    @property
    def clairvoyant(self) -> bool:
        """True if the rank needs the true size, not just the estimate."""
        return self in (Policy.SRPT, Policy.PSJF, Policy.SRPT_SE)

    @classmethod
    def parse(cls, name) -> "Policy":
        if isinstance(name, Policy):
            return name
        key = str(name).strip().upper().replace("-", "_")
        try:
            return cls[key]
        except KeyError:
            known = ", ".join(p.label for p in cls)
            raise ValueError(f"unknown policy {name!r}; expected one of {known}") from None

    def __str__(self):
        return self.label


# estimate-driven policies with an analytic evaluator (UB has none)
ESTIMATE_POLICIES = (Policy.SRPT_E, Policy.PSJF_E, Policy.SRPT_B, Policy.SRPT_SE)
MAIN_POLICIES = (Policy.SRPT, Policy.PSJF) + ESTIMATE_POLICIES


class JobState(NamedTuple):
    s: float
    z: float
    a: float = 0.0

    def validate(self) -> "JobState":
        if not (self.s > 0 and self.z > 0):
            raise ValueError(f"sizes must be positive: {self}")
        if not 0 <= self.a < self.s:
            raise ValueError(f"age must lie in [0, s): {self}")
        return self


# --------------------------------------------------------------------------
# compiled kernels


@njit(cache=True, nogil=True)
def rank_value(code, s, z, a):
    if code == SRPT:
        return s - a
    if code == PSJF:
        return s
    if code == SRPT_E:
        return z - a
    if code == PSJF_E:
        return z
    if code == SRPT_B:
        return min(abs(z - a), z)
    if code == SRPT_SE:
        return (z / s) * (s - a)
    return abs(z - a)


@njit(cache=True, nogil=True)
def worst_value(code, s, z, a):
    """Supremum of the rank over ages in [a, s)."""
    if code == SRPT_B:
        return max(z - a, min(s - z, z))
    if code == SRPT_UB:
        return max(abs(z - a), s - z)
    # the remaining ranks never increase with age
    return rank_value(code, s, z, a)


@njit(cache=True, nogil=True)
def slope_value(code, s, z, a):
    """Right derivative of the rank with respect to age at age a."""
    if code == SRPT or code == SRPT_E:
        return -1.0
    if code == PSJF or code == PSJF_E:
        return 0.0
    if code == SRPT_SE:
        return -z / s
    if code == SRPT_B:
        if a < z:
            return -1.0
        if a < 2.0 * z:
            return 1.0
        return 0.0
    if a < z:
        return -1.0
    return 1.0


@njit(cache=True, nogil=True)
def next_kink(code, s, z, a):
    """Next age above a where the slope changes, or inf if none before s."""
    out = math.inf
    if code == SRPT_B:
        if a < z:
            out = z
        elif a < 2.0 * z:
            out = 2.0 * z
    elif code == SRPT_UB:
        if a < z:
            out = z
    if out >= s:
        return math.inf
    return out


@njit(cache=True, nogil=True)
def crossing_service(code, s, z, a, threshold):
    """Service until the rank is strictly above ``threshold`` just afterwards.

    Returns inf if that never happens before completion.  Only SRPT-B and
    SRPT-UB have rising segments; on them the rank is a - z.
    """
    r = rank_value(code, s, z, a)
    if r > threshold:
        return 0.0
    if code != SRPT_B and code != SRPT_UB:
        return math.inf
    if code == SRPT_B and threshold >= z:
        return math.inf  # capped at z
    cross = z + threshold
    if cross < a:
        cross = a
    if cross >= s:
        return math.inf
    return cross - a


# --------------------------------------------------------------------------
# public wrappers


def rank(p, x: JobState) -> float:
    """Current rank of a job in state x under policy p (lower is served first)."""
    return float(rank_value(int(Policy.parse(p)), x.s, x.z, x.a))


def worst_future_rank(p, x: JobState) -> float:
    """Largest rank the job will have over the rest of its service."""
    return float(worst_value(int(Policy.parse(p)), x.s, x.z, x.a))


def rank_slope(p, x: JobState) -> float:
    return float(slope_value(int(Policy.parse(p)), x.s, x.z, x.a))


def service_until_rank_exceeds(p, x: JobState, threshold: float) -> Optional[float]:
    """Least service w such that the rank is strictly above ``threshold`` for
    ages just after a + w; None if the job completes first.

    At exact equality the job keeps its rank, so a return of w means the job
    may be served for w more time units before it loses priority to a job of
    rank ``threshold``.
    """
    w = crossing_service(int(Policy.parse(p)), x.s, x.z, x.a, float(threshold))
    return None if math.isinf(w) else float(w)
