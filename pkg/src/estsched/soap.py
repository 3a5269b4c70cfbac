"""Tagged-job analysis of mean response time for the estimate-based policies.

A tagged job with true size s and estimate z waits while the work that
arrived ahead of it, or that later arrivals add before it first runs, is
cleared.  After it starts it is delayed only by arrivals that outrank its
worst future rank.  Both pieces reduce to the load profile

    rho_Z(z) = lambda * E[S 1(Z <= z)]

and the policy-specific second-moment quantity ``u``.  For multiplicative
estimate laws (Z = M S) every expectation over S is a partial moment, so
the only numerical integrals left are over M, over the tagged job's (s, m),
and the running integral K(y) = int_0^y dt / (1 - rho_Z(t)).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import integrate

from ._quad import gl_rule, log_edges, merge_edges, panel_rule, refine_edges
from .dist import Deterministic, JointSizeModel, Perfect
from .policy import Policy, worst_future_rank, JobState

U_POLICIES = (Policy.SRPT_E, Policy.PSJF_E, Policy.SRPT_B, Policy.SRPT_SE)


class AnalyticContext:
    """Arrival rate and joint size model, with cached load-profile integrals."""

    def __init__(self, lam: float, model: JointSizeModel, quad_tol: float = 1e-7,
                 tail_quantile: float = 1.0 - 1e-10):
        self.lam = float(lam)
        self.model = model
        self.quad_tol = quad_tol
        self.tail_quantile = tail_quantile
        self.rho = self.lam * model.mean_size()
        if not 0 < self.rho < 1:
            raise ValueError(f"need 0 < rho < 1, got rho = {self.rho:.6g}")
        self._k_table = None
        self._perfect = None

    @property
    def size(self):
        return self.model.size

    def s_range(self) -> tuple[float, float]:
        lo, hi = self.size.support()
        return lo, self.size.upper(1.0 - self.tail_quantile)

    def perfect(self) -> "AnalyticContext":
        """The same arrival process and sizes with exact estimates."""
        if isinstance(self.model.estimate, Perfect):
            return self
        if self._perfect is None:
            self._perfect = AnalyticContext(self.lam, JointSizeModel(self.size, Perfect()),
                                            self.quad_tol, self.tail_quantile)
        return self._perfect

    # -- load profile -----------------------------------------------------

    def z_kinks(self) -> list[float]:
        """Estimate values where rho_Z or u lose smoothness."""
        beta, alpha = self.model.bounds()
        atoms = self.model.estimate.atoms()
        mults = {beta, alpha, 0.5, 1.0}
        if atoms is not None:
            mults |= {m for m, _ in atoms}
        pts = set()
        for b in self.size.breakpoints():
            for m in mults:
                for v in (b * m, b * (1.0 - m), b * (m - 1.0)):
                    if v > 0:
                        pts.add(v)
        return sorted(pts)

    def K(self, y):
        """int_0^y dt / (1 - rho_Z(t)), equal to y for y <= 0."""
        y = np.asarray(y, dtype=float)
        edges, cum = self._cumulative_table()
        out = np.where(y <= 0, y, 0.0)
        pos = y > 0
        if not np.any(pos):
            return out
        yp = np.minimum(y[pos], edges[-1])
        idx = np.clip(np.searchsorted(edges, yp, side="right") - 1, 0, len(edges) - 2)
        left = edges[idx]
        x, w = gl_rule(12)
        half = 0.5 * (yp - left)
        nodes = left[:, None] + half[:, None] * (x[None, :] + 1.0)
        part = (half[:, None] * w[None, :] / (1.0 - rho_Z(self, nodes))).sum(axis=1)
        val = cum[idx] + part
        # beyond the table the load is (numerically) rho
        val = val + np.maximum(y[pos] - edges[-1], 0.0) / (1.0 - self.rho)
        out[pos] = val
        return out

    def _cumulative_table(self):
        if self._k_table is None:
            beta, alpha = self.model.bounds()
            top = 2.0 * max(alpha, 1.0) * self.s_range()[1]
            breaks = list(self.model.load_kinks()) + self.z_kinks()
            edges = log_edges(0.0, top, breaks, per_decade=8)
            nodes, weights = panel_rule(edges, 12)
            vals = weights / (1.0 - rho_Z(self, nodes))
            per_panel = vals.reshape(len(edges) - 1, 12).sum(axis=1)
            cum = np.concatenate(([0.0], np.cumsum(per_panel)))
            self._k_table = (edges, cum)
        return self._k_table


def rho_S(ctx: AnalyticContext, s):
    """lambda E[S 1(S <= s)]."""
    s = np.asarray(s, dtype=float)
    return np.where(s > 0, ctx.lam * ctx.size.partial_moment(1, np.maximum(s, 0.0)), 0.0)


def rho_Z(ctx: AnalyticContext, z):
    """lambda E[S 1(Z <= z)]; zero for z <= 0."""
    return ctx.lam * ctx.model.partial_work(z)


# --------------------------------------------------------------------------
# u: expected squared service, before the tagged job's first service, of the
# work that can delay it


def _moments_at(size, x):
    return size.cdf(x), size.partial_moment(1, x), size.partial_moment(2, x)


def _u_given_multiplier(size, code, z, m):
    """u for jobs whose estimate is exactly m times their size."""
    z, m = np.broadcast_arrays(np.asarray(z, dtype=float), np.asarray(m, dtype=float))
    t1 = z / m
    if code == Policy.PSJF_E:
        return size.partial_moment(2, t1)
    if code == Policy.SRPT_SE:
        return size.partial_moment(2, t1) + t1 * t1 * size.survival(t1)
    if code not in (Policy.SRPT_B, Policy.SRPT_E):
        raise ValueError(f"u is not defined for {code}")
    # a job with S > t1 delays the tagged one by (c S + z), c = 1 - m, until
    # S reaches top: for m > 1 that overrun falls to zero at z / (m - 1); under
    # SRPT-B with m < 1 it is capped at 2z from z / (1 - m) on
    c = 1.0 - m
    top = np.full_like(z, np.inf)
    over = m > 1.0
    top[over] = z[over] / (m[over] - 1.0)
    capped = c > 0 if code == Policy.SRPT_B else np.zeros_like(over)
    top[capped] = z[capped] / c[capped]
    top = np.maximum(top, t1)
    lo0, lo1, lo2 = _moments_at(size, t1)
    hi0, hi1, hi2 = _moments_at(size, top)
    out = lo2 + c * c * (hi2 - lo2) + 2.0 * c * z * (hi1 - lo1) + z * z * (hi0 - lo0)
    if code == Policy.SRPT_B:
        out = out + np.where(capped, 4.0 * z * z * size.survival(top), 0.0)
    return out


def _multiplier_nodes(ctx, z, n=10, pieces=2):
    """Per-z quadrature over the multiplier law: (m, w) arrays of shape (len(z), q)."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    atoms = ctx.model.estimate.atoms()
    if atoms is not None:
        m = np.array([a for a, _ in atoms])
        w = np.array([p for _, p in atoms])
        return np.broadcast_to(m, (z.size, m.size)), np.broadcast_to(w, (z.size, w.size))
    beta, alpha = ctx.model.bounds()
    # kinks in m where z/m, z/(1-m) or z/(m-1) meets a size breakpoint
    cand = [np.full_like(z, 0.5), np.ones_like(z)]
    for b in ctx.size.breakpoints():
        cand += [z / b, 1.0 - z / b, 1.0 + z / b]
    cand = np.clip(np.stack(cand, axis=1), beta, alpha)
    edges = np.sort(np.concatenate([np.full((z.size, 1), beta), cand,
                                    np.full((z.size, 1), alpha)], axis=1), axis=1)
    if pieces > 1:
        frac = np.linspace(0.0, 1.0, pieces + 1)[:-1]
        lo, hi = edges[:, :-1], edges[:, 1:]
        sub = lo[:, :, None] + (hi - lo)[:, :, None] * frac[None, None, :]
        edges = np.concatenate([sub.reshape(z.size, -1), edges[:, -1:]], axis=1)
    x, wg = gl_rule(n)
    lo, hi = edges[:, :-1], edges[:, 1:]
    half = 0.5 * (hi - lo)
    m = (lo + half)[:, :, None] + half[:, :, None] * x[None, None, :]
    w = half[:, :, None] * wg[None, None, :] / (alpha - beta)
    return m.reshape(z.size, -1), w.reshape(z.size, -1)


def u(ctx: AnalyticContext, p, z, n: int = 10):
    """Policy-specific second moment driving the waiting time of a job with estimate z."""
    p = Policy.parse(p)
    if p not in U_POLICIES:
        raise ValueError(f"u is defined for {', '.join(q.label for q in U_POLICIES)}; "
                         f"use the exact-estimate model for SRPT and PSJF")
    z_arr = np.asarray(z, dtype=float)
    flat = np.atleast_1d(z_arr).ravel()
    out = np.zeros_like(flat)
    pos = flat > 0
    if np.any(pos):
        m, w = _multiplier_nodes(ctx, flat[pos], n=n)
        vals = _u_given_multiplier(ctx.size, p, flat[pos][:, None], m)
        out[pos] = (vals * w).sum(axis=1)
    return out.reshape(z_arr.shape) if z_arr.ndim else float(out[0])


def _as_estimate_policy(ctx, p):
    """SRPT and PSJF are SRPT-SE and PSJF-E on the exact-estimate model."""
    p = Policy.parse(p)
    if p == Policy.SRPT:
        return ctx.perfect(), Policy.SRPT_SE
    if p == Policy.PSJF:
        return ctx.perfect(), Policy.PSJF_E
    if p == Policy.SRPT_UB:
        raise ValueError("SRPT-UB has no analytic evaluation; simulate it")
    return ctx, p


def wait_mean(ctx: AnalyticContext, p, z):
    """Mean waiting time of a job with estimate z (size, for SRPT and PSJF)."""
    ctx, p = _as_estimate_policy(ctx, p)
    r = rho_Z(ctx, z)
    return 0.5 * ctx.lam * u(ctx, p, z) / (1.0 - r) ** 2


def res_mean(ctx: AnalyticContext, p, s: float, z: Optional[float] = None) -> float:
    """Mean residence time of a job (s, z), integrated directly over its age.

    The integrand is 1 / (1 - rho_Z(worst future rank at age a)); it is
    integrated adaptively with the rank kinks as breakpoints.
    """
    ctx, p = _as_estimate_policy(ctx, p)
    s = float(s)
    z = s if z is None or isinstance(ctx.model.estimate, Perfect) else float(z)
    if p == Policy.PSJF_E:
        return s / (1.0 - float(rho_Z(ctx, z)))

    def f(a):
        return 1.0 / (1.0 - float(rho_Z(ctx, worst_future_rank(p, JobState(s, z, a)))))

    # ages where the worst rank changes formula or passes a load kink
    pts = [z, 2 * z, z - min(s - z, z)]
    for k in ctx.model.load_kinks():
        pts += [z - k, s - s * k / z, k + z]
    pts = sorted({a for a in pts if 0 < a < s})
    val, _ = integrate.quad(f, 0.0, s, points=pts or None, epsabs=0.0,
                            epsrel=ctx.quad_tol * 1e-2, limit=400)
    return val


def _res_closed(ctx, p, s, z):
    """Vectorized residence time through K; same quantity as ``res_mean``."""
    if p == Policy.PSJF_E:
        return s / (1.0 - rho_Z(ctx, z))
    if p == Policy.SRPT_SE:
        return (s / z) * ctx.K(z)
    if p == Policy.SRPT_E:
        return ctx.K(z) - ctx.K(z - s)
    # SRPT-B: worst rank z - a until it meets the floor min(s - z, z)
    c = np.minimum(s - z, z)
    whole = ctx.K(z) - ctx.K(z - s)
    split = ctx.K(z) - ctx.K(c) + (s - (z - c)) / (1.0 - rho_Z(ctx, c))
    return np.where(c <= z - s, whole, split)


# --------------------------------------------------------------------------
# mean response time


@dataclass
class ResponseBreakdown:
    policy: Policy
    mean_T: float
    mean_wait: float
    mean_res: float
    error: float  # difference between two quadrature resolutions


def _size_nodes(ctx, kinks_in_s, n):
    size = ctx.size
    if isinstance(size, Deterministic):
        return np.array([size.value]), np.array([1.0])
    lo, hi = ctx.s_range()
    breaks = list(size.breakpoints()) + list(kinks_in_s)
    edges = log_edges(lo, hi, breaks, per_decade=4, depth=6)
    if lo > 0:
        # a narrow support packs the whole load rise into a few log panels
        edges = refine_edges(edges, 8 if hi < 10.0 * lo else 2)
    nodes, weights = panel_rule(edges, n)
    return nodes, weights * size.pdf(nodes)


def _outer_multiplier_nodes(ctx, n):
    atoms = ctx.model.estimate.atoms()
    if atoms is not None:
        return np.array([a for a, _ in atoms]), np.array([p for _, p in atoms])
    beta, alpha = ctx.model.bounds()
    edges = refine_edges(merge_edges(beta, alpha, (0.5, 1.0)), 2)
    m, w = panel_rule(edges, n)
    return m, w / (alpha - beta)


def _breakdown(ctx, p, n):
    zk = ctx.z_kinks() + list(ctx.model.load_kinks())
    wait_tot = 0.0
    res_tot = 0.0
    for m, wm in zip(*_outer_multiplier_nodes(ctx, n)):
        # sizes where z = m s, z - s or s - z crosses an estimate kink
        slopes = [k for k in (m, m - 1.0, 1.0 - m, min(1.0 - m, m)) if k > 1e-12]
        kin = [zv / k for zv in zk for k in slopes]
        s, ws = _size_nodes(ctx, kin, n)
        z = m * s
        wait_tot += wm * float(np.dot(ws, 0.5 * ctx.lam * u(ctx, p, z, n=n)
                                      / (1.0 - rho_Z(ctx, z)) ** 2))
        res_tot += wm * float(np.dot(ws, _res_closed(ctx, p, s, z)))
    return wait_tot, res_tot


def mean_response_breakdown(ctx: AnalyticContext, p) -> ResponseBreakdown:
    """Mean response, waiting and residence times with a quadrature error estimate."""
    label = Policy.parse(p)
    ctx, q = _as_estimate_policy(ctx, label)
    w1, r1 = _breakdown(ctx, q, 10)
    w2, r2 = _breakdown(ctx, q, 16)
    err = abs((w2 + r2) - (w1 + r1))
    total = w2 + r2
    if err > ctx.quad_tol * abs(total):
        warnings.warn(f"{label.label}: quadrature error estimate {err:.3g} exceeds "
                      f"tolerance {ctx.quad_tol:g} relative to {total:.6g}")
    return ResponseBreakdown(label, total, w2, r2, err)


def mean_response(ctx: AnalyticContext, p) -> float:
    return mean_response_breakdown(ctx, p).mean_T


# --------------------------------------------------------------------------
# closed-form bounds


def _log_factor(rho):
    return math.log(1.0 / (1.0 - rho)) / rho


def srpt_lower_bound(ctx: AnalyticContext) -> float:
    """(1/rho) ln(1/(1-rho)) E[S]; no policy's mean response falls below it under SRPT."""
    return _log_factor(ctx.rho) * ctx.model.mean_size()


def bound_srpt_b(ctx: AnalyticContext, T_srpt: float) -> float:
    beta, alpha = ctx.model.bounds()
    coef = 1.5 * alpha * (1.0 if beta < 1 else 0.0) + 1.0
    spread = min(1.0, max(1.0 - 1.0 / alpha, 1.0 / beta - 1.0))
    return (alpha / beta) * T_srpt + coef * spread * (_log_factor(ctx.rho) - 1.0) * ctx.model.mean_size()


def bound_psjf_e(ctx: AnalyticContext, T_psjf: float) -> float:
    beta, alpha = ctx.model.bounds()
    return (alpha / beta) * T_psjf


def bound_srpt_se(ctx: AnalyticContext, T_srpt: float) -> float:
    beta, alpha = ctx.model.bounds()
    return (alpha / beta) * T_srpt


def lower_srpt_e(ctx: AnalyticContext) -> float:
    """Lower bound on the mean waiting time of SRPT-E."""
    beta, _ = ctx.model.bounds()
    return 0.5 * ctx.lam * (1.0 - beta) ** 2 * ctx.size.second_moment()
