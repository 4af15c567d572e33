"""Linear contracts with a binary outcome versus posted prices.

A seller posting price ``p`` to a buyer whose value has demand curve
``D`` earns ``p D(p)``. A principal keeping share ``alpha = 1 - beta`` of a
binary output earns ``alpha a(alpha)``, where ``a`` is the agent's response.
Choosing the cost ``c(a) = int_0^a [1 - D^{-1}(x)] dx`` makes the response
curve equal ``D``, so the two learning problems coincide and regret lower
bounds for pricing (``Omega(sqrt T)``, from the pricing literature) carry
over. Only the reduction map is built here.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Callable, ClassVar

import numpy as np
from scipy.interpolate import PchipInterpolator

from .env_core import (
    AgentType,
    BernoulliEffort,
    CostFunction,
    EnvironmentError_,
    OutcomeGrid,
    best_response_linear,
    register_cost_family,
)

SIMPSON_TOL = 1e-10
SIMPSON_DEPTH = 60
BISECT_TOL = 1e-12
INVERSE_TOL = 1e-14
INVERSE_STEPS = 100
KINDS = ("linear", "power", "tabulated")


class DemandDomainError(EnvironmentError_):
    """Demand curve cannot be inverted (not strictly decreasing, or out of [0, 1])."""


def adaptive_simpson(fn: Callable[[float], float], a: float, b: float, tol: float = SIMPSON_TOL) -> float:
    """Adaptive Simpson quadrature with Richardson correction."""
    if b <= a:
        return 0.0

    def simpson(lo, flo, hi, fhi):
        mid = 0.5 * (lo + hi)
        fmid = fn(mid)
        return mid, fmid, (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)

    def rec(lo, flo, hi, fhi, mid, fmid, whole, eps, depth):
        lm, flm, left = simpson(lo, flo, mid, fmid)
        rm, frm, right = simpson(mid, fmid, hi, fhi)
        diff = left + right - whole
        if depth <= 0 or abs(diff) <= 15.0 * eps:
            return left + right + diff / 15.0
        return (rec(lo, flo, mid, fmid, lm, flm, left, eps / 2.0, depth - 1)
                + rec(mid, fmid, hi, fhi, rm, frm, right, eps / 2.0, depth - 1))

    fa, fb = fn(a), fn(b)
    m, fm, whole = simpson(a, fa, b, fb)
    return rec(a, fa, b, fb, m, fm, whole, tol, SIMPSON_DEPTH)


@dataclass(frozen=True)
class DemandCurve:
    """Strictly decreasing demand ``D: [0, 1] -> [0, 1]``.

    ``linear``: ``D(p) = 1 - p``. ``power``: ``D(p) = (1 - p)^exponent``.
    ``tabulated``: monotone cubic through ``(prices, values)``; its inverse
    is found by bisection.
    """

    kind: str = "linear"
    exponent: float = 1.0
    prices: tuple[float, ...] = ()
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DemandDomainError(f"unknown demand kind {self.kind!r}")
        if self.kind == "power" and not self.exponent > 0:
            raise DemandDomainError("power demand needs a positive exponent")
        if self.kind == "tabulated":
            p = tuple(float(x) for x in self.prices)
            v = tuple(float(x) for x in self.values)
            object.__setattr__(self, "prices", p)
            object.__setattr__(self, "values", v)
            if len(p) != len(v) or len(p) < 2:
                raise DemandDomainError("demand table needs matching prices and values")
            if p[0] != 0.0 or p[-1] != 1.0 or any(b <= a for a, b in zip(p, p[1:])):
                raise DemandDomainError("demand prices must increase strictly from 0 to 1")
            if any(b >= a for a, b in zip(v, v[1:])):
                raise DemandDomainError("demand must be strictly decreasing")
            if v[0] > 1.0 or v[-1] < 0.0:
                raise DemandDomainError("demand values must lie in [0, 1]")

    @classmethod
    def linear(cls) -> "DemandCurve":
        return cls("linear")

    @classmethod
    def power(cls, exponent: float) -> "DemandCurve":
        return cls("power", exponent=float(exponent))

    @classmethod
    def tabulated(cls, prices, values) -> "DemandCurve":
        return cls("tabulated", prices=tuple(prices), values=tuple(values))

    @classmethod
    def from_function(cls, fn: Callable[[float], float], knots: int = 201) -> "DemandCurve":
        """Tabulate an arbitrary demand evaluator; rejects flat or rising pieces."""
        p = np.linspace(0.0, 1.0, knots)
        return cls.tabulated(p, [float(fn(x)) for x in p])

    @cached_property
    def _spline(self):
        return PchipInterpolator(np.asarray(self.prices), np.asarray(self.values))

    @property
    def top(self) -> float:
        """``D(0)``: demand at price zero."""
        return float(self(0.0))

    @property
    def bottom(self) -> float:
        return float(self(1.0))

    def __call__(self, p):
        p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
        if self.kind == "linear":
            return 1.0 - p
        if self.kind == "power":
            return (1.0 - p) ** self.exponent
        return self._spline(p)

    def inverse(self, x):
        """``D^{-1}(x)``, extended by 0 above ``D(0)`` and by 1 below ``D(1)``."""
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            return np.clip(1.0 - x, 0.0, 1.0)
        if self.kind == "power":
            return 1.0 - np.clip(x, 0.0, 1.0) ** (1.0 / self.exponent)
        return self._inverse_tabulated(x)

    @cached_property
    def _inverse_spline(self):
        return PchipInterpolator(np.asarray(self.values[::-1]), np.asarray(self.prices[::-1]))

    def _inverse_tabulated(self, x: np.ndarray) -> np.ndarray:
        """Monotone cubic inverse, polished by Newton steps kept inside a bisection bracket."""
        xs = np.clip(x, self.values[-1], self.values[0])
        p = np.clip(self._inverse_spline(xs), 0.0, 1.0)
        lo, hi = np.zeros_like(p), np.ones_like(p)
        for _ in range(INVERSE_STEPS):
            g = self._spline(p) - xs
            lo = np.where(g > 0, p, lo)
            hi = np.where(g <= 0, p, hi)
            if np.all(np.abs(g) <= INVERSE_TOL):
                break
            d = self._spline(p, 1)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = p - g / d
            inside = np.isfinite(step) & (step > lo) & (step < hi)
            p = np.where(inside, step, 0.5 * (lo + hi))
        p = np.where(x >= self.values[0], 0.0, p)
        return np.where(x <= self.values[-1], 1.0, p)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind}
        if self.kind == "power":
            d["exponent"] = self.exponent
        if self.kind == "tabulated":
            d["prices"] = list(self.prices)
            d["values"] = list(self.values)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "DemandCurve":
        return cls(
            d["kind"], float(d.get("exponent", 1.0)),
            tuple(d.get("prices", ())), tuple(d.get("values", ())),
        )


@register_cost_family
@dataclass(frozen=True)
class DemandCost(CostFunction):
    """``c(a) = int_0^a [1 - D^{-1}(x)] dx``; convex because ``D^{-1}`` decreases."""

    demand: DemandCurve
    family: ClassVar[str] = "demand"

    def __post_init__(self):
        if isinstance(self.demand, dict):
            object.__setattr__(self, "demand", DemandCurve.from_dict(self.demand))

    def __call__(self, a):
        """Adaptive Simpson between consecutive sorted efforts, accumulated."""
        a = np.maximum(np.asarray(a, dtype=float), 0.0)
        flat = a.ravel()
        order = np.argsort(flat)
        f = lambda x: float(self.d1(x))
        out = np.empty_like(flat)
        acc, prev = 0.0, 0.0
        for i in order:
            acc += adaptive_simpson(f, prev, flat[i])
            prev = flat[i]
            out[i] = acc
        return out.reshape(a.shape)

    def d1(self, a):
        return 1.0 - self.demand.inverse(np.maximum(np.asarray(a, dtype=float), 0.0))

    def d2(self, a):
        """``-(D^{-1})'(a)``, by central differences for tabulated demand."""
        a = np.asarray(a, dtype=float)
        D = self.demand
        if D.kind == "linear":
            return np.ones_like(a)
        if D.kind == "power":
            k = D.exponent
            with np.errstate(divide="ignore"):
                return np.clip(a, 0.0, 1.0) ** (1.0 / k - 1.0) / k
        h = 1e-6
        return (self.d1(a + h) - self.d1(np.maximum(a - h, 0.0))) / (a + h - np.maximum(a - h, 0.0))

    def params(self):
        return {"demand": self.demand.to_dict()}


def demand_to_cost(D: DemandCurve) -> DemandCost:
    """Cost function whose linear-share response curve is ``D``."""
    if not isinstance(D, DemandCurve):
        raise DemandDomainError("expected a DemandCurve")
    return DemandCost(D)


@dataclass(frozen=True)
class ResponseCurve:
    """Effort ``a(alpha) = (c')^{-1}(1 - alpha)`` as a function of the kept share."""

    cost: CostFunction
    effort_cap: float = 1.0

    def _one(self, alpha: float) -> float:
        target = 1.0 - alpha
        E = self.effort_cap
        if float(self.cost.d1(0.0)) >= target:
            return 0.0
        if float(self.cost.d1(E)) <= target:
            return E
        lo, hi = 0.0, E
        while hi - lo > BISECT_TOL:
            mid = 0.5 * (lo + hi)
            if float(self.cost.d1(mid)) < target:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def __call__(self, alpha):
        return np.vectorize(self._one, otypes=[float])(np.asarray(alpha, dtype=float))


def response_curve(c: CostFunction, effort_cap: float = 1.0) -> ResponseCurve:
    return ResponseCurve(c, effort_cap)


def expected_pricing_utility(D: DemandCurve, alpha):
    """Seller's revenue ``alpha D(alpha)`` at posted price ``alpha``."""
    alpha = np.asarray(alpha, dtype=float)
    return alpha * D(alpha)


def contracting_utility(c: CostFunction, beta, effort_cap: float = 1.0):
    """Principal's expected utility ``(1 - beta) a`` when posting share ``beta``."""
    beta = np.asarray(beta, dtype=float)
    return (1.0 - beta) * response_curve(c, effort_cap)(1.0 - beta)


def binary_env(D: DemandCurve) -> AgentType:
    """Binary-outcome environment (success probability = effort) with the demand cost."""
    return AgentType(OutcomeGrid((0.0, 1.0)), BernoulliEffort(), demand_to_cost(D), 1.0, beta_max=1.0)


BUILTIN_DEMANDS: dict[str, DemandCurve] = {
    "linear": DemandCurve.linear(),
    "quadratic": DemandCurve.power(2.0),
}


@dataclass
class Comparison:
    alpha: np.ndarray
    demand: np.ndarray
    response: np.ndarray
    pricing: np.ndarray
    contracting: np.ndarray

    @property
    def max_response_gap(self) -> float:
        return float(np.max(np.abs(self.response - self.demand)))

    @property
    def max_utility_gap(self) -> float:
        return float(np.max(np.abs(self.contracting - self.pricing)))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["alpha", "demand", "response", "pricing_utility", "contracting_utility"])
        for row in zip(self.alpha, self.demand, self.response, self.pricing, self.contracting):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


def compare(D: DemandCurve, points: int = 101) -> Comparison:
    """Demand, response curve and both utilities on an evenly spaced ``alpha`` grid."""
    alpha = np.linspace(0.0, 1.0, points)
    c = demand_to_cost(D)
    resp = response_curve(c)(alpha)
    return Comparison(
        alpha, D(alpha), resp, expected_pricing_utility(D, alpha), contracting_utility(c, 1.0 - alpha),
    )


def simulate_contracting(D: DemandCurve, alpha: float, rounds: int, rng: np.random.Generator) -> float:
    """Monte Carlo mean of ``(1 - beta) y`` in :func:`binary_env` at ``beta = 1 - alpha``."""
    env = binary_env(D)
    beta = 1.0 - alpha
    a = best_response_linear(env, beta)
    y = rng.random(rounds) < float(env.r(a))
    return float((1.0 - beta) * y.mean())


__all__ = [
    "DemandCurve", "DemandCost", "DemandDomainError", "ResponseCurve", "Comparison",
    "adaptive_simpson", "demand_to_cost", "response_curve", "expected_pricing_utility",
    "contracting_utility", "binary_env", "compare", "simulate_contracting", "BUILTIN_DEMANDS",
]
