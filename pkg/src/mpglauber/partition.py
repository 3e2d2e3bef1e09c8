"""Graph-family parameters for the complete multipartite Ising model."""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence


class SpecError(ValueError):
    """An invalid partition specification; the message names the violated invariant."""


def parse_fraction(text: str | int | float | Fraction) -> Fraction:
    if isinstance(text, Fraction):
        return text
    if isinstance(text, float):
        return Fraction(text).limit_denominator(10**9)
    return Fraction(str(text).strip())


def parse_proportions(text: str | Iterable) -> tuple[Fraction, ...]:
    """Parse ``"1/4,3/4"`` (or an iterable of numbers) into exact fractions."""
    if isinstance(text, str):
        items = [t for t in text.split(",") if t.strip()]
    else:
        items = list(text)
    return tuple(parse_fraction(t) for t in items)


@dataclass(frozen=True)
class PartitionSpec:
    """Parameters of the Ising model on K_{np_1, ..., np_m}.

    Parameters
    ----------
    p : sequence of Fraction
        Partition proportions, each positive, non-decreasing, summing to 1.
    n : int
        Total number of vertices; every ``n * p_i`` must be an integer.
    beta : float
        Inverse temperature, non-negative.
    """

    p: tuple[Fraction, ...]
    n: int
    beta: float = 0.0

    def __post_init__(self):
        p = tuple(parse_fraction(x) for x in self.p)
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "beta", float(self.beta))
        if len(p) == 0:
            raise SpecError("m >= 1: at least one partition is required")
        if any(x <= 0 for x in p):
            raise SpecError("p_i > 0: every proportion must be positive")
        if sum(p) != 1:
            raise SpecError(f"sum(p) == 1: proportions sum to {sum(p)}")
        if any(a > b for a, b in zip(p, p[1:])):
            raise SpecError("p sorted: proportions must be non-decreasing")
        if not isinstance(self.n, (int,)) or isinstance(self.n, bool) or self.n < 1:
            raise SpecError("n >= 1: vertex count must be a positive integer")
        for x in p:
            if (self.n * x).denominator != 1:
                raise SpecError(f"n*p_i integral: n={self.n} times p_i={x} is not an integer")
        if not math.isfinite(self.beta) or self.beta < 0:
            raise SpecError("beta >= 0: inverse temperature must be finite and non-negative")

    @classmethod
    def parse(cls, p: str | Sequence, n: int, beta: float = 0.0, m: int | None = None):
        props = parse_proportions(p)
        if m is not None and m != len(props):
            raise SpecError(f"len(p) == m: got {len(props)} proportions for m={m}")
        return cls(props, int(n), beta)

    @classmethod
    def equal(cls, m: int, n: int, beta: float = 0.0):
        return cls(tuple(Fraction(1, m) for _ in range(m)), n, beta)

    @property
    def m(self) -> int:
        return len(self.p)

    @property
    def sizes(self) -> tuple[int, ...]:
        """Partition sizes ``|J_i| = n p_i``."""
        return tuple(int(self.n * x) for x in self.p)

    @property
    def offsets(self) -> tuple[int, ...]:
        out, acc = [], 0
        for s in self.sizes:
            out.append(acc)
            acc += s
        return tuple(out)

    @property
    def p_float(self):
        import numpy as np

        return np.array([float(x) for x in self.p])

    def with_n(self, n: int) -> "PartitionSpec":
        return PartitionSpec(self.p, n, self.beta)

    def with_beta(self, beta: float) -> "PartitionSpec":
        return PartitionSpec(self.p, self.n, beta)

    def min_n(self) -> int:
        """Smallest n for which every n p_i is an integer."""
        return math.lcm(*(x.denominator for x in self.p))

    def cutoff_time(self, upsilon: float) -> float:
        """t_n = n ln n / (2 upsilon), the cutoff location."""
        return self.n * math.log(self.n) / (2.0 * upsilon)

    def describe(self) -> dict:
        return {
            "m": self.m,
            "p": [str(x) for x in self.p],
            "n": self.n,
            "beta": self.beta,
        }
