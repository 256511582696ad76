"""Exact integer number-theoretic kernels.

Divisors, Euler's totient, prime factorization, Ramanujan sums and the
sparse (shifted/masked) Ramanujan sequences used as transform atoms.
Everything here works on Python ints, so results are exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import gcd

MAX_N = 2**31


class DomainError(ValueError):
    """Argument outside the domain of a numeric operation."""


def _check_positive(n: int, name: str = "n") -> None:
    if not isinstance(n, int) or isinstance(n, bool):
        raise DomainError(f"{name} must be an int, got {type(n).__name__}")
    if n < 1:
        raise DomainError(f"{name} must be positive, got {n}")


@dataclass(frozen=True)
class PrimePowerFactorization:
    """Canonical factorization ``n = prod(p ** r for p, r in factors)``."""

    factors: tuple[tuple[int, int], ...]

    def __post_init__(self):
        last = 1
        for p, r in self.factors:
            if p <= last or r < 1:
                raise DomainError(f"non-canonical factorization {self.factors}")
            last = p

    @property
    def value(self) -> int:
        out = 1
        for p, r in self.factors:
            out *= p**r
        return out

    def __iter__(self):
        return iter(self.factors)

    def __len__(self):
        return len(self.factors)


@dataclass(frozen=True)
class PeriodicIntSequence:
    """One period of an integer sequence; ``seq[n]`` wraps modulo the period."""

    period: int
    values: tuple[int, ...]

    def __post_init__(self):
        if len(self.values) != self.period:
            raise DomainError(
                f"period {self.period} does not match {len(self.values)} values"
            )

    def __getitem__(self, n: int) -> int:
        return self.values[n % self.period]

    def __len__(self):
        return self.period

    def __eq__(self, other):
        if isinstance(other, PeriodicIntSequence):
            return self.period == other.period and self.values == other.values
        return list(self.values) == list(other)

    def __hash__(self):
        return hash((self.period, self.values))

    def tolist(self) -> list[int]:
        return list(self.values)


def factorize(n: int) -> PrimePowerFactorization:
    """Prime factorization by trial division; ``factorize(1)`` is empty."""
    _check_positive(n)
    return _factorize(n)


@lru_cache(maxsize=4096)
def _factorize(n: int) -> PrimePowerFactorization:
    factors = []
    p = 2
    while p * p <= n:
        if n % p == 0:
            r = 0
            while n % p == 0:
                n //= p
                r += 1
            factors.append((p, r))
        p += 1 if p == 2 else 2
    if n > 1:
        factors.append((n, 1))
    return PrimePowerFactorization(tuple(factors))


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    f = _factorize(n).factors
    return len(f) == 1 and f[0][1] == 1


def divisors(n: int) -> list[int]:
    """All divisors of ``n`` in increasing order."""
    _check_positive(n)
    if n > MAX_N:
        raise DomainError(f"n must be at most 2**31, got {n}")
    divs = [1]
    for p, r in _factorize(n):
        divs = [d * p**e for d in divs for e in range(r + 1)]
    return sorted(divs)


def totient(n: int) -> int:
    """Euler's totient via the product formula."""
    _check_positive(n)
    out = n
    for p, _ in _factorize(n):
        out = out // p * (p - 1)
    return out


def mobius(n: int) -> int:
    _check_positive(n)
    f = _factorize(n).factors
    if any(r > 1 for _, r in f):
        return 0
    return -1 if len(f) % 2 else 1


@lru_cache(maxsize=1024)
def ramanujan_sum(q: int) -> PeriodicIntSequence:
    """One period of the Ramanujan sum ``c_q(n)``, ``n = 0..q-1``.

    Uses the closed form ``mu(q/g) * phi(q) / phi(q/g)`` with
    ``g = gcd(n, q)``, which is exact in integer arithmetic.
    """
    _check_positive(q, "q")
    phi_q = totient(q)
    vals = []
    for n in range(q):
        m = q // gcd(n, q)
        vals.append(mobius(m) * phi_q // totient(m))
    return PeriodicIntSequence(q, tuple(vals))


@lru_cache(maxsize=4096)
def sparse_ramanujan(q: int, k: int) -> PeriodicIntSequence:
    """One period of the sparse Ramanujan sequence ``c^k_q``.

    For ``r = n mod q`` the value is zero below ``k``, ``c_q(0) - k`` at
    ``r == k`` and ``c_q(r - k)`` above. ``q`` must be prime and
    ``0 <= k < q - 1``; ``k == 0`` reproduces ``c_q``.
    """
    _check_positive(q, "q")
    if not is_prime(q):
        raise DomainError(f"q must be prime, got {q}")
    if not isinstance(k, int) or not 0 <= k < q - 1:
        raise DomainError(f"k must satisfy 0 <= k < {q - 1}, got {k}")
    c = ramanujan_sum(q)
    vals = []
    for n in range(q):
        r = n % q
        step = 1 if r >= k else 0
        impulse = 1 if r == k else 0
        vals.append(step * c[r - k] - k * impulse)
    return PeriodicIntSequence(q, tuple(vals))
