"""Design generators: (generalized) Halton, Latin hypercube and uniform samples."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from .pointset import Box, PointSet, read_pointset

KINDS = ("halton", "generalized-halton", "lhs", "uniform", "file")
KIND_ALIASES = {"gh": "generalized-halton", "unif": "uniform", "random": "uniform"}
MAX_ENUMERATION_DIM = 6


class GeneratorConfigError(ValueError):
    pass


def first_primes(d: int) -> Tuple[int, ...]:
    primes = []
    candidate = 2
    while len(primes) < d:
        if all(candidate % p for p in primes if p * p <= candidate):
            primes.append(candidate)
        candidate += 1
    return tuple(primes)


def identity_perm(base: int) -> Tuple[int, ...]:
    return tuple(range(base))


def check_perm(perm: Sequence[int], base: int) -> Tuple[int, ...]:
    perm = tuple(int(p) for p in perm)
    if sorted(perm) != list(range(base)):
        raise GeneratorConfigError(f"{perm} is not a permutation of 0..{base - 1}")
    if perm[0] != 0:
        raise GeneratorConfigError(f"permutation for base {base} must fix 0, got {perm}")
    return perm


def rng_for(seed: int, *stream: int) -> np.random.Generator:
    """Counter-based (Philox) generator keyed by ``seed`` and a stream index."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *[int(s) for s in stream]])
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class GeneratorSpec:
    kind: str
    bases: Tuple[int, ...] = ()
    permutations: Tuple[Tuple[int, ...], ...] = ()
    seed: Optional[int] = None
    start_index: int = 1
    path: Optional[str] = None
    name: str = ""
    stream: int = 0

    def __post_init__(self):
        kind = KIND_ALIASES.get(self.kind, self.kind)
        if kind not in KINDS:
            raise GeneratorConfigError(f"unknown generator kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "bases", tuple(int(b) for b in self.bases))
        perms = tuple(tuple(int(v) for v in p) for p in self.permutations)
        object.__setattr__(self, "permutations", perms)
        if self.start_index < 1:
            raise GeneratorConfigError("start_index must be positive")
        if self.seed is not None and not 0 <= int(self.seed) < 2**64:
            raise GeneratorConfigError("seed must be a 64-bit unsigned integer")
        if kind == "halton" and perms:
            raise GeneratorConfigError("plain halton takes no permutations")
        if perms:
            if self.bases and len(perms) != len(self.bases):
                raise GeneratorConfigError("need exactly one permutation per base")
            bases = self.bases or tuple(len(p) for p in perms)
            for p, b in zip(perms, bases):
                check_perm(p, b)
            object.__setattr__(self, "bases", bases)
        if self.bases and len(set(self.bases)) != len(self.bases):
            raise GeneratorConfigError("bases must be distinct")

    @property
    def stochastic(self) -> bool:
        return self.kind in ("lhs", "uniform")

    def label(self) -> str:
        return self.name or self.kind

    def describe(self) -> str:
        parts = [f"kind={self.kind}"]
        if self.name:
            parts.append(f"name={self.name}")
        if self.bases:
            parts.append("bases=" + ",".join(map(str, self.bases)))
        if self.permutations:
            parts.append("perms=" + "|".join(",".join(map(str, p)) for p in self.permutations))
        if self.kind in ("halton", "generalized-halton"):
            parts.append(f"start={self.start_index}")
        if self.stochastic:
            parts.append(f"seed={self.seed}")
            parts.append(f"stream={self.stream}")
        if self.path:
            parts.append(f"path={self.path}")
        return " ".join(parts)

    def with_seed(self, seed: int, stream: int = 0) -> "GeneratorSpec":
        return GeneratorSpec(
            self.kind, self.bases, self.permutations, seed, self.start_index,
            self.path, self.name, stream,
        )


# --- radical inverse -------------------------------------------------------


def radical_inverse(index: int, base: int, perm: Optional[Sequence[int]] = None) -> float:
    """Mirror the base-``base`` digits of ``index`` about the radix point.

    Digit ``d_k`` (least significant first) contributes ``perm[d_k] * base**-(k+1)``.

    >>> radical_inverse(3, 2)
    0.75
    """
    if base < 2:
        raise GeneratorConfigError(f"base must be at least 2, got {base}")
    if index < 0:
        raise GeneratorConfigError("index must be non-negative")
    if perm is None:
        perm = range(base)
    elif len(perm) != base:
        raise GeneratorConfigError(f"permutation has length {len(perm)}, base is {base}")
    value = 0.0
    factor = 1.0 / base
    while index > 0:
        index, digit = divmod(index, base)
        value += perm[digit] * factor
        factor /= base
    return value


def _radical_inverse_vec(indices: np.ndarray, base: int, perm: Sequence[int]) -> np.ndarray:
    idx = indices.astype(np.int64).copy()
    perm = np.asarray(perm, dtype=float)
    value = np.zeros(idx.shape, dtype=float)
    factor = 1.0 / base
    while np.any(idx > 0):
        idx, digit = np.divmod(idx, base)
        value += perm[digit] * factor
        factor /= base
    return value


# --- generation ------------------------------------------------------------


def _halton(spec: GeneratorSpec, n: int, d: int) -> np.ndarray:
    bases = spec.bases or first_primes(d)
    if len(bases) != d:
        raise GeneratorConfigError(f"spec has {len(bases)} bases but d={d}")
    perms = spec.permutations or tuple(identity_perm(b) for b in bases)
    indices = np.arange(spec.start_index, spec.start_index + n, dtype=np.int64)
    cols = [_radical_inverse_vec(indices, b, p) for b, p in zip(bases, perms)]
    return np.column_stack(cols)


def _lhs(rng: np.random.Generator, n: int, d: int) -> np.ndarray:
    out = np.empty((n, d))
    below_one = np.nextafter(1.0, 0.0)
    for j in range(d):
        strata = rng.permutation(n)
        x = (strata + rng.random(n)) / n
        # rounding can nudge a value into the neighbouring stratum
        k = np.floor(x * n)
        high = k > strata
        x[high] = np.nextafter((strata[high] + 1) / n, 0.0)
        low = np.floor(x * n) < strata
        x[low] = np.nextafter(strata[low] / n, 1.0)
        out[:, j] = np.minimum(x, below_one)
    return out


def generate(spec: GeneratorSpec, n: int, d: int) -> PointSet:
    """Produce an ``n``-point design in ``[0, 1]^d`` as described by ``spec``."""
    if n < 1 or d < 1:
        raise GeneratorConfigError("n and d must be positive")
    if spec.kind in ("halton", "generalized-halton"):
        pts = _halton(spec, n, d)
    elif spec.kind in ("lhs", "uniform"):
        if spec.seed is None:
            raise GeneratorConfigError(f"{spec.kind} design requires a seed")
        rng = rng_for(spec.seed, spec.stream)
        pts = _lhs(rng, n, d) if spec.kind == "lhs" else rng.random((n, d))
    else:
        if spec.path is None:
            raise GeneratorConfigError("file design requires a path")
        ps = read_pointset(spec.path)
        if ps.n < n or ps.d != d:
            raise GeneratorConfigError(
                f"{spec.path} holds a {ps.n}x{ps.d} design, requested {n}x{d}"
            )
        if not ps.domain.is_unit():
            from .pointset import unscale

            ps = unscale(ps)
        pts = ps.points[:n]
    return PointSet(pts, Box.unit(d), spec.describe(), spec.seed)


# --- permutation files -----------------------------------------------------


def parse_permutations(text: str) -> Tuple[Tuple[int, ...], Tuple[Tuple[int, ...], ...]]:
    """Parse ``base: p(0) p(1) ... p(b-1)`` lines into ``(bases, perms)``."""
    bases, perms = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, sep, tail = line.partition(":")
        if not sep:
            raise GeneratorConfigError(f"line {lineno}: expected 'base: digits...'")
        try:
            base = int(head)
            perm = [int(tok) for tok in tail.split()]
        except ValueError:
            raise GeneratorConfigError(f"line {lineno}: non-integer entry") from None
        if len(perm) != base:
            raise GeneratorConfigError(f"line {lineno}: base {base} needs {base} digits")
        bases.append(base)
        perms.append(check_perm(perm, base))
    return tuple(bases), tuple(perms)


def format_permutations(bases: Sequence[int], perms: Sequence[Sequence[int]]) -> str:
    return "".join(f"{b}: {' '.join(map(str, p))}\n" for b, p in zip(bases, perms))


def load_permutations(path) -> Tuple[Tuple[int, ...], Tuple[Tuple[int, ...], ...]]:
    return parse_permutations(Path(path).read_text())


def braaten_weller(d: int) -> GeneratorSpec:
    """Generalized Halton spec with the Braaten-Weller digit scrambles."""
    text = resources.files("oneshot.data").joinpath("braaten_weller.perm").read_text()
    bases, perms = parse_permutations(text)
    if d > len(bases):
        raise GeneratorConfigError(f"Braaten-Weller table covers d <= {len(bases)}")
    return GeneratorSpec("generalized-halton", bases[:d], perms[:d], name="bw")


def halton(d: int) -> GeneratorSpec:
    return GeneratorSpec("halton", first_primes(d), name="halton")


# --- enumeration and search ------------------------------------------------


def count_generalized_halton(d: int) -> int:
    return math.prod(math.factorial(b - 1) for b in first_primes(d))


def enumerate_generalized_halton(d: int) -> Iterator[Tuple[Tuple[int, ...], ...]]:
    """Yield every tuple of zero-fixing digit permutations over the first ``d`` primes.

    The first tuple is all identities, so a budget of one reproduces plain Halton.
    """
    if d > MAX_ENUMERATION_DIM:
        raise GeneratorConfigError(
            f"refusing to enumerate {count_generalized_halton(d):.3e} generators for d={d}"
        )
    per_base = [
        [(0,) + p for p in itertools.permutations(range(1, b))] for b in first_primes(d)
    ]
    return itertools.product(*per_base)


def search_best_generator(
    n: int, d: int, budget: Optional[int] = None, progress=None, screen_trials: int = 2000
) -> Tuple[GeneratorSpec, float]:
    """Exhaustively search generalized Halton designs for the smallest exact D*.

    ``budget`` caps the number of enumerated tuples (``None`` means all of them).
    Ties keep the earliest tuple in enumeration order. A candidate whose random
    lower bound already exceeds the incumbent is discarded without the exact
    computation; this never changes the result.
    """
    from .discrepancy import star_discrepancy_exact, star_discrepancy_lower_bound

    bases = first_primes(d)
    best_perms, best_value = None, math.inf
    for count, perms in enumerate(enumerate_generalized_halton(d)):
        if budget is not None and count >= budget:
            break
        spec = GeneratorSpec("generalized-halton", bases, perms)
        ps = generate(spec, n, d)
        if screen_trials and best_value < math.inf:
            lower = star_discrepancy_lower_bound(ps, screen_trials, seed=count).value
            if lower > best_value:
                if progress is not None:
                    progress(count, perms, lower, best_value)
                continue
        # candidates that cannot beat the incumbent are abandoned early
        res = star_discrepancy_exact(ps, abort_above=best_value)
        value = res.value
        if res.exact and value < best_value:
            best_perms, best_value = perms, value
        if progress is not None:
            progress(count, perms, value, best_value)
    if best_perms is None:
        raise GeneratorConfigError("search budget exhausted before any evaluation")
    return GeneratorSpec("generalized-halton", bases, best_perms, name="best"), best_value
