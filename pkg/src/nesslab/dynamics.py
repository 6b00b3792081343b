"""Heisenberg time evolution at finite volume.

Two routes: exact unitary conjugation through the spectral decomposition of
the generator (the production path, valid for any time), and the truncated
power series of the derivation (a verification path, valid only inside its
convergence radius, which reports a rigorous tail bound). A convergence
sweep compares nested volumes pairwise, both for the evolution itself and
order by order for the derivation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import opalg, volume as volume_mod
from .model import ModelSpec, PerturbationFamily, ZERO_FAMILY, lambda_norm
from .opalg import DenseOperator, SpectralData


@dataclass(frozen=True)
class EvolutionPlan:
    """A generator with its spectral factorization, reusable across times."""

    generator: DenseOperator
    spectral: SpectralData
    times: tuple[float, ...] = ()


def make_plan(generator: DenseOperator, times: Sequence[float] = ()) -> EvolutionPlan:
    if not generator.is_hermitian():
        raise ValueError("evolution generator must be Hermitian")
    return EvolutionPlan(generator, opalg.spectral(generator), tuple(times))


def exact_evolve(plan: EvolutionPlan, a: DenseOperator, t: float) -> DenseOperator:
    """Conjugate by exp(i t generator): the exact Heisenberg evolution."""
    if not plan.generator.same_volume(a):
        raise ValueError("operator volume does not match the plan's generator")
    sd = plan.spectral
    phases = np.exp(1j * t * sd.raw_eigenvalues)
    rotated = (sd.basis.conj().T @ a.matrix) @ sd.basis
    rotated = (phases[:, None] * rotated) * phases.conj()[None, :]
    return a.with_matrix(sd.basis @ rotated @ sd.basis.conj().T)


class _EmbeddedInteraction:
    """In-volume interaction (plus optional perturbation) with cached embeddings."""

    def __init__(self, spec: ModelSpec, sites: Sequence[int],
                 perturbation: PerturbationFamily | None = None):
        self.sites = tuple(sorted(set(sites)))
        self.dims = spec.dims_for(self.sites)
        family = ZERO_FAMILY if perturbation is None else perturbation
        inside = set(self.sites)
        self.terms: list[tuple[frozenset[int], np.ndarray]] = []
        for term in spec.terms:
            if set(term.support) <= inside:
                emb = opalg.embed(spec.term_operator(term), self.sites, self.dims)
                self.terms.append((frozenset(term.support), emb.matrix))
        for term in family.terms_for(self.sites):
            if set(term.support) <= inside:
                emb = opalg.embed(spec.term_operator(term), self.sites, self.dims)
                self.terms.append((frozenset(term.support), emb.matrix))

    def derivation(self, a: DenseOperator) -> DenseOperator:
        """i [sum of terms meeting the support of a, a]."""
        meeting = [(supp, mat) for supp, mat in self.terms if supp & a.support]
        if not meeting:
            return opalg.zero(self.sites, self.dims)
        h_part = np.zeros_like(a.matrix)
        grown = set(a.support)
        for supp, mat in meeting:
            h_part += mat
            grown |= supp
        out = 1j * (h_part @ a.matrix - a.matrix @ h_part)
        return DenseOperator(self.sites, self.dims, out, frozenset(grown))


def derivation(spec: ModelSpec, volume: Iterable[int], a: DenseOperator,
               perturbation: PerturbationFamily | None = None) -> DenseOperator:
    """The finite-volume derivation of the dynamics applied to ``a``.

    Sums i[term, a] over in-volume terms whose support meets the support of
    ``a``; terms disjoint from it commute with ``a``, so this equals the
    commutator with the full volume Hamiltonian.
    """
    sites = tuple(sorted(set(volume)))
    if not set(a.sites) <= set(sites):
        raise ValueError("operator support must lie inside the volume")
    emb = _EmbeddedInteraction(spec, sites, perturbation)
    return emb.derivation(opalg.embed(a, sites, emb.dims))


@dataclass(frozen=True)
class DysonConfig:
    """Truncation order, target tolerance and norm parameters for the series."""

    lam: float
    mu: float = 0.0
    max_order: int = 12
    target_tol: float = 0.0

    def __post_init__(self):
        if not self.lam > self.mu >= 0:
            raise ValueError("need lam > mu >= 0")
        if self.max_order < 1:
            raise ValueError("max_order must be >= 1")


def series_radius(spec: ModelSpec, perturbation: PerturbationFamily | None = None) -> float:
    """Convergence radius of the truncated series, perturbation included."""
    k = 0.0 if perturbation is None else perturbation.bound_K
    denom = lambda_norm(spec) + k
    if denom == 0.0:
        return math.inf
    return spec.lam / (2.0 * denom)


def dyson_evolve(spec: ModelSpec, volume: Iterable[int], a: DenseOperator, t: float,
                 cfg: DysonConfig | None = None,
                 perturbation: PerturbationFamily | None = None,
                 ) -> tuple[DenseOperator, float]:
    """Truncated power-series evolution with a rigorous tail bound.

    Returns the partial sum over orders m <= M of t^m delta^m(a) / m! and
    the geometric tail majorant ||a|| e^{lam card X} r^{M+1} / (1 - r) with
    r = 2 |t| (||Phi||_lam + K) / lam. Times at or beyond the convergence
    radius are refused since the majorant diverges there.
    """
    if cfg is None:
        cfg = DysonConfig(lam=spec.lam)
    k = 0.0 if perturbation is None else perturbation.bound_K
    norm_phi = lambda_norm(spec)
    ratio = 2.0 * abs(t) * (norm_phi + k) / cfg.lam
    if ratio >= 1.0:
        raise ValueError(
            f"|t|={abs(t):.6g} is outside the series radius "
            f"{series_radius(spec, perturbation):.6g}; the error bound diverges")

    sites = tuple(sorted(set(volume)))
    emb = _EmbeddedInteraction(spec, sites, perturbation)
    a_vol = opalg.embed(a, sites, emb.dims)
    if t == 0.0:
        return a_vol, 0.0
    envelope = opalg.op_norm(a_vol) * math.exp(cfg.lam * len(a_vol.support))

    partial = a_vol
    current = a_vol
    order = cfg.max_order
    for m in range(1, cfg.max_order + 1):
        current = emb.derivation(current)
        partial = partial + (t**m / math.factorial(m)) * current
        tail = envelope * ratio ** (m + 1) / (1.0 - ratio)
        if cfg.target_tol > 0 and tail <= cfg.target_tol:
            order = m
            break
    bound = envelope * ratio ** (order + 1) / (1.0 - ratio)
    return partial, float(bound)


def derivation_growth_bound(spec: ModelSpec, a: DenseOperator, m: int,
                            mu: float = 0.0) -> float:
    """Majorant for the m-th derivation power applied to ``a``.

    Returns ||a|| e^{lam card X} m! (2 ||Phi||_lam / (lam - mu))^m, valid in
    the mu-weighted norm (hence in the operator norm) for 0 <= mu < lam;
    mu = 0 gives the plain growth bound of the series.
    """
    if not spec.lam > mu >= 0:
        raise ValueError("need lam > mu >= 0")
    norm_phi = lambda_norm(spec)
    return (opalg.op_norm(a) * math.exp(spec.lam * len(a.support))
            * math.factorial(m) * (2.0 * norm_phi / (spec.lam - mu)) ** m)


@dataclass(frozen=True)
class SweepRow:
    pair_index: int
    t: float
    discrepancy: float


@dataclass(frozen=True)
class OrderRow:
    pair_index: int
    order: int
    discrepancy: float


@dataclass(frozen=True)
class DysonRow:
    volume_index: int
    t: float
    error: float
    bound: float


@dataclass(frozen=True)
class ConvergenceSweepReport:
    evolution_rows: tuple[SweepRow, ...]
    order_rows: tuple[OrderRow, ...]
    dyson_rows: tuple[DysonRow, ...]

    def pair_sup(self, pair_index: int) -> float:
        return max((r.discrepancy for r in self.evolution_rows
                    if r.pair_index == pair_index), default=0.0)


def convergence_sweep(spec: ModelSpec, exhaustion: Sequence[Iterable[int]],
                      a: DenseOperator, t_grid: Sequence[float],
                      perturbation: PerturbationFamily | None = None,
                      max_order: int = 4) -> ConvergenceSweepReport:
    """Compare the dynamics across a nested family of volumes.

    For each consecutive volume pair the report carries the norm difference
    of the evolved observable at each time and the per-order differences of
    the derivation powers, computed in the larger volume (embedding is
    isometric). Each volume also gets truncated-series error rows against
    the exact evolution, with the reported tail bound, for times inside the
    series radius.
    """
    vols = [tuple(sorted(set(v))) for v in exhaustion]
    for small, large in zip(vols, vols[1:]):
        if not set(small) < set(large):
            raise ValueError("exhaustion must be strictly nested ascending")
    if not set(a.sites) <= set(vols[0]):
        raise ValueError("observable must be supported in the smallest volume")

    embeddings = [_EmbeddedInteraction(spec, v, perturbation) for v in vols]
    built = [volume_mod.build(spec, v, perturbation) for v in vols]
    plans = [make_plan(b.H_B) for b in built]
    a_in = [opalg.embed(a, e.sites, e.dims) for e in embeddings]

    evolved = []
    for plan, a_v in zip(plans, a_in):
        evolved.append([exact_evolve(plan, a_v, t) for t in t_grid])

    evo_rows = []
    for i in range(len(vols) - 1):
        for j, t in enumerate(t_grid):
            lifted = opalg.embed(evolved[i][j], a_in[i + 1].sites, a_in[i + 1].dims)
            evo_rows.append(SweepRow(i, float(t),
                                     opalg.op_norm(lifted - evolved[i + 1][j])))

    powers = []
    for emb, a_v in zip(embeddings, a_in):
        cur = a_v
        per_volume = []
        for _ in range(max_order):
            cur = emb.derivation(cur)
            per_volume.append(cur)
        powers.append(per_volume)

    order_rows = []
    for i in range(len(vols) - 1):
        for m in range(max_order):
            lifted = opalg.embed(powers[i][m], a_in[i + 1].sites, a_in[i + 1].dims)
            order_rows.append(OrderRow(i, m + 1,
                                       opalg.op_norm(lifted - powers[i + 1][m])))

    radius = series_radius(spec, perturbation)
    dyson_rows = []
    for i, (emb, plan, a_v) in enumerate(zip(embeddings, plans, a_in)):
        for t in t_grid:
            if abs(t) >= radius:
                continue
            approx, bound = dyson_evolve(spec, emb.sites, a_v, float(t),
                                         perturbation=perturbation)
            exact = exact_evolve(plan, a_v, float(t))
            dyson_rows.append(DysonRow(i, float(t),
                                       opalg.op_norm(approx - exact), bound))

    return ConvergenceSweepReport(tuple(evo_rows), tuple(order_rows), tuple(dyson_rows))
