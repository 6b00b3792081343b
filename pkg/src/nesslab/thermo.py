"""States and thermodynamics at finite volume.

Gibbs and product initial states, the KMS residual check, time-averaged
steady-state proxies (exact in the horizon through the spectral averaging
kernel), reservoir energy fluxes, entropy production with its exact
finite-volume nonnegativity, and the monotone-function trace inequality
with its doubly stochastic witness.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np

from . import opalg
from .dynamics import EvolutionPlan, exact_evolve, make_plan
from .model import ModelSpec, PerturbationFamily, redraw
from .opalg import DenseOperator
from .volume import VolumeOperators, build

DEGENERATE_FREQ_TOL = 1e-13


@dataclass(frozen=True)
class StateRep:
    """A density matrix on a finite volume: Hermitian, unit trace, positive."""

    sites: tuple[int, ...]
    dims: tuple[int, ...]
    density: np.ndarray

    def __post_init__(self):
        mat = np.asarray(self.density, dtype=complex)
        object.__setattr__(self, "density", mat)
        if mat.shape[0] != mat.shape[1]:
            raise ValueError("density matrix must be square")
        if abs(np.trace(mat) - 1.0) > 1e-10:
            raise ValueError(f"density trace {np.trace(mat):.12g} != 1")
        if np.max(np.abs(mat - mat.conj().T)) > 1e-10 * max(1.0, float(np.max(np.abs(mat)))):
            raise ValueError("density matrix must be Hermitian")

    @property
    def dim(self) -> int:
        return self.density.shape[0]

    def min_eigenvalue(self) -> float:
        return float(np.min(np.linalg.eigvalsh(0.5 * (self.density + self.density.conj().T))))

    def expectation(self, a: DenseOperator) -> float:
        """Real expectation value of a Hermitian observable."""
        if a.sites != self.sites:
            raise ValueError("observable volume does not match the state")
        # tr(rho A) as an entrywise sum, quadratic instead of cubic
        return float(np.real(np.sum(self.density.T * a.matrix)))


def gibbs(h: DenseOperator, beta: float) -> StateRep:
    """exp(-beta H) / tr exp(-beta H) through the spectral decomposition.

    The exponent is shifted by its largest value before exponentiation so
    the weights stay in (0, 1]; any real beta yields a valid state.
    """
    sd = opalg.spectral(h)
    x = beta * sd.raw_eigenvalues
    weights = np.exp(-(x - np.min(x)))
    density = (sd.basis * weights) @ sd.basis.conj().T
    density /= np.real(np.trace(density))
    return StateRep(h.sites, h.dims, density)


def initial_state(vols: VolumeOperators, betas: Mapping[int, float] | None = None) -> StateRep:
    """The product state exp(-G): reservoirs at their own temperatures,
    normalized trace on the small system."""
    if betas is not None:
        for a, beta in betas.items():
            if a in vols.betas and abs(vols.betas[a] - beta) > 0:
                raise ValueError(
                    f"reservoir {a}: beta {beta} differs from the built volume's "
                    f"{vols.betas[a]}")
    sd = opalg.spectral(vols.G)
    # G's normalization already puts exp(-G) on unit trace (its eigenvalues
    # are nonnegative); renormalize only the roundoff
    density = (sd.basis * np.exp(-sd.raw_eigenvalues)) @ sd.basis.conj().T
    tr = float(np.real(np.trace(density)))
    if abs(tr - 1.0) > 1e-8:
        raise ValueError(f"exp(-G) trace {tr:.12g} deviates from 1")
    density /= tr
    return StateRep(vols.sites, vols.dims, density)


def product_initial_state(spec: ModelSpec, volume: Iterable[int],
                          perturbation: PerturbationFamily | None = None) -> StateRep:
    """Independent construction of the initial state as an explicit tensor
    product of per-reservoir Gibbs blocks and the normalized trace on the
    small system; used to cross-check :func:`initial_state`."""
    sites = tuple(sorted(set(volume)))
    dims = spec.dims_for(sites)
    density = np.eye(int(np.prod(dims)), dtype=complex)
    for a in spec.reservoirs:
        block_sites = tuple(sorted(spec.regions.sites_in(a) & set(sites)))
        if not block_sites:
            continue
        block_dims = spec.dims_for(block_sites)
        block = opalg.zero(block_sites, block_dims)
        for term in spec.terms:
            if set(term.support) <= set(block_sites):
                block = block + opalg.embed(spec.term_operator(term), block_sites, block_dims)
        for term in (perturbation.terms_for(sites) if perturbation else ()):
            if set(term.support) <= set(block_sites):
                block = block + opalg.embed(spec.term_operator(term), block_sites, block_dims)
        rho_a = gibbs(block, spec.betas[a])
        lifted = opalg.embed(DenseOperator(block_sites, block_dims, rho_a.density),
                             sites, dims)
        density = density @ lifted.matrix
    covered = frozenset().union(*(spec.regions.sites_in(a) for a in spec.reservoirs)) & set(sites)
    rest_dim = int(np.prod([d for s, d in zip(sites, dims) if s not in covered])) or 1
    density /= rest_dim
    return StateRep(sites, dims, density)


def kms_check(state: StateRep, h: DenseOperator, beta: float,
              a: DenseOperator, b: DenseOperator) -> float:
    """Residual of the equilibrium boundary condition for a Gibbs state.

    Computes |omega(A alpha^{i beta} B) - omega(B A)| with
    alpha^{i beta} B = e^{-beta H} B e^{beta H} evaluated through the
    spectral decomposition. The state must be the Gibbs state of (H, beta);
    anything else makes the residual meaningless and is refused.
    """
    reference = gibbs(h, beta)
    if np.max(np.abs(reference.density - state.density)) > 1e-8:
        raise ValueError("state was not generated from (H, beta); residual is meaningless")
    sd = opalg.spectral(h)
    w = sd.raw_eigenvalues
    v = sd.basis
    a_t = v.conj().T @ a.matrix @ v
    b_t = v.conj().T @ b.matrix @ v
    rho_t = v.conj().T @ state.density @ v
    # analytically continued evolution of B in the eigenbasis
    b_shift = b_t * np.exp(-beta * (w[:, None] - w[None, :]))
    lhs = complex(np.trace(rho_t @ a_t @ b_shift))
    rhs = complex(np.trace(rho_t @ b_t @ a_t))
    return float(abs(lhs - rhs))


def _averaging_kernel(w: np.ndarray, horizon: float) -> np.ndarray:
    """(1/T) integral of e^{i t (w_k - w_j)} over [0, T], entry (j, k).

    Bohr frequencies below the degeneracy tolerance take the limiting
    value 1 (the kernel's removable singularity).
    """
    delta = w[None, :] - w[:, None]
    out = np.ones_like(delta, dtype=complex)
    mask = np.abs(delta) >= DEGENERATE_FREQ_TOL
    d = delta[mask] * horizon
    out[mask] = (np.exp(1j * d) - 1.0) / (1j * d)
    return out


def time_averaged_state(plan: EvolutionPlan, state: StateRep, horizon: float) -> StateRep:
    """The horizon average of the evolved state, exact in the horizon.

    Averaging the dual evolution over [0, T] multiplies the density matrix
    entrywise, in the generator eigenbasis, by the averaging kernel. The
    result is again a state (a convex average of states).
    """
    if horizon <= 0:
        raise ValueError("horizon must be > 0")
    sd = plan.spectral
    v = sd.basis
    rho_t = v.conj().T @ state.density @ v
    averaged = v @ (rho_t * _averaging_kernel(sd.raw_eigenvalues, horizon)) @ v.conj().T
    averaged = 0.5 * (averaged + averaged.conj().T)
    return StateRep(state.sites, state.dims, averaged)


def time_avg_expectation(vols: VolumeOperators, state: StateRep, a: DenseOperator,
                         horizon: float, plan: EvolutionPlan | None = None) -> float:
    """(1/T) integral over [0, T] of the evolved expectation of ``a``.

    The evolution is generated by the volume Hamiltonian plus reservoir
    perturbations; the average is computed by the exact spectral kernel,
    not by quadrature.
    """
    if horizon <= 0:
        raise ValueError("horizon must be > 0")
    if plan is None:
        plan = make_plan(vols.H_B)
    return time_averaged_state(plan, state, horizon).expectation(a)


def time_avg_expectation_quadrature(vols: VolumeOperators, state: StateRep,
                                    a: DenseOperator, horizon: float,
                                    panels: int = 128,
                                    plan: EvolutionPlan | None = None) -> float:
    """Composite-Simpson cross-check of :func:`time_avg_expectation`."""
    if plan is None:
        plan = make_plan(vols.H_B)
    ts = np.linspace(0.0, horizon, 2 * panels + 1)
    vals = np.array([state.expectation(exact_evolve(plan, a, float(t))) for t in ts])
    h = horizon / (2 * panels)
    integral = (h / 3.0) * (vals[0] + vals[-1] + 4.0 * vals[1:-1:2].sum()
                            + 2.0 * vals[2:-2:2].sum())
    return float(integral / horizon)


@dataclass(frozen=True)
class EntropyReport:
    """Fluxes, entropy production and sum-rule accounting for one horizon.

    ``e`` is the temperature-weighted flux sum; ``e_telescoped`` is the
    endpoint form (1/T)(<G(T)> - <G(0)>), which is nonnegative up to
    roundoff for every horizon. The two agree (and the sum-rule residual is
    bounded by ``tol_sum_rule``) whenever the reservoir perturbations
    vanish or commute with the interface part.
    """

    horizon: float
    fluxes: Mapping[int, float]
    e: float
    e_telescoped: float
    sum_rule_residual: float
    tol_sum_rule: float
    g_norm: float
    w_norm: float
    perturbed: bool

    def to_dict(self) -> dict:
        return {
            "T": self.horizon,
            "fluxes": {str(a): f for a, f in sorted(self.fluxes.items())},
            "e": self.e,
            "e_telescoped": self.e_telescoped,
            "sum_rule_residual": self.sum_rule_residual,
            "tol_sum_rule": self.tol_sum_rule,
        }

    def csv_row(self) -> list[float]:
        return ([self.horizon] + [f for _, f in sorted(self.fluxes.items())]
                + [self.e, self.e_telescoped, self.sum_rule_residual,
                   self.tol_sum_rule])


def entropy_production(vols: VolumeOperators, horizon: float,
                       plan: EvolutionPlan | None = None,
                       state: StateRep | None = None) -> EntropyReport:
    """Entropy production by two routes over one averaging horizon.

    Route one averages the reservoir current operators against the
    time-averaged initial product state and weights them by the inverse
    temperatures. Route two evaluates the weighted exponent at the horizon
    endpoints. The endpoint route is nonnegative exactly (up to roundoff
    in units of the exponent's norm), for every volume and horizon.
    """
    if horizon <= 0:
        raise ValueError("horizon must be > 0")
    if plan is None:
        plan = make_plan(vols.H_B)
    sigma = initial_state(vols) if state is None else state

    averaged = time_averaged_state(plan, sigma, horizon)
    fluxes = {a: averaged.expectation(cur) for a, cur in sorted(vols.currents.items())}
    e = sum(vols.betas[a] * f for a, f in fluxes.items())

    g_end = exact_evolve(plan, vols.G, horizon)
    e_tel = (sigma.expectation(g_end) - sigma.expectation(vols.G)) / horizon

    perturbed = any(np.any(b.matrix) for b in vols.B_a.values())
    return EntropyReport(
        horizon=float(horizon),
        fluxes=fluxes,
        e=float(e),
        e_telescoped=float(e_tel),
        sum_rule_residual=float(sum(fluxes.values())),
        tol_sum_rule=float(2.0 * vols.w_norm / horizon),
        g_norm=float(vols.g_norm),
        w_norm=float(vols.w_norm),
        perturbed=perturbed,
    )


@dataclass(frozen=True)
class HeatDirectionReport:
    """Two-reservoir check that heat flows from hot to cold."""

    horizon: float
    beta_pair: tuple[float, float]
    flux_into_first: float
    lhs: float
    slack: float
    ok: bool


def heat_direction_check(vols: VolumeOperators, horizon: float,
                         plan: EvolutionPlan | None = None) -> HeatDirectionReport:
    """Check (beta_1 - beta_2) * flux_1 >= -beta_2 * 2||W||/T - 1e-10.

    The inequality combines the nonnegativity of the entropy production
    with the sum-rule slack; it forces energy into the colder reservoir up
    to a horizon-decaying tolerance. Requires exactly two reservoirs.
    """
    reservoirs = vols.reservoirs
    if len(reservoirs) != 2:
        raise ValueError(f"heat direction check needs exactly 2 reservoirs, got {len(reservoirs)}")
    report = entropy_production(vols, horizon, plan=plan)
    a1, a2 = reservoirs
    b1, b2 = vols.betas[a1], vols.betas[a2]
    lhs = (b1 - b2) * report.fluxes[a1]
    slack = b2 * report.tol_sum_rule + 1e-10
    return HeatDirectionReport(
        horizon=float(horizon), beta_pair=(b1, b2),
        flux_into_first=report.fluxes[a1], lhs=float(lhs), slack=float(slack),
        ok=bool(lhs >= -slack),
    )


@dataclass(frozen=True)
class RedrawReport:
    """Entropy production under two boundary accountings of one state."""

    horizon: float
    e_original: float
    e_redrawn: float
    difference: float
    bound: float
    ok: bool


def boundary_redraw_check(spec: ModelSpec, new_small_system: Iterable[int],
                          volume: Iterable[int], horizon: float) -> RedrawReport:
    """Move the system/reservoir boundary and re-account the fluxes.

    The initial state, the dynamics and the averaging all come from the
    original decomposition; only the bookkeeping of which terms belong to
    which reservoir changes. The difference of the two entropy production
    values is bounded by (2/T) times the norm of the weighted reservoir
    Hamiltonian difference.
    """
    vols = build(spec, volume)
    redrawn_spec = redraw(spec, new_small_system)
    redrawn = build(redrawn_spec, volume)

    plan = make_plan(vols.H_B)
    sigma = initial_state(vols)
    averaged = time_averaged_state(plan, sigma, horizon)

    e_orig = sum(vols.betas[a] * averaged.expectation(cur)
                 for a, cur in vols.currents.items())
    e_new = sum(redrawn.betas[a] * averaged.expectation(cur)
                for a, cur in redrawn.currents.items())

    shift = opalg.zero(vols.sites, vols.dims)
    for a in vols.reservoirs:
        shift = shift + vols.betas[a] * (vols.H_a[a] - redrawn.H_a.get(
            a, opalg.zero(vols.sites, vols.dims)))
    bound = 2.0 * opalg.op_norm(shift) / horizon + 1e-9
    diff = abs(e_orig - e_new)
    return RedrawReport(
        horizon=float(horizon), e_original=float(e_orig), e_redrawn=float(e_new),
        difference=float(diff), bound=float(bound), ok=bool(diff <= bound),
    )


@dataclass(frozen=True)
class KleinWitness:
    """The doubly stochastic matrix behind the monotone trace inequality.

    ``c[k, l]`` is the overlap tr(E_k U E_l U^{-1}) of rank-one spectral
    projections of A with their conjugated counterparts; it is entrywise
    nonnegative with unit row and column sums. ``lhs <= rhs`` is the
    inequality tr(phi(A) U A U^{-1}) <= tr(phi(A) A).
    """

    eigenvalues: np.ndarray
    c: np.ndarray
    lhs: float
    rhs: float
    scale: float
    footnote_value: float | None = None

    @property
    def row_sum_deviation(self) -> float:
        return float(np.max(np.abs(self.c.sum(axis=1) - 1.0)))

    @property
    def col_sum_deviation(self) -> float:
        return float(np.max(np.abs(self.c.sum(axis=0) - 1.0)))

    @property
    def min_entry(self) -> float:
        return float(np.min(self.c))

    @property
    def violation(self) -> float:
        return self.lhs - self.rhs

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "c": [[float(x) for x in row] for row in self.c],
            "lhs": self.lhs,
            "rhs": self.rhs,
        }

    def csv_row(self) -> list[float]:
        return [float(self.eigenvalues.size), self.lhs, self.rhs,
                self.min_entry, self.row_sum_deviation, self.col_sum_deviation]


def klein_check(a: np.ndarray, u: np.ndarray, phi: Callable[[float], float],
                antiderivative: Callable[[float], float] | None = None) -> KleinWitness:
    """Check tr(phi(A) U A U^{-1}) <= tr(phi(A) A) for nondecreasing phi.

    Constructs the witness from the finest (rank-one) spectral resolution
    so the unit row/column sums hold regardless of degeneracies. When the
    antiderivative of phi is supplied, the equivalent convex-function form
    tr(f(UAU^{-1}) - f(A) - (UAU^{-1} - A) phi(A)) >= 0 is evaluated too.
    Refuses phi that decreases somewhere on the sampled eigenvalues.
    """
    a = np.asarray(a, dtype=complex)
    if np.max(np.abs(a - a.conj().T)) > 1e-10 * max(1.0, float(np.max(np.abs(a)))):
        raise ValueError("A must be Hermitian")
    opalg.check_unitary(u)
    a = 0.5 * (a + a.conj().T)
    u = np.asarray(u, dtype=complex)

    w, v = np.linalg.eigh(a)
    phi_vals = np.array([phi(float(x)) for x in w], dtype=float)
    if np.any(np.diff(phi_vals) < 0):
        raise ValueError("phi is not nondecreasing on the spectrum of A")

    overlap = v.conj().T @ u @ v
    c = np.abs(overlap) ** 2  # tr(E_k U E_l U^{-1}) for rank-one projections

    conj = u @ a @ u.conj().T
    phi_a = (v * phi_vals) @ v.conj().T
    lhs = float(np.real(np.trace(phi_a @ conj)))
    rhs = float(np.dot(phi_vals, w))
    n = a.shape[0]
    norm_a = float(np.max(np.abs(w))) if n else 0.0
    scale = n * norm_a * float(np.max(np.abs(phi_vals))) if n else 0.0

    footnote = None
    if antiderivative is not None:
        w_conj = np.linalg.eigvalsh(0.5 * (conj + conj.conj().T))
        f_b = sum(antiderivative(float(x)) for x in w_conj)
        f_a = sum(antiderivative(float(x)) for x in w)
        cross = float(np.real(np.trace((conj - a) @ phi_a)))
        footnote = float(f_b - f_a - cross)

    return KleinWitness(eigenvalues=w, c=c, lhs=lhs, rhs=rhs, scale=scale,
                        footnote_value=footnote)
