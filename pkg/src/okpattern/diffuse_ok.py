"""The eps-diffuse energy, its mass-conserving gradient flow, and the
sharp-interface limit harness.

Energy (collocation weights throughout, consistent with the flow):

    OK_eps(u) = eps * int |grad u|^2  +  (1/eps) int (u^2-1)^2
                + gamma * int int G (u-m)(u-m)

Flow: mass-projected L^2 gradient descent (nonlocal Allen-Cahn with a
Lagrange multiplier), stepped semi-implicitly in Fourier space,

    u_hat <- [ (1 + c_s dt) u_hat + dt N_hat ] / (1 + c_s dt + 2 eps dt |2 pi xi|^2 )

with N(u) = -(4/eps) u (u^2 - 1) - 2 gamma v_u and v_u the zero-mean potential
of u.  The zero-frequency coefficient is held fixed, which conserves mass
exactly and absorbs the multiplier.  Steps that increase the energy are
rejected and retried with dt * dt_backoff; accepted energies are therefore
non-increasing by construction.

The sharp limit of OK_eps is sigma * P + gamma * NL with the surface-tension
constant sigma = 2 * int_{-1}^{1} sqrt(W) = 8/3 for W(s) = (s^2-1)^2 carried by
the perimeter term only.  Minimizing OK_eps at diffuse parameter sigma*gamma
therefore tracks the sharp functional P + gamma*NL; helpers below perform that
conversion wherever a diffuse computation stands in for a sharp one.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .spectral import SpectralWorkspace, get_workspace
from .torus_field import GridSpec, Lamella, ScalarField, tanh_profile

# Surface tension of the optimal profile for W(s) = (s^2-1)^2:
# 2 * int_{-1}^{1} (1 - s^2) ds = 8/3.  Measured, not assumed: see the
# gamma-limit sweep, which reports the empirical constant.
MODICA_MORTOLA_SIGMA = 8.0 / 3.0

DT_STALL_FLOOR = 1e-14


def sharp_to_diffuse_gamma(gamma: float) -> float:
    """Diffuse parameter whose sharp limit weights NL against P like F^gamma."""
    return MODICA_MORTOLA_SIGMA * gamma


class FlowStallError(RuntimeError):
    """dt underflowed below the stall floor while rejecting steps."""


@dataclass(frozen=True)
class FlowConfig:
    eps: float
    gamma: float = 0.0
    dt: float = 1e-2
    stabilizer: float | None = None  # default 2/eps
    max_steps: int = 1000
    energy_tolerance: float = 0.0
    dt_backoff: float = 0.5

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.gamma < 0:
            raise ValueError("gamma must be nonnegative")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.stabilizer is not None and self.stabilizer < 0:
            raise ValueError("stabilizer must be nonnegative")
        if not 0 < self.dt_backoff < 1:
            raise ValueError("dt_backoff must lie in (0,1)")
        if self.max_steps < 0 or self.energy_tolerance < 0:
            raise ValueError("max_steps and energy_tolerance must be nonnegative")

    @property
    def c_s(self) -> float:
        return 2.0 / self.eps if self.stabilizer is None else self.stabilizer


@dataclass(frozen=True)
class FlowState:
    u: ScalarField
    energy: float
    dt: float
    step: int = 0
    rejections: int = 0
    last_update_sup: float = 0.0


@dataclass
class FlowTrace:
    """Audited history of a flow: one record per accepted step."""

    records: list[tuple[int, float, float, float, float]] = field(default_factory=list)
    final: ScalarField | None = None
    status: str = "running"
    rejections: int = 0

    CSV_HEADER = "step,dt,energy,mass,sup_update"

    def append(self, state: FlowState) -> None:
        self.records.append(
            (state.step, state.dt, state.energy, state.u.mean, state.last_update_sup)
        )

    def energies(self) -> np.ndarray:
        return np.array([r[2] for r in self.records])

    def masses(self) -> np.ndarray:
        return np.array([r[3] for r in self.records])

    def csv_rows(self) -> list[str]:
        return [
            f"{s},{repr(dt)},{repr(e)},{repr(m)},{repr(du)}"
            for s, dt, e, m, du in self.records
        ]


def ok_energy(
    u: ScalarField, eps: float, gamma: float, ws: SpectralWorkspace | None = None
) -> float:
    """OK_eps(u); the nonlocal term subtracts the mean inside the solve."""
    if eps <= 0 or gamma < 0:
        raise ValueError("eps must be positive and gamma nonnegative")
    ws = ws or get_workspace(u.spec)
    uhat = np.fft.fftn(u.values) / u.spec.cells
    return _ok_energy_from(u.values, uhat, ws, eps, gamma)


def _ok_energy_from(
    values: np.ndarray, uhat: np.ndarray, ws: SpectralWorkspace, eps: float, gamma: float
) -> float:
    power = np.abs(uhat) ** 2
    grad_term = eps * float(np.sum(power * ws.lap_symbol))
    well_term = float(np.mean((values**2 - 1.0) ** 2)) / eps
    nl_term = gamma * float(np.sum(power * ws.inv_lap))
    return grad_term + well_term + nl_term


def _explicit_force(values: np.ndarray, uhat: np.ndarray, ws: SpectralWorkspace, cfg: FlowConfig):
    # uhat holds normalized coefficients (fftn/M); scale back for the solve
    v = np.fft.ifftn(uhat * ws.inv_lap).real * values.size
    return -(4.0 / cfg.eps) * values * (values**2 - 1.0) - 2.0 * cfg.gamma * v


def flow_state(u0: ScalarField, config: FlowConfig, ws: SpectralWorkspace | None = None) -> FlowState:
    if config.eps < 2.0 * u0.spec.max_spacing:
        raise ValueError(
            f"eps={config.eps} is not resolvable on the grid "
            f"(needs eps >= {2.0 * u0.spec.max_spacing})"
        )
    ws = ws or get_workspace(u0.spec)
    uhat = np.fft.fftn(u0.values) / u0.spec.cells
    return FlowState(u0, _ok_energy_from(u0.values, uhat, ws, config.eps, config.gamma), config.dt)


def flow_step(state: FlowState, config: FlowConfig, ws: SpectralWorkspace | None = None) -> FlowState:
    """One semi-implicit step; rejects and shrinks dt on any energy increase."""
    ws = ws or get_workspace(state.u.spec)
    spec = state.u.spec
    values = state.u.values
    uhat = np.fft.fftn(values) / spec.cells
    force_hat = np.fft.fftn(_explicit_force(values, uhat, ws, config)) / spec.cells
    dt = state.dt
    rejections = state.rejections
    while True:
        if dt < DT_STALL_FLOOR:
            raise FlowStallError(f"dt underflow ({dt:.3e}) after {rejections} rejections")
        denom = 1.0 + dt * config.c_s + dt * 2.0 * config.eps * ws.lap_symbol
        new_hat = ((1.0 + dt * config.c_s) * uhat + dt * force_hat) / denom
        new_hat.flat[0] = uhat.flat[0]  # frozen zero mode: exact mass conservation
        new_values = np.fft.ifftn(new_hat * spec.cells).real
        energy = _ok_energy_from(new_values, new_hat, ws, config.eps, config.gamma)
        if energy <= state.energy:
            u_new = ScalarField(spec, new_values, state.u.kind if _phase_ok(new_values) else "generic")
            return FlowState(
                u=u_new,
                energy=energy,
                dt=dt,
                step=state.step + 1,
                rejections=rejections,
                last_update_sup=float(np.max(np.abs(new_values - values))),
            )
        dt *= config.dt_backoff
        rejections += 1


def _phase_ok(values: np.ndarray) -> bool:
    return bool(values.min() >= -1.1 and values.max() <= 1.1)


def minimize(
    u0: ScalarField, config: FlowConfig, ws: SpectralWorkspace | None = None
) -> FlowTrace:
    """Iterate flow_step until the energy decrease per accepted step drops
    below energy_tolerance or max_steps accepted steps ran.  A dt stall is a
    terminal status, not an exception."""
    ws = ws or get_workspace(u0.spec)
    state = flow_state(u0, config, ws)
    trace = FlowTrace()
    trace.final = u0
    if config.max_steps == 0:
        trace.status = "max_steps"
        return trace
    for _ in range(config.max_steps):
        prev_energy = state.energy
        try:
            state = flow_step(state, config, ws)
        except FlowStallError:
            trace.status = "stalled"
            break
        trace.append(state)
        trace.final = state.u
        if prev_energy - state.energy < config.energy_tolerance:
            trace.status = "converged"
            break
    else:
        trace.status = "max_steps"
    trace.rejections = state.rejections
    return trace


# ---------------------------------------------------------------------------
# Sharp-interface limit harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GammaLimitRow:
    eps: float
    diffuse: float
    reference: float

    @property
    def difference(self) -> float:
        return self.diffuse - self.reference

    CSV_HEADER = "eps,ok_energy,sharp_reference,difference"

    def csv_row(self) -> str:
        return f"{repr(self.eps)},{repr(self.diffuse)},{repr(self.reference)},{repr(self.difference)}"


def gamma_limit_sweep(shape, gamma: float, eps_list, spec: GridSpec) -> list[GammaLimitRow]:
    """OK_eps of the tanh profile against sigma*P + gamma*NL for each eps."""
    from .sharp_energy import perimeter
    from .spectral import nonlocal_energy
    from .torus_field import rasterize

    reference = MODICA_MORTOLA_SIGMA * perimeter(shape) + gamma * nonlocal_energy(
        rasterize(shape, spec)
    )
    rows = []
    for eps in eps_list:
        u = tanh_profile(shape, spec, eps)
        rows.append(GammaLimitRow(float(eps), ok_energy(u, eps, gamma), reference))
    return rows


def fitted_order(rows: list[GammaLimitRow]) -> float:
    """Least-squares slope of log|difference| against log eps."""
    eps = np.log([r.eps for r in rows])
    diff = np.log([abs(r.difference) for r in rows])
    slope, _ = np.polyfit(eps, diff, 1)
    return float(slope)


# ---------------------------------------------------------------------------
# Dynamic instability oracle for the lamella
# ---------------------------------------------------------------------------


def _shifted_profile_2d(flat: np.ndarray, displacement: np.ndarray) -> np.ndarray:
    """Columns of the flat 1d profile shifted by displacement[j] (trig shift)."""
    n = flat.size
    xi = np.fft.fftfreq(n, d=1.0 / n)
    fhat = np.fft.fft(flat)
    phases = np.exp(-2j * np.pi * np.outer(xi, displacement))
    return np.fft.ifft(fhat[:, None] * phases, axis=0).real


def _tangential_mode_energy(values: np.ndarray, mode: int = 1) -> float:
    spectrum = np.fft.fftn(values) / values.size
    return float(np.sum(np.abs(spectrum[:, mode]) ** 2) + np.sum(np.abs(spectrum[:, -mode]) ** 2))


def lamella_flow_onset(
    halfwidth: float,
    spec: GridSpec,
    eps: float,
    gamma_lo: float,
    gamma_hi: float,
    *,
    relax_steps: int = 400,
    evolve_steps: int = 500,
    dt: float = 2e-3,
    perturb_cells: float = 1.5,
    rel_tol: float = 0.02,
    growth_band: tuple[float, float] = (0.8, 1.25),
) -> float:
    """Sharp gamma at which the lamella's first tangential mode starts growing.

    For each trial sharp gamma the flow runs at the diffuse parameter
    sigma*gamma: relax the flat 1d profile, displace both interfaces by
    delta*cos(2 pi x2) (the antiphase branch, i.e. the first unstable one),
    evolve, and compare the tangential mode-1 energy with its initial value.
    Bisects until the bracket is rel_tol wide.  The finite-eps bias is O(eps).
    """
    if spec.dim != 2:
        raise ValueError("the onset oracle runs on 2d grids")
    n1, n2 = spec.sizes
    shape = Lamella(axis=0, center=0.5, halfwidth=halfwidth)
    spec1 = GridSpec((n1,))
    delta = perturb_cells / n1

    def grows(sharp_gamma: float) -> bool:
        gamma_d = sharp_to_diffuse_gamma(sharp_gamma)
        cfg1 = FlowConfig(eps=eps, gamma=gamma_d, dt=dt, max_steps=relax_steps)
        flat = minimize(tanh_profile(shape, spec1, eps), cfg1).final.values
        perturbed = _shifted_profile_2d(flat, delta * np.cos(2 * np.pi * np.arange(n2) / n2))
        u0 = ScalarField(spec, perturbed, "phase")
        cfg2 = FlowConfig(eps=eps, gamma=gamma_d, dt=dt, max_steps=evolve_steps)
        start = _tangential_mode_energy(u0.values)
        out = minimize(u0, cfg2)
        end = _tangential_mode_energy(out.final.values)
        ratio = end / start
        if ratio > growth_band[1]:
            return True
        if ratio < growth_band[0]:
            return False
        return ratio > 1.0

    lo, hi = gamma_lo, gamma_hi
    if grows(lo):
        raise ValueError("gamma_lo is already unstable; widen the bracket")
    if not grows(hi):
        raise ValueError("gamma_hi is still stable; widen the bracket")
    while hi - lo > rel_tol * 0.5 * (hi + lo):
        mid = 0.5 * (lo + hi)
        if grows(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)
