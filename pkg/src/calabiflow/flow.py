"""Time integration of ``du/dt = sum_ij (u^{ij})_{,ij}`` on the periodic grid.

The quadratic part of ``u`` is stationary; only ``psi`` evolves.  Steps are
classical RK4 with

    dt = sigma * RK4_REAL_LIMIT * h^4 / (rho_n * max(u^{ij})^2)

where ``rho_n * h^-4`` is the spectral radius of the discrete flat
linearised operator, so ``sigma = 1`` sits on the linear stability boundary.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.stats import linregress

from .errors import (
    BlowupSuspectedError,
    InsufficientSnapshotsError,
    NothingToBlowUpError,
    StepRejectedError,
    StiffnessError,
)
from .geometry import (
    calabi_dissipation_density,
    curvature_from_inverse,
    d2u_dt2_star,
    riemann_norm,
    riemann_norm_squared,
)
from .potential import SymplecticPotential, eig_extremes, hessian_arrays, invert_sym, m_condition_estimate, rescale
from .torus_field import STENCILS, GridSpec, PeriodicField, fourier_mode, integrate

__all__ = [
    "FlowConfig",
    "FlowState",
    "DiagnosticsRecord",
    "FlowTrace",
    "rhs",
    "step",
    "advance",
    "run",
    "stable_dt",
    "dissipation_checks",
    "blowup_extract",
    "blowup_center",
    "fit_decay_rate",
    "fit_mode_decay_rate",
    "CSV_COLUMNS",
]

RK4_REAL_LIMIT = 2.785293563405282
GROWTH_STREAK = 20
BLOWUP_FACTOR = 1e3


@dataclass(frozen=True)
class FlowConfig:
    t_end: float
    sigma: float = 0.5
    dt_min: float = 1e-18
    ca_stop: Optional[float] = None
    record_every: int = 1
    m_segments: int = 64
    seed: int = 0

    def __post_init__(self):
        if not (self.t_end > 0 and math.isfinite(self.t_end)):
            raise ValueError("t_end must be positive and finite")
        if not 0 < self.sigma <= 1:
            raise ValueError("sigma must lie in (0, 1]")
        if not self.dt_min > 0:
            raise ValueError("dt_min must be positive")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.m_segments < 1:
            raise ValueError("m_segments must be >= 1")
        if self.ca_stop is not None and self.ca_stop < 0:
            raise ValueError("ca_stop must be nonnegative")


@dataclass(frozen=True)
class FlowState:
    t: float
    u: SymplecticPotential


@dataclass(frozen=True)
class DiagnosticsRecord:
    t: float
    dt: float
    Ca: float
    Ma: float
    L2: float
    psi_mean: float
    max_Rm: float
    eig_min: float
    eig_max: float
    M_estimate: float
    inj_proxy: float
    total_energy_n: float

    def as_row(self) -> list:
        return [getattr(self, f.name) for f in fields(self)]


CSV_COLUMNS = [f.name for f in fields(DiagnosticsRecord)]


@dataclass
class FlowTrace:
    config: FlowConfig
    records: List[DiagnosticsRecord] = field(default_factory=list)
    snapshots: List[Tuple[float, SymplecticPotential]] = field(default_factory=list)
    termination: Optional[str] = None

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def snapshot_at(self, t: float) -> SymplecticPotential:
        for ts, u in self.snapshots:
            if ts == t or abs(ts - t) <= 1e-12 * max(1.0, abs(t)):
                return u
        raise KeyError(f"no snapshot at t={t}")


def spectral_radius(spec: GridSpec) -> float:
    """``rho_n``: max over grid wavenumbers of ``sum_ij sigma_ij^2`` (unit h)."""
    theta = 2 * np.pi * np.arange(spec.N) / spec.N
    m2 = np.arange(-2, 3)
    d2 = np.real(np.exp(1j * np.outer(theta, m2)) @ STENCILS[2])
    s1 = np.imag(np.exp(1j * np.outer(theta, m2)) @ STENCILS[1])
    grids = np.meshgrid(*([np.arange(spec.N)] * spec.n), indexing="ij")
    total = np.zeros(spec.shape)
    for i in range(spec.n):
        for j in range(spec.n):
            if i == j:
                total += d2[grids[i]] ** 2
            else:
                total += (s1[grids[i]] * s1[grids[j]]) ** 2
    return float(total.max())


def stable_dt(spec: GridSpec, eig_min: float, sigma: float) -> float:
    """Step from the formula above; ``max(u^{ij}) = 1/eig_min(u_ij)``."""
    return sigma * RK4_REAL_LIMIT * spec.h**4 * eig_min**2 / spectral_radius(spec)


def _rhs_values(psi: np.ndarray, c: float, spec: GridSpec) -> np.ndarray:
    H = hessian_arrays(psi, c, spec)
    lo, _ = eig_extremes(H)
    if not np.all(lo > 0):
        raise StepRejectedError("convexity lost in a Runge-Kutta stage")
    G, _ = invert_sym(H)
    return -curvature_from_inverse(G, spec)


def rhs(u: SymplecticPotential) -> PeriodicField:
    """Right-hand side ``sum_ij (u^{ij})_{,ij} = -S``."""
    return PeriodicField(u.spec, -curvature_from_inverse(u.hessian.inv, u.spec))


def _rk4(psi, c, spec, dt, k1=None):
    if k1 is None:
        k1 = _rhs_values(psi, c, spec)
    k2 = _rhs_values(psi + 0.5 * dt * k1, c, spec)
    k3 = _rhs_values(psi + 0.5 * dt * k2, c, spec)
    k4 = _rhs_values(psi + dt * k3, c, spec)
    return psi + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _try_step(u: SymplecticPotential, dt: float, k1=None) -> SymplecticPotential:
    with np.errstate(all="ignore"):
        new = _rk4(u.psi.values, u.c, u.spec, dt, k1)
    if not np.all(np.isfinite(new)):
        raise StepRejectedError("non-finite values after step")
    try:
        return SymplecticPotential(u.spec, u.c, new, u.offset, u.slope)
    except Exception as exc:  # convexity failure of the result
        raise StepRejectedError(str(exc)) from exc


def step(state: FlowState, dt: float) -> FlowState:
    """One RK4 step; raises :class:`StepRejectedError` on convexity loss."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return FlowState(state.t + dt, _try_step(state.u, dt))


def advance(state: FlowState, dt: float, dt_min: float = 1e-18) -> Tuple[FlowState, float]:
    """Step with halving on rejection; returns the new state and the dt used."""
    while True:
        try:
            return step(state, dt), dt
        except StepRejectedError:
            dt *= 0.5
            if dt < dt_min:
                raise StiffnessError(
                    f"dt fell below dt_min={dt_min:g} at t={state.t:g}", state=state
                )


class _Evaluated:
    """Accepted state with the fields needed for diagnostics and the next step."""

    def __init__(self, u: SymplecticPotential):
        self.u = u
        self.hd = u.hessian
        self.S = curvature_from_inverse(self.hd.inv, u.spec)

    def record(self, t, dt, config: FlowConfig) -> DiagnosticsRecord:
        u, spec, hd, S = self.u, self.u.spec, self.hd, self.S
        rm = np.sqrt(riemann_norm_squared(hd.inv, spec))
        vol_el = spec.h**spec.n
        lo, hi = float(hd.eig_min.min()), float(hd.eig_max.max())
        psi = u.psi.values
        return DiagnosticsRecord(
            t=float(t),
            dt=float(dt),
            Ca=vol_el * float(np.sum((S * S).ravel())),
            Ma=0.0 - vol_el * float(np.sum(np.log(hd.det).ravel())),
            L2=vol_el * float(np.sum((psi * psi).ravel())),
            psi_mean=vol_el * float(np.sum(psi.ravel())) / spec.volume,
            max_Rm=float(rm.max()),
            eig_min=lo,
            eig_max=hi,
            M_estimate=m_condition_estimate(u, config.m_segments, config.seed).M_estimate,
            inj_proxy=0.5 * spec.scale * min(math.sqrt(lo), 1.0 / math.sqrt(hi)),
            total_energy_n=vol_el * float(np.sum((rm**spec.n).ravel())),
        )


def run(
    u0: SymplecticPotential,
    config: FlowConfig,
    callback: Optional[Callable[[FlowState], None]] = None,
    on_record: Optional[Callable[[DiagnosticsRecord], None]] = None,
) -> FlowTrace:
    """Integrate from ``u0`` until ``t_end`` or until ``Ca < ca_stop``.

    ``callback`` sees every accepted state (the initial one included);
    ``on_record`` sees every diagnostics record as soon as it exists.
    On stiffness failure or suspected blow-up the raised error carries the
    trace so far in ``.trace``.
    """
    spec = u0.spec
    trace = FlowTrace(config)
    cur = _Evaluated(u0)
    t, nstep = 0.0, 0

    def emit(rec):
        trace.records.append(rec)
        if on_record is not None:
            on_record(rec)

    emit(cur.record(t, 0.0, config))
    trace.snapshots.append((t, u0))
    if callback is not None:
        callback(FlowState(t, u0))
    ca0 = trace.records[0].Ca
    ca_stop = config.ca_stop if config.ca_stop is not None else 1e-14 * max(1.0, ca0)
    rho = spectral_radius(spec)
    level, streak = 0, 0
    while True:
        rec = trace.records[-1]
        if rec.Ca < ca_stop:
            trace.termination = "ca_stop"
            break
        if t >= config.t_end * (1 - 1e-14):
            trace.termination = "t_end"
            break
        dt_formula = config.sigma * RK4_REAL_LIMIT * spec.h**4 * rec.eig_min**2 / rho
        dt = dt_formula * 0.5**level
        # land exactly on t_end instead of leaving a roundoff-sized last step
        if config.t_end - t <= dt * (1 + 1e-6):
            dt = config.t_end - t
        while True:
            try:
                new = _try_step(cur.u, dt, k1=-cur.S)
                break
            except StepRejectedError:
                level += 1
                streak = 0
                dt *= 0.5
                if dt < config.dt_min:
                    trace.termination = "stiffness_failure"
                    raise StiffnessError(
                        f"dt fell below dt_min={config.dt_min:g} at t={t:g}",
                        state=FlowState(t, cur.u),
                        trace=trace,
                    )
        streak += 1
        if level and streak >= GROWTH_STREAK:
            level -= 1
            streak = 0
        t += dt
        nstep += 1
        cur = _Evaluated(new)
        rec = cur.record(t, dt, config)
        emit(rec)
        if callback is not None:
            callback(FlowState(t, new))
        if nstep % config.record_every == 0:
            trace.snapshots.append((t, new))
        if ca0 > 0 and rec.Ca > BLOWUP_FACTOR * ca0:
            trace.termination = "blowup_suspected"
            raise BlowupSuspectedError(
                f"Ca={rec.Ca:.3g} exceeds {BLOWUP_FACTOR:g} x Ca(0) at t={t:g}",
                trace=trace,
            )
    if trace.snapshots[-1][0] != t:
        trace.snapshots.append((t, cur.u))
    return trace


def _centered(t0, t1, t2, f0, f1, f2):
    """Second-order first derivative at ``t1`` on a non-uniform 3-point stencil."""
    h1, h2 = t1 - t0, t2 - t1
    return (
        -h2 / (h1 * (h1 + h2)) * f0
        + (h2 - h1) / (h1 * h2) * f1
        + h1 / (h2 * (h1 + h2)) * f2
    )


def _rel(num, den):
    num, den = abs(num), abs(den)
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return num / den


def dissipation_checks(trace: FlowTrace) -> dict:
    """Compare time differences of Ca, Ma and S with their closed forms.

    Every interior snapshot is the centre of one check; the report holds the
    per-check relative errors and their maxima.
    """
    snaps = trace.snapshots
    if len(snaps) < 3:
        raise InsufficientSnapshotsError(f"need 3 snapshots, have {len(snaps)}")
    evals = [_Evaluated(u) for _, u in snaps]
    ts = [t for t, _ in snaps]
    spec = snaps[0][1].spec
    vol_el = spec.h**spec.n
    ca = [vol_el * np.sum(e.S**2) for e in evals]
    ma = [-vol_el * np.sum(np.log(e.hd.det)) for e in evals]
    out = {"calabi": [], "mabuchi": [], "star": [], "t": []}
    for k in range(1, len(snaps) - 1):
        t0, t1, t2 = ts[k - 1 : k + 2]
        mid = evals[k]
        dca = _centered(t0, t1, t2, *ca[k - 1 : k + 2])
        dma = _centered(t0, t1, t2, *ma[k - 1 : k + 2])
        dS = _centered(t0, t1, t2, evals[k - 1].S, mid.S, evals[k + 1].S)
        ca_rate = -2.0 * vol_el * np.sum(calabi_dissipation_density(mid.S, mid.hd.inv, spec))
        ma_rate = -vol_el * np.sum(mid.S**2)
        star = d2u_dt2_star(mid.u).values
        out["t"].append(t1)
        out["calabi"].append(_rel(dca - ca_rate, ca_rate))
        out["mabuchi"].append(_rel(dma - ma_rate, ma_rate))
        out["star"].append(_rel(np.max(np.abs(star + dS)), np.max(np.abs(star))))
    for key in ("calabi", "mabuchi", "star"):
        out[f"max_{key}"] = max(out[key])
    return out


def blowup_center(u: SymplecticPotential):
    """``(lam, p)``: the maximum of ``|Rm|`` and the node where it is attained."""
    rm = riemann_norm(u).values
    lam = float(rm.max())
    if not lam > 0:
        raise NothingToBlowUpError("curvature vanishes identically: nothing to blow up")
    k = np.unravel_index(np.argmax(rm), rm.shape)
    return lam, u.spec.point(k)


def blowup_extract(trace: FlowTrace, t: float) -> SymplecticPotential:
    """Rescale the snapshot at ``t`` so that ``|Rm| = 1`` at the new origin.

    The matching time dilation of the flow is ``lam**2``; see
    :func:`blowup_center`.
    """
    u = trace.snapshot_at(t)
    lam, p = blowup_center(u)
    return rescale(u, lam, p)


def _fit(t, y):
    t = np.asarray(t, float)
    y = np.asarray(y, float)
    flagged = False
    pos = y > 0
    if not pos.all():
        flagged = True
        # last run of strictly positive values
        end = len(y)
        while end > 0 and not pos[end - 1]:
            end -= 1
        start = end
        while start > 0 and pos[start - 1]:
            start -= 1
        t, y = t[start:end], y[start:end]
    if len(t) < 2:
        raise ValueError("fewer than two positive samples to fit")
    res = linregress(t, np.log(y))
    return {"rate": -float(res.slope), "r_squared": float(res.rvalue**2), "flagged": flagged}


def fit_decay_rate(trace: FlowTrace, tail_fraction: float = 0.5, column: str = "Ca") -> dict:
    """Exponential decay rate of ``column`` over the trailing records."""
    if not 0 < tail_fraction < 1:
        raise ValueError("tail_fraction must lie in (0, 1)")
    t = trace.column("t")
    y = trace.column(column)
    start = min(int(len(t) * (1 - tail_fraction)), len(t) - 2)
    return _fit(t[start:], y[start:])


def fit_mode_decay_rate(trace: FlowTrace, k) -> dict:
    """Decay rate of ``|psi_hat_k|`` over all snapshots."""
    t = [s[0] for s in trace.snapshots]
    a = [abs(fourier_mode(u.psi, k)) for _, u in trace.snapshots]
    return _fit(t, a)
