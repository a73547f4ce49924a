"""Exact closed-loop simulation on the hybrid time domain (t, j).

Between events every closed loop here is a fixed linear ODE, so states are
advanced by matrix exponentials of the flow generator — there is no ODE
solver and no integration error. Jumps fire at the measurement times kT
(and additionally at the control ticks kT + iT/N for the multi-rate
regulator, with the measurement sample ordered before the coincident tick).
The dense output grid only chooses where the exact flow is recorded.

Jump semantics shared by all three regulators: controller state updates
read the *pre-refresh* held sample, then the sample refreshes from the
current plant state, then held outputs recompute. This is what makes the
sampled steady state invariant.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import numkit
from .design_emulation import EmulationRegulator
from .design_hold import HoldRegulator
from .design_multirate import MultiRateRegulator

__all__ = ["HybridTrajectory", "SimulationReport", "simulate", "compute_metrics", "write_csv"]

DIVERGENCE_THRESHOLD = 1e9


@dataclass
class HybridTrajectory:
    t: np.ndarray
    j: np.ndarray
    w: np.ndarray
    x: np.ndarray
    e: np.ndarray
    y_m: np.ndarray
    u: np.ndarray
    zeta: np.ndarray | None
    ctrl: np.ndarray | None
    norm_state: np.ndarray
    events: list = field(default_factory=list)
    bounded: bool = True
    method: str = ""

    @property
    def norm_e(self) -> np.ndarray:
        return np.linalg.norm(self.e, axis=1)


@dataclass
class SimulationReport:
    bounded: bool
    tail_sup_e: float
    decay_rate: float | None
    peak_state_norm: float


class _Recorder:
    """Accumulates (t, j, state pieces) rows and the jump event log."""

    def __init__(self, plant, method):
        self.plant = plant
        self.method = method
        self.rows = []
        self.events = []
        self.bounded = True

    def record(self, t, j, w, x, u, zeta=None, ctrl=None):
        e = self.plant.C_e @ x + self.plant.Q_e @ w
        y_m = self.plant.C_m @ x + self.plant.Q_m @ w
        pieces = [w, x, np.atleast_1d(u)] + [v for v in (zeta, ctrl) if v is not None]
        norm = float(np.linalg.norm(np.concatenate(pieces)))
        self.rows.append((t, j, w.copy(), x.copy(), e, y_m, np.atleast_1d(u).copy(),
                          None if zeta is None else zeta.copy(),
                          None if ctrl is None else ctrl.copy(), norm))
        return norm

    def diverged(self, norm) -> bool:
        if not np.isfinite(norm) or norm > DIVERGENCE_THRESHOLD:
            self.bounded = False
            return True
        return False

    def jump(self, t, j, kind):
        self.events.append((t, j, kind))

    def build(self) -> HybridTrajectory:
        cols = list(zip(*self.rows))
        zeta = None if cols[7][0] is None else np.array([v for v in cols[7]])
        ctrl = None if cols[8][0] is None else np.array([v for v in cols[8]])
        return HybridTrajectory(
            t=np.array(cols[0]), j=np.array(cols[1], dtype=int),
            w=np.array(cols[2]), x=np.array(cols[3]), e=np.array(cols[4]),
            y_m=np.array(cols[5]), u=np.array(cols[6]),
            zeta=zeta, ctrl=ctrl, norm_state=np.array(cols[9]),
            events=self.events, bounded=self.bounded, method=self.method)


def simulate(scenario, regulator, dense_per_period: int = 20,
             controller_init: dict | None = None) -> HybridTrajectory:
    """Simulate the closed loop of a scenario with a designed regulator.

    Dispatches on the regulator type. ``controller_init`` optionally sets
    the controller's initial state: keys 'zeta' and 'z' (hold/multi-rate) or
    'x_c' (emulation); everything defaults to zero. The held measurement is
    always initialized from the t = 0 sample.

    Divergence (any state norm beyond 1e9) truncates the trajectory and
    clears its bounded flag instead of raising.
    """
    if isinstance(regulator, tuple):
        regulator = regulator[0]
    if isinstance(regulator, MultiRateRegulator):
        return _simulate_multirate(scenario, regulator, dense_per_period, controller_init)
    if isinstance(regulator, HoldRegulator):
        return _simulate_hold(scenario, regulator, dense_per_period, controller_init)
    if isinstance(regulator, EmulationRegulator):
        return _simulate_emulation(scenario, regulator, dense_per_period, controller_init)
    raise TypeError(f"unknown regulator type {type(regulator).__name__}")


def _init(controller_init, key, size):
    if controller_init and key in controller_init:
        return np.asarray(controller_init[key], dtype=float).reshape(-1)
    return np.zeros(size)


def _intervals(horizon, T):
    """(t_k, t_{k+1}, full) triples covering [0, horizon] at period T.

    Labels come from k*T directly (never accumulated), so they are
    reproducible and nondecreasing; `full` marks intervals of exact length T
    whose endpoint carries a measurement jump.
    """
    starts = []
    k = 0
    while k * T < horizon - 1e-12:
        starts.append(k * T)
        k += 1
    out = []
    for i, t_k in enumerate(starts):
        if i + 1 < len(starts):
            out.append((t_k, starts[i + 1], True))
        else:
            t_end = min(t_k + T, horizon)
            out.append((t_k, t_end, t_end - t_k >= T - 1e-12))
    return out


def _simulate_hold(scenario, reg, G, controller_init):
    plant = scenario.plant
    T = scenario.sampling.T
    n, m, d = plant.n, plant.m, plant.d
    p = reg.hold_flow.shape[0]
    C_bar, Q_bar = plant.C, plant.Q

    # Flow state s = (w, x, zeta, v_u); v_u constant between samples.
    dim = d + n + p + m
    F = np.zeros((dim, dim))
    F[:d, :d] = plant.S
    F[d:d + n, :d] = plant.P
    F[d:d + n, d:d + n] = plant.A
    F[d:d + n, d + n:d + n + p] = plant.B @ reg.L
    F[d:d + n, d + n + p:] = plant.B
    F[d + n:d + n + p, d + n:d + n + p] = reg.hold_flow

    E_full = numkit.matexp(F, T)
    offsets = [i * (T / G) for i in range(1, G)]
    E_dense = [numkit.matexp(F, off) for off in offsets]

    w = scenario.w0.copy()
    x = scenario.x0.copy()
    zeta = _init(controller_init, "zeta", p)
    z = _init(controller_init, "z", reg.n_z)
    y_held = C_bar @ x + Q_bar @ w
    v_u = reg.K_zu @ z + reg.L_zu @ y_held

    def u_of(s):
        return reg.L @ s[d + n:d + n + p] + s[d + n + p:]

    rec = _Recorder(plant, "hold")
    j = 0
    rec.record(0.0, j, w, x, u_of(np.concatenate([w, x, zeta, v_u])), zeta, z)
    for t_k, t_next, full in _intervals(scenario.horizon, T):
        s0 = np.concatenate([w, x, zeta, v_u])
        for off, E in zip(offsets, E_dense):
            if t_k + off >= t_next - 1e-12:
                break
            s = E @ s0
            rec.record(t_k + off, j, s[:d], s[d:d + n], u_of(s), s[d + n:d + n + p], z)
        s_end = (E_full if full else numkit.matexp(F, t_next - t_k)) @ s0
        w, x, zeta, v_u = s_end[:d], s_end[d:d + n], s_end[d + n:d + n + p], s_end[d + n + p:]
        norm = rec.record(t_next, j, w, x, u_of(s_end), zeta, z)
        if rec.diverged(norm) or not full:
            break
        # Measurement-sample jump: controller consumes the held sample, the
        # sample refreshes, the held residual input recomputes.
        z_new = reg.A_z @ z + reg.B_z @ y_held
        zeta = reg.K_zzeta @ z + reg.L_zzeta @ y_held
        y_held = C_bar @ x + Q_bar @ w
        z = z_new
        v_u = reg.K_zu @ z + reg.L_zu @ y_held
        j += 1
        rec.jump(t_next, j, "measurement-sample")
        norm = rec.record(t_next, j, w, x, u_of(np.concatenate([w, x, zeta, v_u])), zeta, z)
        if rec.diverged(norm):
            break
    return rec.build()


def _simulate_emulation(scenario, reg, G, controller_init):
    plant = scenario.plant
    T = scenario.sampling.T
    n, m, d = plant.n, plant.m, plant.d
    C_bar, Q_bar = plant.C, plant.Q

    dim = d + n + m
    F = np.zeros((dim, dim))
    F[:d, :d] = plant.S
    F[d:d + n, :d] = plant.P
    F[d:d + n, d:d + n] = plant.A
    F[d:d + n, d + n:] = plant.B

    E_full = numkit.matexp(F, T)
    offsets = [i * (T / G) for i in range(1, G)]
    E_dense = [numkit.matexp(F, off) for off in offsets]

    w = scenario.w0.copy()
    x = scenario.x0.copy()
    x_c = _init(controller_init, "x_c", reg.n_c)
    y_held = C_bar @ x + Q_bar @ w
    u = reg.C_c @ x_c

    rec = _Recorder(plant, "emulation")
    j = 0
    rec.record(0.0, j, w, x, u, None, x_c)
    for t_k, t_next, full in _intervals(scenario.horizon, T):
        s0 = np.concatenate([w, x, u])
        for off, E in zip(offsets, E_dense):
            if t_k + off >= t_next - 1e-12:
                break
            s = E @ s0
            rec.record(t_k + off, j, s[:d], s[d:d + n], s[d + n:], None, x_c)
        s_end = (E_full if full else numkit.matexp(F, t_next - t_k)) @ s0
        w, x, u = s_end[:d], s_end[d:d + n], s_end[d + n:]
        norm = rec.record(t_next, j, w, x, u, None, x_c)
        if rec.diverged(norm) or not full:
            break
        x_c = reg.M @ x_c + reg.Gamma @ y_held
        y_held = C_bar @ x + Q_bar @ w
        u = reg.C_c @ x_c
        j += 1
        rec.jump(t_next, j, "measurement-sample")
        norm = rec.record(t_next, j, w, x, u, None, x_c)
        if rec.diverged(norm):
            break
    return rec.build()


def _simulate_multirate(scenario, mr, G, controller_init):
    reg = mr.base
    plant = scenario.plant
    T = scenario.sampling.T
    N = mr.N
    sub = T / N
    n, m, d = plant.n, plant.m, plant.d
    p = reg.hold_flow.shape[0]
    C_bar, Q_bar = plant.C, plant.Q

    dim = d + n + m
    F = np.zeros((dim, dim))
    F[:d, :d] = plant.S
    F[d:d + n, :d] = plant.P
    F[d:d + n, d:d + n] = plant.A
    F[d:d + n, d + n:] = plant.B

    E_sub = numkit.matexp(F, sub)
    # Dense-grid points that do not coincide with a tick, located inside
    # their tick sub-interval: (label offset, tick index, local propagator).
    dense = []
    for i in range(1, G):
        off = i * (T / G)
        s_idx = min(int(off / sub), N - 1)
        loc = off - s_idx * sub
        if loc > sub * 1e-9 and sub - loc > sub * 1e-9:
            dense.append((off, s_idx, numkit.matexp(F, loc)))

    w = scenario.w0.copy()
    x = scenario.x0.copy()
    zeta = _init(controller_init, "zeta", p)
    z = _init(controller_init, "z", reg.n_z)
    y_held = C_bar @ x + Q_bar @ w
    u = np.zeros(m)

    rec = _Recorder(plant, "multirate")
    j = 0
    rec.record(0.0, j, w, x, u, zeta, z)
    stop = False
    for t_k, t_next, full in _intervals(scenario.horizon, T):
        if t_k > 0:
            z_new = reg.A_z @ z + reg.B_z @ y_held
            zeta = reg.K_zzeta @ z + reg.L_zzeta @ y_held
            y_held = C_bar @ x + Q_bar @ w
            z = z_new
            j += 1
            rec.jump(t_k, j, "measurement-sample")
            rec.record(t_k, j, w, x, u, zeta, z)

        tick_states = {}
        tick_j = {}
        s = np.concatenate([w, x, u])
        for i_tick in range(N):
            t_tick = t_k + i_tick * sub
            if i_tick > 0 and t_tick >= t_next - 1e-12:
                break
            u_new = reg.L @ (mr.props[i_tick] @ zeta) + reg.K_zu @ z + reg.L_zu @ y_held
            s = np.concatenate([s[:d + n], u_new])
            j += 1
            rec.jump(t_tick, j, "control-tick")
            norm = rec.record(t_tick, j, s[:d], s[d:d + n], s[d + n:], zeta, z)
            if rec.diverged(norm):
                stop = True
                break
            tick_states[i_tick] = s
            tick_j[i_tick] = j
            remain = t_next - t_tick
            s = (E_sub if remain >= sub - 1e-12 else numkit.matexp(F, remain)) @ s
        if stop:
            break
        for off, s_idx, E in dense:
            if t_k + off >= t_next - 1e-12 or s_idx not in tick_states:
                continue
            sd = E @ tick_states[s_idx]
            # a dense sample belongs to its tick's sub-interval, so it carries
            # that tick's jump count, not the interval's final one
            rec.record(t_k + off, tick_j[s_idx], sd[:d], sd[d:d + n], sd[d + n:],
                       zeta, z)
        w, x, u = s[:d], s[d:d + n], s[d + n:]
        norm = rec.record(t_next, j, w, x, u, zeta, z)
        if rec.diverged(norm) or not full:
            break
    traj = rec.build()
    order = np.lexsort((traj.j, traj.t))
    return HybridTrajectory(
        t=traj.t[order], j=traj.j[order], w=traj.w[order], x=traj.x[order],
        e=traj.e[order], y_m=traj.y_m[order], u=traj.u[order],
        zeta=None if traj.zeta is None else traj.zeta[order],
        ctrl=None if traj.ctrl is None else traj.ctrl[order],
        norm_state=traj.norm_state[order], events=traj.events,
        bounded=traj.bounded, method=traj.method)


def compute_metrics(traj: HybridTrajectory) -> SimulationReport:
    """Boundedness, tail error, decay rate, and peak norm of one trajectory.

    tail_sup_e is the sup of ||e|| over the final 20% of the recorded time
    span; decay_rate is the least-squares slope of log||e|| over the final
    half (omitted for divergent runs, where it is meaningless).
    """
    if traj.t.size == 0:
        raise ValueError("empty trajectory")
    norm_e = traj.norm_e
    t_end = traj.t[-1]
    tail = traj.t >= 0.8 * t_end
    tail_sup = float(np.max(norm_e[tail])) if np.any(tail) else float(norm_e[-1])
    peak = float(np.max(traj.norm_state))
    decay = None
    if traj.bounded:
        half = traj.t >= 0.5 * t_end
        tt, ee = traj.t[half], norm_e[half]
        keep = ee > 1e-300
        if np.count_nonzero(keep) >= 2 and np.ptp(tt[keep]) > 0:
            decay = float(np.polyfit(tt[keep], np.log(ee[keep]), 1)[0])
        else:
            decay = 0.0
    return SimulationReport(bounded=traj.bounded, tail_sup_e=tail_sup,
                            decay_rate=decay, peak_state_norm=peak)


def write_csv(traj: HybridTrajectory, path) -> None:
    """Write the trajectory as CSV: t, j, error/extra-measurement/input
    channels, and ||e||; 17 significant digits, UTF-8, LF endings.

    ``path`` may also be an open text stream.
    """
    if hasattr(path, "write"):
        _write_csv(traj, path)
        return
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        _write_csv(traj, fh)


def _write_csv(traj, fh):
    q_e = traj.e.shape[1]
    q_m = traj.y_m.shape[1]
    u = traj.u.reshape(len(traj.t), -1)
    header = (["t", "j"]
              + [f"e_{i + 1}" for i in range(q_e)]
              + [f"ym_{i + 1}" for i in range(q_m)]
              + [f"u_{i + 1}" for i in range(u.shape[1])]
              + ["norm_e"])
    norm_e = traj.norm_e
    fh.write(",".join(header) + "\n")
    for i in range(len(traj.t)):
        vals = ([f"{traj.t[i]:.17g}", str(int(traj.j[i]))]
                + [f"{v:.17g}" for v in traj.e[i]]
                + [f"{v:.17g}" for v in traj.y_m[i]]
                + [f"{v:.17g}" for v in u[i]]
                + [f"{norm_e[i]:.17g}"])
        fh.write(",".join(vals) + "\n")
