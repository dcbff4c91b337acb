"""Fixed-step simulation of the plant and the networked observers.

The plant runs under state feedback ``u = -F x + d_u(t)`` with disturbance
``w = noise(t) + d_w(t)``.  Each observer integrates its own ``z_i`` and
reconstructs ``x_hat_i = z_i + H_i y_i``; the consensus term is weighted by
``chi r_i P_i^{-1}`` where ``r`` is all ones except on directed graphs.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import graph as G
from . import kernel
from .designer import topology_mode, verify_existing_design
from .errors import BlowUpError, SimulationError


@dataclass(frozen=True)
class NoiseSpec:
    """Band-limited white noise on the disturbance channels.

    Realised as a zero-order hold of normal samples with variance
    ``power / sample_time``, one fresh sample every ``sample_time`` seconds.
    """

    kind: str = "none"
    power: float = 0.0
    sample_time: float = 1e-3

    def __post_init__(self):
        if self.kind not in ("none", "band_limited_white"):
            raise SimulationError("bad_noise", f"unknown noise kind {self.kind!r}")
        if self.power < 0:
            raise SimulationError("bad_noise", "noise power must be non-negative")
        if self.sample_time <= 0:
            raise SimulationError("bad_noise", "noise sample time must be positive")


@dataclass
class ScenarioConfig:
    model: object
    design: object
    topology: object
    feedback_gain: np.ndarray = None
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    horizon: float = 1.0
    step: float = 1e-4
    initial_state: np.ndarray = None
    initial_observer_states: np.ndarray = None
    seed: int = 0
    disturbance: object = None
    verify_tol: float = 5e-3

    @property
    def nsteps(self):
        return int(round(self.horizon / self.step))


@dataclass
class SimulationTrace:
    times: np.ndarray
    x: np.ndarray
    x_hat: np.ndarray
    e: np.ndarray
    V: np.ndarray
    active_topology: np.ndarray
    backend: str = ""
    blowup_time: float = None

    @property
    def error_norms(self):
        """``(samples, N)`` array of ``|e_i(t)|``."""
        return np.linalg.norm(self.e, axis=2)

    @property
    def total_error(self):
        """``|e(t)|`` of the stacked error vector."""
        return np.sqrt(np.sum(self.e**2, axis=(1, 2)))


def _is_multiple(a, b):
    r = a / b
    return abs(r - round(r)) <= 1e-9 * max(1.0, abs(r))


def _validate(config):
    model, design = config.model, config.design
    if config.step <= 0:
        raise SimulationError("bad_step", "step must be positive")
    if config.horizon < config.step:
        raise SimulationError("bad_horizon", "horizon must be at least one step")
    if not _is_multiple(config.horizon, config.step):
        raise SimulationError("bad_horizon", "horizon must be an integer multiple of the step")
    if config.noise.kind != "none":
        if config.noise.sample_time < config.step or not _is_multiple(config.noise.sample_time, config.step):
            raise SimulationError("bad_noise", "noise sample time must be a multiple of the step")
    mode = topology_mode(config.topology)
    if design.mode != mode:
        raise SimulationError("mode_mismatch", f"design is for {design.mode!r} but the topology is {mode!r}")
    if config.topology.node_count != model.N or len(design.nodes) != model.N:
        raise SimulationError("bad_shape", "topology, design and model disagree on the node count")
    if mode == "switching" and not _is_multiple(config.topology.dwell_time, config.step):
        raise SimulationError("bad_schedule", "dwell time must be an integer multiple of the step")
    if mode == "directed" and not G.is_strongly_connected(config.topology):
        raise SimulationError("requires_strong_connectivity", "directed topology is not strongly connected")
    if mode == "undirected" and not G.is_connected(config.topology):
        raise SimulationError("disconnected_topology", "undirected topology is not connected")
    return mode


def _initial_conditions(config):
    n, N = config.model.n, config.model.N
    x0 = np.zeros(n) if config.initial_state is None else np.asarray(config.initial_state, float).reshape(n)
    if config.initial_observer_states is None:
        z0 = np.zeros((N, n))
    else:
        z0 = np.asarray(config.initial_observer_states, float).reshape(N, n)
    return x0, z0


def _exogenous(config, nsteps):
    """Stage-sampled exogenous signal, shape ``(nsteps, 3, m + q)``."""
    m, q, h = config.model.m, config.model.q, config.step
    t = np.arange(nsteps) * h
    ext = np.zeros((nsteps, 3, m + q))
    if config.disturbance is not None:
        for stage, off in enumerate((0.0, 0.5 * h, h)):
            vals = np.asarray(config.disturbance(t + off), dtype=float)
            ext[:, stage, :] = vals.reshape(nsteps, m + q)
    noise = config.noise
    if noise.kind == "band_limited_white" and noise.power > 0 and q > 0:
        per = int(round(noise.sample_time / h))
        count = -(-nsteps // per)
        rng = np.random.default_rng(config.seed)
        samples = rng.normal(0.0, math.sqrt(noise.power / noise.sample_time), size=(count, q))
        held = np.repeat(samples, per, axis=0)[:nsteps]
        ext[:, :, m:] += held[:, None, :]
    return ext


def _topology_schedule(config, nsteps):
    top = config.topology
    if isinstance(top, G.SwitchingSchedule):
        per = int(round(top.dwell_time / config.step))
        k = np.arange(nsteps + 1)
        idx = (top.start_index + k // per) % len(top.topologies)
        adjs = np.stack([t.adjacency for t in top.topologies])
        return adjs, idx.astype(np.int64)
    return top.adjacency[None, :, :].astype(float), np.zeros(nsteps + 1, dtype=np.int64)


def kernel_arrays(model, design, topology, feedback_gain=None):
    """Pack model and gains into the padded arrays the kernels expect."""
    n, m, N = model.n, model.m, model.N
    pmax = max(node.p for node in model.nodes)
    C = np.zeros((N, pmax, n))
    H = np.zeros((N, n, pmax))
    Lm = np.zeros((N, n, pmax))
    Nm = np.zeros((N, n, n))
    Bk = np.zeros((N, n, m))
    Gc = np.zeros((N, n, n))
    p = np.array([node.p for node in model.nodes], dtype=np.int64)
    r = G.perron_weights(topology).r if design.mode == "directed" else np.ones(N)
    for i, (node, g) in enumerate(zip(model.nodes, design.nodes)):
        C[i, : node.p] = node.C
        H[i, :, : node.p] = g.H
        Lm[i, :, : node.p] = g.L
        Nm[i] = g.N
        mask = np.zeros(m)
        mask[list(node.known_inputs)] = 1.0
        Bk[i] = g.M @ model.B * mask
        Gc[i] = design.chi * r[i] * np.linalg.inv(g.P)
    F = np.zeros((m, n)) if feedback_gain is None else np.asarray(feedback_gain, float).reshape(m, n)
    return dict(A=np.asarray(model.A), B=np.asarray(model.B), D=np.asarray(model.D), F=F,
                C=C, p=p, H=H, Nm=Nm, Bk=Bk, Lm=Lm, Gc=Gc)


def simulate(config, verify=True, on_blowup="raise", backend=None):
    """RK4 simulation of plant and observers, sampled at every step.

    Parameters
    ----------
    verify : bool
        Check the design with :func:`verify_existing_design` at
        ``config.verify_tol`` first.  Disable only for fault-injection runs.
    on_blowup : {"raise", "truncate"}
        On a non-finite state either raise :class:`BlowUpError` or return the
        trace up to that point with ``blowup_time`` set.
    backend : {"cython", "python"}, optional
        Force a kernel; defaults to the compiled one when available.
    """
    _validate(config)
    model, design = config.model, config.design
    if verify:
        report = verify_existing_design(model, design, config.verify_tol)
        if not report.passed:
            raise SimulationError("design_not_verified", "; ".join(report.failures))
    n, N = model.n, model.N
    nsteps = config.nsteps
    h = config.step
    x0, z0 = _initial_conditions(config)
    arrs = kernel_arrays(model, design, config.topology, config.feedback_gain)
    adjs, idx = _topology_schedule(config, nsteps)
    ext = _exogenous(config, nsteps)

    if backend is None:
        integrate, name = kernel.integrate, kernel.BACKEND
    else:
        integrate, name = kernel.backends()[backend], backend
    states, blowup = integrate(adjs=adjs, topo_idx=idx[:nsteps], ext=ext, x0=x0, z0=z0, h=h, **arrs)

    blowup_time = None
    if blowup >= 0:
        blowup_time = blowup * h
        states = states[:blowup]
        idx = idx[:blowup]
    trace = _build_trace(states, idx, model, design, h, name, blowup_time)
    if blowup_time is not None and on_blowup == "raise":
        raise BlowUpError(blowup_time, trace)
    return trace


def _build_trace(states, idx, model, design, h, backend, blowup_time=None):
    n, N = model.n, model.N
    x = states[:, :n]
    z = states[:, n:].reshape(-1, N, n)
    HC = np.stack([g.H @ node.C for g, node in zip(design.nodes, model.nodes)])
    x_hat = z + np.einsum("irc,tc->tir", HC, x)
    e = x[:, None, :] - x_hat
    trace = SimulationTrace(np.arange(len(x)) * h, x, x_hat, e, None, idx[: len(x)], backend, blowup_time)
    # a run cut short by a blow-up may hold values whose squares overflow
    with np.errstate(over="ignore", invalid="ignore"):
        trace.V = lyapunov_trace(trace, design)
    return trace


def lyapunov_trace(trace, design):
    """``V(t) = sum_i e_i^T P_i e_i`` at every sample."""
    P = np.stack([g.P for g in design.nodes])
    return np.einsum("tir,irc,tic->t", trace.e, P, trace.e)


def probe_channels(model):
    """Input channels (columns of ``[B D]``) that some node does not know."""
    unknown = sorted({k for node in model.nodes for k in range(model.m) if k not in node.known_inputs})
    return unknown + list(range(model.m, model.m + model.q))


def _signal(fn, channels, width):
    def signal(t):
        out = np.zeros((len(t), width))
        if fn is None:
            return out
        vals = np.asarray(fn(t), dtype=float)
        if vals.ndim == 0:
            vals = np.full(len(t), float(vals))
        if vals.ndim == 1:
            vals = np.repeat(vals[:, None], len(channels), axis=1)
        out[:, channels] = vals
        return out

    return signal


def decoupling_probe(config, w_a, w_b, channels=None, **sim_kwargs):
    """Largest ``|e_i^a(t) - e_i^b(t)|`` between two runs that differ only in
    the unknown-input signal.

    ``w_a``/``w_b`` map a time array to channel values; a 1-D result is
    applied to every channel in ``channels`` (default :func:`probe_channels`).
    """
    model = config.model
    channels = probe_channels(model) if channels is None else list(channels)
    width = model.m + model.q
    runs = []
    for w in (w_a, w_b):
        cfg = ScenarioConfig(**{**vars(config), "disturbance": _signal(w, channels, width)})
        runs.append(simulate(cfg, **sim_kwargs))
    diff = runs[0].e - runs[1].e
    return float(np.max(np.linalg.norm(diff, axis=2)))


@dataclass
class ErrorMetrics:
    initial: np.ndarray
    peak: np.ndarray
    terminal: np.ndarray
    time_to_rel_1e3: np.ndarray
    total_initial: float
    total_terminal: float
    v_nonincreasing: bool
    blew_up: bool

    @property
    def terminal_relative(self):
        if self.total_initial == 0:
            return 0.0
        return self.total_terminal / self.total_initial

    def as_dict(self):
        return {
            "initial": self.initial.tolist(),
            "peak": self.peak.tolist(),
            "terminal": self.terminal.tolist(),
            "time_to_rel_1e-3": [None if np.isnan(v) else float(v) for v in self.time_to_rel_1e3],
            "terminal_relative": self.terminal_relative,
            "v_nonincreasing": self.v_nonincreasing,
            "blew_up": self.blew_up,
        }


def error_metrics(trace, growth_limit=1e6, v_rtol=1e-9):
    """Per-node summary of an error trace.

    ``blew_up`` is set for non-finite runs and for runs whose stacked error
    grew by more than ``growth_limit``.
    """
    if len(trace.times) == 0:
        raise SimulationError("empty_trace", "trace has no samples")
    with np.errstate(over="ignore", invalid="ignore"):
        return _error_metrics(trace, growth_limit, v_rtol)


def _error_metrics(trace, growth_limit, v_rtol):
    norms = trace.error_norms
    initial = norms[0]
    reached = norms <= 1e-3 * initial[None, :]
    t_hit = np.full(norms.shape[1], np.nan)
    for i in range(norms.shape[1]):
        hits = np.nonzero(reached[:, i])[0]
        if hits.size:
            t_hit[i] = trace.times[hits[0]]
    total = trace.total_error
    V = trace.V
    nonincreasing = bool(np.all(np.diff(V) <= v_rtol * V[:-1] + 1e-300))
    blew_up = trace.blowup_time is not None or not np.all(np.isfinite(total))
    if not blew_up and total[-1] > growth_limit * max(total[0], np.finfo(float).tiny):
        blew_up = True
    return ErrorMetrics(
        initial=initial,
        peak=norms.max(axis=0),
        terminal=norms[-1],
        time_to_rel_1e3=t_hit,
        total_initial=float(total[0]),
        total_terminal=float(total[-1]),
        v_nonincreasing=nonincreasing,
        blew_up=blew_up,
    )


def error_dynamics_matrix(design, topology):
    """Closed-form stacked error dynamics ``e' = E e`` for a fixed topology.

    ``E = blkdiag(N_i) - blkdiag(chi r_i P_i^{-1}) (L (x) I)``.
    """
    N = len(design.nodes)
    n = design.nodes[0].N.shape[0]
    L = G.laplacian(topology)
    r = G.perron_weights(topology).r if design.mode == "directed" else np.ones(N)
    E = np.zeros((N * n, N * n))
    for i, g in enumerate(design.nodes):
        gain = design.chi * r[i] * np.linalg.inv(g.P)
        for j in range(N):
            E[i * n:(i + 1) * n, j * n:(j + 1) * n] = -L[i, j] * gain
        E[i * n:(i + 1) * n, i * n:(i + 1) * n] += g.N
    return E


def integrate_linear(E, v0, step, nsteps):
    """Classical RK4 on ``v' = E v``; returns every sample."""
    out = np.empty((nsteps + 1, len(v0)))
    v = np.asarray(v0, dtype=float)
    out[0] = v
    h = step
    for t in range(nsteps):
        k1 = E @ v
        k2 = E @ (v + 0.5 * h * k1)
        k3 = E @ (v + 0.5 * h * k2)
        k4 = E @ (v + h * k3)
        v = v + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[t + 1] = v
    return out


def export_trace_csv(trace, path):
    """Write one row per sample.

    Columns: ``time``, ``x_1..x_n``, then per node ``i``: ``xhat{i}_1..xhat{i}_n``
    and ``enorm{i}``, and finally ``V``.  Node indices are 0-based.
    """
    T, N, n = trace.x_hat.shape
    cols = ["time"] + [f"x_{k + 1}" for k in range(n)]
    blocks = [trace.times[:, None], trace.x]
    norms = trace.error_norms
    for i in range(N):
        cols += [f"xhat{i}_{k + 1}" for k in range(n)] + [f"enorm{i}"]
        blocks += [trace.x_hat[:, i, :], norms[:, i:i + 1]]
    cols.append("V")
    blocks.append(trace.V[:, None])
    np.savetxt(path, np.hstack(blocks), delimiter=",", header=",".join(cols), comments="", fmt="%.17g")
    return cols
