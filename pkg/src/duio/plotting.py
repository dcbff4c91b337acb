"""Static SVG figures for simulation traces.

Uses :class:`matplotlib.figure.Figure` directly so no GUI backend is ever
touched.
"""

import numpy as np
from matplotlib.figure import Figure


def plot_states(trace, path, max_points=4000):
    """One panel per state: true trajectory and every node's estimate."""
    T, N, n = trace.x_hat.shape
    stride = max(1, T // max_points)
    t = trace.times[::stride]
    cols = 2 if n > 1 else 1
    rows = -(-n // cols)
    fig = Figure(figsize=(5 * cols, 2.2 * rows), layout="constrained")
    axes = np.atleast_1d(fig.subplots(rows, cols, sharex=True)).ravel()
    for k in range(n):
        ax = axes[k]
        for i in range(N):
            ax.plot(t, trace.x_hat[::stride, i, k], lw=1.0, ls="--", label=f"node {i}")
        ax.plot(t, trace.x[::stride, k], color="black", lw=1.4, label="true")
        ax.set_ylabel(f"$x_{{{k + 1}}}$")
    for ax in axes[n:]:
        ax.set_visible(False)
    for ax in axes[max(0, n - cols):n]:
        ax.set_xlabel("time [s]")
    axes[0].legend(fontsize="small", ncol=2)
    fig.savefig(path, format="svg")
    return path


def plot_lyapunov(trace, mu, path, max_points=4000):
    """``V(t)`` on a log scale against the envelope ``V(0) exp(-mu t)``."""
    stride = max(1, len(trace.times) // max_points)
    t = trace.times[::stride]
    V = trace.V[::stride]
    fig = Figure(figsize=(6, 3.5), layout="constrained")
    ax = fig.subplots()
    floor = np.finfo(float).tiny
    ax.semilogy(t, np.maximum(V, floor), label="V(t)")
    if mu is not None and np.isfinite(mu):
        ax.semilogy(t, np.maximum(trace.V[0] * np.exp(-mu * t), floor), ls="--", color="gray",
                    label=f"V(0) exp(-{mu:.3g} t)")
    ax.set_xlabel("time [s]")
    ax.set_ylabel("V")
    ax.legend()
    fig.savefig(path, format="svg")
    return path
