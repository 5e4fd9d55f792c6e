"""Figures for the report subcommands (Agg backend, files only)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_convergence(h, errors, path, title: str = "", order: float = 2.0) -> None:
    """Log-log max error against h with a reference slope."""
    h = np.asarray(h, dtype=float)
    errors = np.asarray(errors, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.loglog(h, errors, "o-", label="max error")
    ref = errors[0] * (h / h[0]) ** order
    ax.loglog(h, ref, "k--", lw=0.8, label=f"h^{order:g}")
    ax.set_xlabel("h")
    ax.set_ylabel("max |u - u*|")
    if title:
        ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_radial(t, phi, path, exact=None) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.plot(t, phi, label="phi")
    if exact is not None:
        ax.plot(t, exact, "k--", lw=0.8, label="exact")
    ax.set_xlabel("t = |z|^2")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_exhaustion(t, solutions, ks, path) -> None:
    """Exhaustion ladder and the normalized profile ``u + 2 log sigma``."""
    t = np.asarray(t)
    sigma = 1.0 - np.sqrt(t)
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 4))
    for k, phi in zip(ks, solutions):
        a1.plot(t, phi, lw=0.9, label=f"k={k}")
        a2.semilogx(sigma[:-1], phi[:-1] + 2 * np.log(sigma[:-1]), lw=0.9)
    a1.set_xlabel("t")
    a1.set_ylabel("u_(k)")
    a1.legend(fontsize="small")
    a2.set_xlabel("sigma")
    a2.set_ylabel("u_(k) + 2 log sigma")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
