"""SVG figure rendering for reports.

Thin matplotlib wrappers; every function writes one SVG file and closes its
figure.  The renderers are presentation-only: no numerics happen here.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .domain import DomainSpec
from .field import ScalarField
from .interface import Interface, normals


def _domain_axes(ax, spec: DomainSpec):
    ax.set_xlim(0.0, spec.Lx)
    ax.set_ylim(0.0, spec.Ly)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")


def render_interface(path, iface: Interface, spec: DomainSpec,
                     mode=None, title: str = "interface") -> None:
    """Interface polyline with outward normal arrows, optional mode overlay."""
    fig, ax = plt.subplots(figsize=(5.0, 4.2))
    pts = iface.nodes
    closed = np.vstack([pts, pts[:1]]) if iface.closed else pts
    ax.plot(closed[:, 0], closed[:, 1], "-", color="tab:blue", lw=1.4)
    nu = normals(iface)
    k = max(1, iface.n // 24)
    ax.quiver(pts[::k, 0], pts[::k, 1], nu[::k, 0], nu[::k, 1],
              angles="xy", scale=22, width=3e-3, color="tab:gray")
    if mode is not None:
        mode = np.asarray(mode, float)
        amp = 0.05 * min(spec.Lx, spec.Ly) / max(np.abs(mode).max(), 1e-300)
        off = pts + amp * mode[:, None] * nu
        offc = np.vstack([off, off[:1]]) if iface.closed else off
        ax.plot(offc[:, 0], offc[:, 1], "--", color="tab:red", lw=1.2,
                label="mode (scaled)")
        ax.legend(loc="upper right", fontsize=8)
    _domain_axes(ax, spec)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def render_heatmap(path, f: ScalarField, title: str = "field",
                   iface: Interface | None = None) -> None:
    """Cell-centered field heatmap, optionally with the interface on top."""
    spec = f.spec
    fig, ax = plt.subplots(figsize=(5.4, 4.2))
    im = ax.imshow(f.values.T, origin="lower",
                   extent=(0.0, spec.Lx, 0.0, spec.Ly), cmap="RdBu_r")
    fig.colorbar(im, ax=ax, shrink=0.85)
    if iface is not None:
        pts = iface.nodes
        closed = np.vstack([pts, pts[:1]]) if iface.closed else pts
        ax.plot(closed[:, 0], closed[:, 1], "k-", lw=1.0)
    _domain_axes(ax, spec)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def render_dispersion(path, ks, discrete, oracle) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    ax.plot(ks, oracle, "o-", label="analytic", color="tab:blue")
    ax.plot(ks, discrete, "s--", label="discrete", color="tab:red")
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("mode index k")
    ax.set_ylabel("second-variation value")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def render_probe_scatter(path, samples) -> None:
    """Energy excess against squared symmetric difference, log-log."""
    samples = np.asarray(samples, float)
    sd2 = samples[:, 0] ** 2
    dJ = samples[:, 1]
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    pos = dJ > 0
    ax.loglog(sd2[pos], dJ[pos], "o", ms=4, color="tab:blue", label="excess > 0")
    if np.any(~pos):
        ax.loglog(sd2[~pos], -dJ[~pos], "x", ms=5, color="tab:red",
                  label="excess < 0 (negated)")
    ax.set_xlabel("|F △ E|^2")
    ax.set_ylabel("J(F) - J(E)")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def render_curve(path, x, y, xlabel: str, ylabel: str, logy: bool = False,
                 hline: float | None = None) -> None:
    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    if logy:
        ax.semilogy(x, y, "-", color="tab:blue")
    else:
        ax.plot(x, y, "-", color="tab:blue")
    if hline is not None:
        ax.axhline(hline, color="k", lw=0.6)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
