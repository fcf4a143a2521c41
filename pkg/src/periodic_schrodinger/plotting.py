"""Static figures: light-cone heat map, velocity scaling and band structure."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .output import atomic_write  # noqa: E402

RC = {
    "font.size": 10,
    "axes.labelsize": 10,
    "legend.fontsize": 8,
    "figure.dpi": 100,
    "savefig.dpi": 150,
    "axes.grid": False,
    # fixed metadata keeps repeated renders identical
    "svg.hashsalt": "periodic-schrodinger",
}


def _save(fig, path) -> None:
    import io

    buf = io.BytesIO()
    fig.savefig(buf, format="png", bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    atomic_write(path, buf.getvalue())


def lightcone_figure(profile, fit, path, *, title: str = "") -> None:
    """``log10 max(||K(t,d)||, ||K(t,-d)||)`` over ``d >= 0`` with the fitted front and the ``C2/mu`` cone."""
    d, z = profile.d, profile.norms
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(6.4, 4.6))
        mesh = ax.pcolormesh(d, profile.t, np.log10(np.maximum(z, 1e-16)), shading="nearest",
                             cmap="viridis", vmin=-16, vmax=0, rasterized=True)
        fig.colorbar(mesh, ax=ax, label=r"$\log_{10}\|K(t,d)\|$")
        t = profile.t
        front = (t * fit.v_front + fit.intercept).clip(min=0)
        ax.plot(front, t, "w-", lw=1.2, label=f"front, slope {fit.v_front:.3g}")
        cone = profile.v_lr_bound * t
        ax.plot(cone, t, "k--", lw=1, label=r"$C_2/\mu$ cone")
        ax.set_xlim(d[0], d[-1])
        ax.set_ylim(t[0], t[-1])
        ax.set_xlabel("block offset $|d|$")
        ax.set_ylabel("$t$")
        if title:
            ax.set_title(title)
        ax.legend(loc="upper left", framealpha=0.8)
        _save(fig, path)


def scaling_figure(summary: dict, rows: list[dict], path) -> None:
    """Log-log velocities against ``mu`` for one sweep."""
    mu = np.array([r["mu"] for r in rows])
    with plt.rc_context(RC):
        fig, ax = plt.subplots(figsize=(5.6, 4.2))
        series = [
            ("v_asy_exact_A", "o-", "exact, variant A (sites)"),
            ("v_asy_exact_B", "s-", "exact, variant B"),
            ("v_asy_upper", "^-", "upper"),
            ("v_asy_bound", "--", r"$C_3/\mu^{p-1}$"),
            ("v_lr_bound", ":", r"$C_2/\mu$"),
            ("v_front", "D", "front fit"),
            ("v_asy_direct", "x", "direct (blocks)"),
            ("v_asy_direct_site", "+", "direct (sites)"),
        ]
        for key, style, label in series:
            y = np.array([np.nan if r.get(key) is None else r[key] for r in rows], dtype=float)
            if np.all(np.isnan(y)):
                continue
            ax.loglog(mu, y, style, ms=4, label=label)
        ax.set_xlabel(r"$\mu$")
        ax.set_ylabel("velocity (blocks / time)")
        ax.set_title(f"p = {summary['p']}, fitted slope {summary['slope_exact']:.3f}")
        ax.legend(loc="best")
        _save(fig, path)


def bands_figure(x, zeta, dzeta, path, *, mu: float) -> None:
    with plt.rc_context(RC):
        fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.4))
        for ell in range(zeta.shape[1]):
            a1.plot(x, mu * (zeta[:, ell] - zeta[:, ell].mean()), lw=1, label=f"band {ell + 1}")
            a2.plot(x, mu * dzeta[:, ell], lw=1)
        a1.set_xlabel("$x$")
        a1.set_ylabel(r"$\mu(\zeta_\ell - \bar\zeta_\ell)$")
        a2.set_xlabel("$x$")
        a2.set_ylabel(r"$\mu\,\partial_x\zeta_\ell$")
        a1.legend(loc="best")
        fig.tight_layout()
        _save(fig, path)
