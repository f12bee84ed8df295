"""Static figures for mission outputs, rendered with the Agg backend.

Every figure is saved as PNG with fixed metadata so repeated runs write
identical bytes.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "font.size": 9,
    "axes.titlesize": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "image.origin": "upper",
    "path.simplify": False,
}
# the default "Software" entry embeds the matplotlib version
PNG_METADATA = {"Software": None}


def _save(fig, path):
    fig.savefig(path, format="png", metadata=PNG_METADATA)
    plt.close(fig)


def _raster_axes(ax, raster, title, cmap):
    img = np.ma.masked_array(raster.values, raster.mask)
    im = ax.imshow(img, cmap=cmap, interpolation="nearest")
    ax.set_title(title)
    ax.set_xlabel("column")
    ax.set_ylabel("row")
    return im


def field_figure(fld, path, title="ground truth"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4, 3.6))
        im = _raster_axes(ax, fld, title, "viridis")
        fig.colorbar(im, ax=ax, shrink=0.85)
        fig.tight_layout()
        _save(fig, path)


def epoch_figure(record, path, launch=None):
    """Mean and variance maps of one epoch with BV points and the planned paths."""
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, 2, figsize=(8, 3.6))
        for ax, raster, name, cmap in ((axes[0], record.mean_map, "mean", "viridis"),
                                       (axes[1], record.var_map, "variance", "magma")):
            im = _raster_axes(ax, raster, f"epoch {record.epoch} {name}", cmap)
            fig.colorbar(im, ax=ax, shrink=0.85)
            bv = record.bv_state.bv_points if record.bv_state is not None else np.empty((0, 2))
            if len(bv):
                ax.plot(bv[:, 1], bv[:, 0], "w.", ms=3, alpha=0.8)
            for plan in record.plans:
                pts = np.vstack([plan.path.origin[None, :], plan.path.stops])
                ax.plot(pts[:, 1], pts[:, 0], "-", color="tab:red", lw=0.8)
                ax.plot(plan.path.stops[:, 1], plan.path.stops[:, 0], "x", color="tab:red", ms=4)
            if launch is not None:
                ax.plot(launch[1], launch[0], "^", color="tab:orange", ms=6)
        fig.tight_layout()
        _save(fig, path)


def mse_figure(history, path, boundaries=(), trend=None):
    """MSE and mean variance against sample index, epoch boundaries dashed."""
    idx = np.array([m.sample_index for m in history])
    mse = np.array([m.mse for m in history])
    var = np.array([m.mean_variance for m in history])
    with plt.rc_context(STYLE):
        fig, (a0, a1) = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
        a0.semilogy(idx, mse, lw=0.8, label="MSE")
        if trend is not None:
            a0.semilogy(idx, trend, lw=1.2, label="50-sample mean")
            a0.legend(loc="upper right")
        a0.set_ylabel("MSE")
        a1.semilogy(idx, var, lw=0.8, color="tab:purple")
        a1.set_ylabel("mean variance")
        a1.set_xlabel("sample")
        for b in boundaries:
            for ax in (a0, a1):
                ax.axvline(b, color="0.5", ls="--", lw=0.6)
        fig.tight_layout()
        _save(fig, path)


def sweep_figure(curves, path):
    """One MSE curve per sweep combination; ``curves`` maps label to (idx, mse)."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6, 4))
        cmap = plt.get_cmap("viridis")
        n = max(len(curves) - 1, 1)
        for k, (label, (idx, mse)) in enumerate(curves.items()):
            ax.semilogy(idx, mse, lw=0.8, color=cmap(k / n), label=label)
        ax.set_xlabel("sample")
        ax.set_ylabel("MSE")
        if len(curves) <= 20:
            ax.legend(loc="upper right", ncol=2)
        fig.tight_layout()
        _save(fig, path)
