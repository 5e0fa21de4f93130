"""Matplotlib figure rendering for the CLI report paths.

Every figure goes straight to a file through the Agg backend; nothing
here opens a window. PNG metadata is stripped so reruns stay
byte-identical.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
from matplotlib.patches import Polygon as MplPolygon

from .camera import Trajectory
from .raster import label_color
from .refine import RefinementHistory
from .scene import SceneState

_PNG_META = {"Software": None}


def _save(fig, path: str) -> None:
    fig.savefig(path, dpi=110, bbox_inches="tight", metadata=_PNG_META)
    plt.close(fig)


def _draw_room(ax, scene: SceneState) -> None:
    poly = list(scene.room.floor_polygon)
    ax.add_patch(MplPolygon(poly, closed=True, fill=False, edgecolor="black", linewidth=1.6))
    door = scene.room.door_position
    ax.plot([door[0]], [door[1]], marker="s", markersize=9, color="saddlebrown", linestyle="none")
    ax.annotate("door", door, textcoords="offset points", xytext=(4, 4), fontsize=7)


def _draw_instances(ax, scene: SceneState, annotate: bool = True) -> None:
    for index, iid in enumerate(sorted(scene.instances), start=1):
        inst = scene.get(iid)
        corners = inst.box.footprint_corners()
        color = tuple(c / 255.0 for c in label_color(index))
        ax.add_patch(MplPolygon(corners, closed=True, facecolor=color, edgecolor="black", alpha=0.75, linewidth=0.6))
        # short facing tick so orientation is visible
        fx, fy = inst.facing()
        hx = inst.dims[0] / 2.0
        ax.plot(
            [inst.x, inst.x + fx * hx],
            [inst.y, inst.y + fy * hx],
            color="black",
            linewidth=0.7,
        )
        if annotate:
            ax.annotate(iid, (inst.x, inst.y), fontsize=5.5, ha="center", va="center")


def _floor_axes(ax, scene: SceneState, title: str) -> None:
    x0, y0, x1, y1 = scene.room.bounds()
    pad = 0.4
    ax.set_xlim(x0 - pad, x1 + pad)
    ax.set_ylim(y0 - pad, y1 + pad)
    ax.set_aspect("equal")
    ax.set_xlabel("x (m)")
    ax.set_ylabel("y (m)")
    ax.set_title(title, fontsize=10)


def scene_figure(scene: SceneState, path: str, title: str = "scene layout") -> None:
    """Top-down layout plot: room outline, door, object footprints."""
    fig, ax = plt.subplots(figsize=(7, 6))
    _draw_room(ax, scene)
    _draw_instances(ax, scene)
    _floor_axes(ax, scene, title)
    _save(fig, path)


def trajectory_figure(scene: SceneState, traj: Trajectory, path: str) -> None:
    """Layout plot with the planned camera path and viewpoints overlaid."""
    fig, ax = plt.subplots(figsize=(7, 6))
    _draw_room(ax, scene)
    _draw_instances(ax, scene, annotate=False)
    ax.plot([traj.start.x], [traj.start.y], marker="*", markersize=13, color="red", linestyle="none")
    for i, leg in enumerate(traj.legs):
        xs = [p[0] for p in leg.waypoints]
        ys = [p[1] for p in leg.waypoints]
        ax.plot(xs, ys, linewidth=1.4, alpha=0.9, label=f"{i}: {leg.target_id}")
        pose = leg.viewpoint.pose
        ax.annotate(
            "",
            xy=(pose.x + 0.35 * math.cos(pose.yaw), pose.y + 0.35 * math.sin(pose.yaw)),
            xytext=(pose.x, pose.y),
            arrowprops={"arrowstyle": "->", "color": "red", "lw": 1.2},
        )
    if traj.legs:
        ax.legend(fontsize=6, loc="upper right")
    _floor_axes(ax, scene, "camera trajectory")
    _save(fig, path)


def history_figure(history: RefinementHistory, path: str) -> None:
    """Refinement progress: fidelity and artifact counts per iteration."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    idx = [it.index for it in history.iterations]
    ax1.plot(idx, [it.metrics.fidelity for it in history.iterations], marker="o")
    ax1.set_ylim(-0.05, 1.05)
    ax1.set_xlabel("iteration")
    ax1.set_ylabel("fidelity")
    ax1.set_title("constraint fidelity", fontsize=10)
    ax2.plot(idx, [it.metrics.out_of_boundary_count for it in history.iterations], marker="o", label="#OB")
    ax2.plot(idx, [it.metrics.collision_pair_count for it in history.iterations], marker="s", label="#CN")
    ax2.set_xlabel("iteration")
    ax2.set_ylabel("count")
    ax2.set_title("physical artifacts", fontsize=10)
    ax2.legend(fontsize=8)
    fig.suptitle("converged" if history.converged else "not converged", fontsize=10)
    _save(fig, path)


def bev_figure(scene: SceneState, path: str) -> None:
    """Bird's-eye occupancy figure mirroring the PPM export."""
    scene_figure(scene, path, title="bird's-eye view")


def scores_figure(rows: list[tuple[str, int, float | None]], path: str) -> None:
    """Per-family mean-score bars; unanswered families are drawn empty."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    labels = [r[0] for r in rows]
    values = [r[2] if r[2] is not None else 0.0 for r in rows]
    bars = ax.bar(labels, values, color="steelblue")
    for bar, row in zip(bars, rows):
        note = "-" if row[2] is None else f"{row[2]:.3f} (n={row[1]})"
        ax.annotate(note, (bar.get_x() + bar.get_width() / 2, bar.get_height()), ha="center", va="bottom", fontsize=8)
    ax.set_ylim(0, 1.1)
    ax.set_ylabel("mean score")
    ax.set_title("answer scores by family", fontsize=10)
    plt.setp(ax.get_xticklabels(), rotation=15, ha="right", fontsize=8)
    _save(fig, path)


def sweep_figure(rows: list[dict], path: str) -> None:
    """Summary of sweep cells: fidelity and occupancy per cell."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 3.5))
    idx = list(range(len(rows)))
    names = [r["cell"] for r in rows]
    ax1.bar(idx, [r["fidelity"] for r in rows], color="seagreen")
    ax1.set_xticks(idx)
    ax1.set_xticklabels(names, rotation=45, ha="right", fontsize=6)
    ax1.set_ylim(0, 1.05)
    ax1.set_ylabel("fidelity")
    ax1.set_title("constraint fidelity per cell", fontsize=10)
    ax2.bar(idx, [r["occupancy"] for r in rows], color="slategray")
    ax2.set_xticks(idx)
    ax2.set_xticklabels(names, rotation=45, ha="right", fontsize=6)
    ax2.set_ylabel("occupancy ratio")
    ax2.set_title("floor occupancy per cell", fontsize=10)
    _save(fig, path)
