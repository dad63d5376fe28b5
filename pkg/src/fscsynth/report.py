"""Rendering synthesis results: plain text, JSON lines, and figures."""

from __future__ import annotations

import json
import math
import os

from .driver import SynthesisReport
from .fsc import Fsc, serialize_fsc
from .model import Pomdp


def render_text(report: SynthesisReport, m: Pomdp | None = None) -> str:
    """Human-readable summary, one fact per line."""
    lines = [f"outcome: {report.outcome}"]
    if report.verified_probability is not None:
        lines.append(f"verified probability: {report.verified_probability:.12g}")
        lines.append(f"threshold: > {report.alpha:.12g}")
    lines.append(f"iterations: {report.iterations}")
    lines.append(f"oracle queries: {report.oracle_queries}")
    lines.append(f"wall time: {report.wall_time:.3f}s")
    for ev in report.history:
        holds = "holds" if ev.get("holds") else "violated"
        lines.append(
            f"  iteration {ev['iteration']}: {ev['nodes']} node(s), "
            f"probability {ev['probability']:.12g} ({holds})"
        )
    if report.fsc is not None:
        lines.append("controller:")
        body = serialize_fsc(report.fsc)
        lines.extend("  " + ln for ln in body.rstrip("\n").split("\n"))
    return "\n".join(lines) + "\n"


def render_json_lines(report: SynthesisReport, m: Pomdp | None = None) -> str:
    """One JSON object per line: each iteration, then the final result."""
    out = []
    for ev in report.history:
        rec = {"event": "iteration"}
        rec.update(ev)
        if "suffix" in rec and m is not None:
            rec["suffix"] = [m.observations[z] for z in rec["suffix"]]
        elif "suffix" in rec:
            rec["suffix"] = list(rec["suffix"])
        out.append(json.dumps(rec))
    final = {
        "event": "result",
        "outcome": report.outcome,
        "iterations": report.iterations,
        "oracle_queries": report.oracle_queries,
        "verified_probability": report.verified_probability,
        "alpha": report.alpha,
        "wall_time": report.wall_time,
        "fsc": serialize_fsc(report.fsc) if report.fsc is not None else None,
    }
    out.append(json.dumps(final))
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# Figures
# ---------------------------------------------------------------------------


def _require_agg():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def _draw_progress(report: SynthesisReport, path: str) -> None:
    plt = _require_agg()
    its = [ev["iteration"] for ev in report.history]
    probs = [ev["probability"] for ev in report.history]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(its, probs, marker="o", label="hypothesis safety probability")
    ax.axhline(report.alpha, linestyle="--", color="tab:red", label="threshold")
    ax.set_xlabel("iteration")
    ax.set_ylabel("probability")
    ax.set_ylim(-0.05, 1.05)
    if its:
        ax.set_xticks(its)
    ax.legend(loc="lower right")
    ax.set_title(f"synthesis progress ({report.outcome})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _draw_controller(f: Fsc, path: str) -> None:
    plt = _require_agg()
    n = f.n_nodes
    fig, ax = plt.subplots(figsize=(max(5, 1.8 * n), max(5, 1.8 * n)))
    # Nodes on a circle; self-loops as small arcs, other edges as arrows.
    cx, cy, r = 0.0, 0.0, 1.0
    pos = {}
    for i in range(n):
        theta = math.pi / 2 - 2 * math.pi * i / max(n, 1)
        pos[i] = (cx + r * math.cos(theta), cy + r * math.sin(theta))
    for i in range(n):
        x, y = pos[i]
        circ = plt.Circle((x, y), 0.14, fill=True, color="#cfe3ff", ec="black", zorder=2)
        ax.add_patch(circ)
        ax.text(x, y, f.node_name(i), ha="center", va="center", zorder=3, fontsize=9)
    # Group edge labels per (src, dst).
    labels: dict[tuple[int, int], list[str]] = {}
    for i in range(n):
        for z in range(f.n_observations):
            if (i, z) in f.dont_care:
                continue
            a, j = f.step(i, z)
            labels.setdefault((i, j), []).append(
                f"{f.obs_name(z)} / {f.action_name(a)}"
            )
    for (i, j), lab in labels.items():
        xi, yi = pos[i]
        xj, yj = pos[j]
        text = "\n".join(lab)
        if i == j:
            # Self-loop drawn as a small arc just outside the node.
            ang = math.atan2(yi - cy, xi - cx)
            lx = xi + 0.30 * math.cos(ang)
            ly = yi + 0.30 * math.sin(ang)
            ax.annotate(
                "",
                xy=(xi + 0.12 * math.cos(ang + 0.5), yi + 0.12 * math.sin(ang + 0.5)),
                xytext=(xi + 0.12 * math.cos(ang - 0.5), yi + 0.12 * math.sin(ang - 0.5)),
                arrowprops=dict(
                    arrowstyle="->", connectionstyle="arc3,rad=1.6", color="black"
                ),
                zorder=1,
            )
            ax.text(lx, ly, text, ha="center", va="center", fontsize=7)
        else:
            dx, dy = xj - xi, yj - yi
            dist = math.hypot(dx, dy)
            ux, uy = dx / dist, dy / dist
            start = (xi + 0.14 * ux, yi + 0.14 * uy)
            end = (xj - 0.16 * ux, yj - 0.16 * uy)
            ax.annotate(
                "",
                xy=end,
                xytext=start,
                arrowprops=dict(
                    arrowstyle="->", connectionstyle="arc3,rad=0.12", color="black"
                ),
                zorder=1,
            )
            mx, my = (start[0] + end[0]) / 2, (start[1] + end[1]) / 2
            # Nudge the label off the edge, perpendicular.
            ax.text(mx - 0.10 * uy, my + 0.10 * ux, text, ha="center",
                    va="center", fontsize=7)
    # Entry marker.
    x0, y0 = pos[f.init]
    ax.annotate(
        "",
        xy=(x0 - 0.15, y0),
        xytext=(x0 - 0.45, y0),
        arrowprops=dict(arrowstyle="->", color="black"),
    )
    ax.set_xlim(-1.8, 1.8)
    ax.set_ylim(-1.8, 1.8)
    ax.set_aspect("equal")
    ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_figures(report: SynthesisReport, outdir: str) -> list[str]:
    """Write progress.png (always) and controller.png (when a controller
    was found) into `outdir`; returns the written paths."""
    os.makedirs(outdir, exist_ok=True)
    written = []
    p = os.path.join(outdir, "progress.png")
    _draw_progress(report, p)
    written.append(p)
    if report.fsc is not None:
        c = os.path.join(outdir, "controller.png")
        _draw_controller(report.fsc, c)
        written.append(c)
    return written
