"""MSE bar charts as standalone SVG (one chart per dataset and method)."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

from .errors import NoDataError
from .evaluate import EvalReport
from .kernels import FAMILIES

WIDTH, HEIGHT = 640, 380
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 50, 110
DATASET_ORDER = ("acceleration", "fft", "wavelet", "combined")


def _rows_from(report) -> tuple[list[dict], float | None]:
    if isinstance(report, EvalReport):
        rows = [{"method": r.spec.method, "kernel": r.spec.kernel.family, "dataset": r.spec.dataset,
                 "mse": r.mse, "rmse": r.rmse, "meets_goal": r.meets(report.goal_threshold_g)}
                for r in report.rows if not r.failed]
        return rows, report.goal_threshold_g
    rows = [r for r in report if r["mse"] == r["mse"]]
    return rows, None


def bar_chart_svg(title: str, labels: list[str], values: list[float], goal_mse: float | None = None) -> str:
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    plot_h = HEIGHT - MARGIN_T - MARGIN_B
    top = max(values + ([goal_mse] if goal_mse else [])) or 1.0
    top *= 1.1
    slot = plot_w / len(values)
    bar_w = slot * 0.6
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="24" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T + plot_h}" x2="{MARGIN_L + plot_w}" y2="{MARGIN_T + plot_h}" stroke="black"/>',
        f'<line x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{MARGIN_T + plot_h}" stroke="black"/>',
        f'<text x="16" y="{MARGIN_T + plot_h / 2:.1f}" transform="rotate(-90 16 {MARGIN_T + plot_h / 2:.1f})" '
        f'text-anchor="middle">MSE (g^2)</text>',
    ]
    for i, (label, v) in enumerate(zip(labels, values)):
        h = plot_h * v / top
        x = MARGIN_L + i * slot + (slot - bar_w) / 2
        y = MARGIN_T + plot_h - h
        cx = x + bar_w / 2
        out.append(f'<rect class="bar" x="{x:.2f}" y="{y:.2f}" width="{bar_w:.2f}" height="{h:.2f}" fill="#4477aa"/>')
        out.append(f'<text class="value" x="{cx:.2f}" y="{y - 4:.2f}" text-anchor="middle">{v:.3f}</text>')
        ly = MARGIN_T + plot_h + 12
        out.append(f'<text class="label" x="{cx:.2f}" y="{ly:.2f}" text-anchor="end" '
                   f'transform="rotate(-40 {cx:.2f} {ly:.2f})">{escape(label)}</text>')
    if goal_mse:
        gy = MARGIN_T + plot_h - plot_h * goal_mse / top
        out.append(f'<line x1="{MARGIN_L}" y1="{gy:.2f}" x2="{MARGIN_L + plot_w}" y2="{gy:.2f}" '
                   f'stroke="#cc3311" stroke-dasharray="6 4"/>')
        out.append(f'<text x="{MARGIN_L + plot_w - 4}" y="{gy - 4:.2f}" text-anchor="end" fill="#cc3311">'
                   f'goal {goal_mse:.3f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_figures(report, outdir: str | Path, goal_threshold_g: float | None = None) -> list[Path]:
    """Write ``<method>_<dataset>.svg`` for every (dataset, method) group.

    ``report`` is an :class:`EvalReport` or rows read back from the report
    CSV.  Bars follow the kernel-family order; value labels carry the MSE to
    three decimals.
    """
    rows, goal = _rows_from(report)
    goal = goal_threshold_g if goal_threshold_g is not None else goal
    if not rows:
        raise NoDataError("report has no successful rows to plot")
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    groups = {}
    for r in rows:
        groups.setdefault((r["method"], r["dataset"]), []).append(r)
    paths = []
    for (method, dataset) in sorted(groups, key=lambda g: (g[0], DATASET_ORDER.index(g[1])
                                                            if g[1] in DATASET_ORDER else 99)):
        members = sorted(groups[(method, dataset)],
                         key=lambda r: FAMILIES.index(r["kernel"]) if r["kernel"] in FAMILIES else 99)
        svg = bar_chart_svg(f"{method.upper()} on {dataset} scores: cross-validated MSE",
                            [r["kernel"] for r in members], [r["mse"] for r in members],
                            goal**2 if goal else None)
        path = outdir / f"{method}_{dataset}.svg"
        path.write_text(svg)
        paths.append(path)
    return paths
