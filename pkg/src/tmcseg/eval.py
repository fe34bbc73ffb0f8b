"""Scoring and report emission: error rates, rendered decodes, result tables.

A run produces one `SegmentationResult` per (scenario, model, seed) cell.
`error_rate` scores only the hidden steps. `render_segmentation` and
`render_panel` map sequences back onto the pixel grid; `emit_table` collects
many results into the delimited and aligned-text summary tables.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .data import sequence_to_image
from .models import KINDS

MODEL_ORDER = ("vsl", "svrnn", "dmtmc")
MODEL_TITLES = {"vsl": "VSL", "svrnn": "SVRNN", "dmtmc": "d-mTMC"}

# published error percentages for the three standard scenarios, shown
# alongside measured cells on request
REFERENCE_ERROR_PERCENT = {
    ("vsl", "cattle-40"): 15.64,
    ("vsl", "camel-40"): 41.84,
    ("vsl", "camel-60"): 41.80,
    ("svrnn", "cattle-40"): 16.55,
    ("svrnn", "camel-40"): 12.12,
    ("svrnn", "camel-60"): 21.38,
    ("dmtmc", "cattle-40"): 1.93,
    ("dmtmc", "camel-40"): 2.60,
    ("dmtmc", "camel-60"): 3.62,
}

MISSING_CELL = "—"  # em dash: cell with no result


@dataclass
class SegmentationResult:
    """Decoded labels against the truth, plus run metadata.

    `decoded` covers the whole sequence but only hidden steps carry
    estimates: at observed steps it must repeat the given (true) label, so
    scoring is well defined on exactly the unobserved set.
    """

    decoded: np.ndarray
    truth: np.ndarray
    observed: np.ndarray
    kind: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.decoded = np.asarray(self.decoded, dtype=np.int64)
        self.truth = np.asarray(self.truth, dtype=np.int64)
        self.observed = np.asarray(self.observed, dtype=bool)
        n = self.decoded.shape[0]
        if self.truth.shape != (n,) or self.observed.shape != (n,):
            raise ValueError("decoded, truth and observed must have equal length")
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if not np.array_equal(self.decoded[self.observed],
                              self.truth[self.observed]):
            raise ValueError("observed steps must pass through their labels")


def error_rate(result):
    """Fraction of hidden steps whose decoded label is wrong."""
    hidden = ~result.observed
    if not hidden.any():
        raise ValueError("error rate needs at least one hidden step")
    return float(np.mean(result.decoded[hidden] != result.truth[hidden]))


def render_segmentation(result, hmap):
    """Place the decoded labels back onto the pixel grid."""
    if len(hmap) != result.decoded.shape[0]:
        raise ValueError(f"map covers {len(hmap)} steps, "
                         f"result has {result.decoded.shape[0]}")
    return sequence_to_image(result.decoded, hmap)


def _gray_tile(labels, hmap):
    img = sequence_to_image(np.asarray(labels, dtype=np.uint8), hmap)
    return np.where(img.pixels == 1, 0, 255).astype(np.int64)  # ink is dark


def render_panel(xs, truth, observed, decodes, hmap):
    """Side-by-side grayscale panel: observations, truth, mask, decodes.

    `decodes` maps model kind to a decoded label vector; tiles appear in
    MODEL_ORDER after the three data tiles. Hidden steps in the mask tile
    are mid-gray. Returns an int grid suitable for `data.save_grayscale`.
    """
    xs = np.asarray(xs, dtype=np.float64).reshape(len(hmap), -1)[:, 0]
    truth = np.asarray(truth, dtype=np.int64)
    observed = np.asarray(observed, dtype=bool)
    side = hmap.side
    grid = np.empty((side, side))
    grid[hmap.forward[:, 0], hmap.forward[:, 1]] = xs
    span = grid.max() - grid.min()
    x_tile = np.zeros((side, side), dtype=np.int64) if span == 0 else \
        np.round(255 * (grid - grid.min()) / span).astype(np.int64)
    truth_tile = _gray_tile(truth, hmap)
    mask_tile = _gray_tile(np.where(observed, truth, 0), hmap)
    rows, cols = hmap.forward[:, 0], hmap.forward[:, 1]
    hidden = ~observed
    mask_tile[rows[hidden], cols[hidden]] = 128
    tiles = [x_tile, truth_tile, mask_tile]
    tiles += [_gray_tile(decodes[kind], hmap)
              for kind in MODEL_ORDER if kind in decodes]
    gap = np.full((side, 1), 255, dtype=np.int64)
    parts = []
    for tile in tiles:
        parts.extend([tile, gap])
    return np.concatenate(parts[:-1], axis=1)


def scenario_title(key):
    """'camel-60' -> 'Camel 60%'; unrecognized keys pass through."""
    name, _, frac = key.partition("-")
    if frac.isdigit():
        return f"{name.capitalize()} {frac}%"
    return key


@dataclass
class TableReport:
    """The same summary twice: machine-readable CSV and aligned text."""

    csv_text: str
    text: str


def _format_percent(value, decimal):
    return f"{100.0 * value:.2f}".replace(".", decimal)


def emit_table(results, scenario_order=None, include_reference=False,
               decimal="."):
    """Summarize results as a models × scenarios error-percentage table.

    Each cell is the best (lowest) error rate across the results that share
    a (kind, scenario) pair; empty cells render as an em dash in the text
    table and stay blank in the CSV. Scenarios order lexicographically
    unless an explicit order is given.
    """
    results = list(results)
    if not results:
        raise ValueError("need at least one result")
    cells = {}
    for r in results:
        key = (r.kind, r.meta.get("scenario", "unknown"))
        err = error_rate(r)
        if key not in cells or err < cells[key]:
            cells[key] = err
    if scenario_order is None:
        scenario_order = sorted({s for _, s in cells})
    kinds = [k for k in MODEL_ORDER if any(k == kk for kk, _ in cells)]

    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["model", *(scenario_title(s) for s in scenario_order)])
    for kind in kinds:
        row = [MODEL_TITLES[kind]]
        for s in scenario_order:
            err = cells.get((kind, s))
            row.append("" if err is None else _format_percent(err, decimal))
        writer.writerow(row)

    text_rows = [["model", *(scenario_title(s) for s in scenario_order)]]
    for kind in kinds:
        row = [MODEL_TITLES[kind]]
        for s in scenario_order:
            err = cells.get((kind, s))
            cell = MISSING_CELL if err is None else _format_percent(err, decimal)
            ref = REFERENCE_ERROR_PERCENT.get((kind, s))
            if include_reference and ref is not None:
                ref_text = f"{ref:.2f}".replace(".", decimal)
                cell = f"{cell} (ref {ref_text})"
            row.append(cell)
        text_rows.append(row)
    widths = [max(len(r[i]) for r in text_rows) for i in range(len(text_rows[0]))]
    lines = []
    for i, row in enumerate(text_rows):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return TableReport(csv_text=buf.getvalue(), text="\n".join(lines) + "\n")


def write_results_csv(results, path):
    """Per-result sidecar: one row per (scenario, model, seed) with metadata."""
    header = ["scenario", "model", "seed", "error_rate", "epochs", "seconds"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for r in results:
            writer.writerow([
                r.meta.get("scenario", "unknown"), r.kind,
                r.meta.get("seed", ""), f"{error_rate(r):.6f}",
                r.meta.get("epochs", ""), r.meta.get("seconds", ""),
            ])
