"""Dice-coefficient evaluation over clinical tumor regions.

Three nested regions are scored, defined by label sets over the 5-class
taxonomy (0 non-tumor, 1 necrosis, 2 edema, 3 non-enhancing, 4 enhancing):

    whole  = {1, 2, 3, 4}   every tumor label
    core   = {1, 3, 4}      everything except edema
    active = {4}            enhancing only

The Dice score of two binary masks is 2|P & R| / (|P| + |R|), the harmonic
mean of precision and recall.  When both masks are empty the score is 0/0
and reported as undefined (None); summaries exclude undefined scores but
count them.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .volume import LabelVolume

REGIONS = ("whole", "core", "active")

REGION_LABELS = {
    "whole": frozenset({1, 2, 3, 4}),
    "core": frozenset({1, 3, 4}),
    "active": frozenset({4}),
}


def region_mask(labels: LabelVolume, region: str) -> np.ndarray:
    """Boolean mask of the voxels whose label belongs to the region."""
    if region not in REGION_LABELS:
        raise ValueError(f"region must be one of {REGIONS}, got {region!r}")
    return np.isin(labels.labels, sorted(REGION_LABELS[region]))


def dice(pred: np.ndarray, ref: np.ndarray):
    """2|P & R| / (|P| + |R|) for boolean masks; None when both are empty."""
    pred = np.asarray(pred, dtype=bool)
    ref = np.asarray(ref, dtype=bool)
    if pred.shape != ref.shape:
        raise ValueError(f"mask dims differ: {pred.shape} vs {ref.shape}")
    p = int(pred.sum())
    r = int(ref.sum())
    if p + r == 0:
        return None
    return 2.0 * int((pred & ref).sum()) / (p + r)


def evaluate_case(pred: LabelVolume, ref: LabelVolume) -> dict:
    """Per-region Dice scores of a predicted labeling against a reference."""
    if pred.dims != ref.dims:
        raise ValueError(f"label dims differ: {pred.dims} vs {ref.dims}")
    return {
        region: dice(region_mask(pred, region), region_mask(ref, region))
        for region in REGIONS
    }


@dataclass
class DiceReport:
    """Per-region summary over a case set: median, quartiles, undefined count."""

    n_cases: int
    scores: dict         # region -> list of defined scores, case order
    median: dict         # region -> float or None
    q1: dict
    q3: dict
    undefined_count: dict


def aggregate(case_scores) -> DiceReport:
    """Summarize per-case region scores (the output of evaluate_case)."""
    case_scores = list(case_scores)
    if not case_scores:
        raise ValueError("at least one case is required")
    scores = {region: [] for region in REGIONS}
    undefined = {region: 0 for region in REGIONS}
    for case in case_scores:
        for region in REGIONS:
            value = case[region]
            if value is None:
                undefined[region] += 1
            else:
                scores[region].append(float(value))
    median, q1, q3 = {}, {}, {}
    for region in REGIONS:
        if scores[region]:
            q1[region], median[region], q3[region] = (
                float(q) for q in np.percentile(scores[region], [25, 50, 75])
            )
        else:
            q1[region] = median[region] = q3[region] = None
    return DiceReport(
        n_cases=len(case_scores),
        scores=scores,
        median=median,
        q1=q1,
        q3=q3,
        undefined_count=undefined,
    )


def _fmt(value):
    return "NA" if value is None else repr(float(value))


def write_report_csv(rows, path):
    """Write per-case rows (case_id, region, score-or-None) as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["case_id", "region", "dice"])
        for case_id, region, value in rows:
            writer.writerow([case_id, region, _fmt(value)])


def read_report_csv(path):
    """Read rows written by :func:`write_report_csv`."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["case_id", "region", "dice"]:
            raise ValueError(f"{path}: unexpected report header {header}")
        for case_id, region, value in reader:
            rows.append((case_id, region, None if value == "NA" else float(value)))
    return rows


def write_summary_csv(report: DiceReport, path):
    """Write the per-region summary of a DiceReport as CSV."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region", "median", "q1", "q3", "undefined_count"])
        for region in REGIONS:
            writer.writerow([
                region,
                _fmt(report.median[region]),
                _fmt(report.q1[region]),
                _fmt(report.q3[region]),
                report.undefined_count[region],
            ])


def histogram(rows, bins: int):
    """Bin defined report scores per region over [0, 1].

    Returns (region, bin_lo, bin_hi, count) tuples, the data behind a score
    histogram.  rows are (case_id, region, score-or-None).
    """
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    edges = np.linspace(0.0, 1.0, bins + 1)
    out = []
    for region in REGIONS:
        values = [v for _, r, v in rows if r == region and v is not None]
        counts, _ = np.histogram(values, bins=edges)
        for i in range(bins):
            out.append((region, float(edges[i]), float(edges[i + 1]), int(counts[i])))
    return out


def write_histogram_csv(hist_rows, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["region", "bin_lo", "bin_hi", "count"])
        for region, lo, hi, count in hist_rows:
            writer.writerow([region, repr(lo), repr(hi), count])
