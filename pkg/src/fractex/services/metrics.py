"""Segmentation scores: Dice, percentile Hausdorff distance, NMSE and region reports."""

import math

import numpy as np
from scipy import ndimage

from fractex.errors import DataError, NumericalError, ParameterError, StructureError
from fractex.models.report import REGIONS, SUMMARY_ROWS, CaseReport, EvalReport, RegionScores
from fractex.models.volume import Volume

BRATS_LABELS = frozenset({0, 1, 2, 4})


def _array(x: Volume | np.ndarray) -> np.ndarray:
    if isinstance(x, Volume):
        return x.data[0] if x.channels == 1 else x.data
    return np.asarray(x)


def _pair(pred: Volume | np.ndarray, gt: Volume | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a, b = _array(pred), _array(gt)
    if a.shape != b.shape:
        raise StructureError(f"prediction shape {a.shape} does not match ground truth {b.shape}")
    return a, b


def dice(pred: Volume | np.ndarray, gt: Volume | np.ndarray) -> float:
    """``2TP / (FP + 2TP + FN)``; two empty masks score 1.0."""
    a, b = _pair(pred, gt)
    a, b = a.astype(bool), b.astype(bool)
    tp = int(np.count_nonzero(a & b))
    fp = int(np.count_nonzero(a & ~b))
    fn = int(np.count_nonzero(~a & b))
    if tp + fp + fn == 0:
        return 1.0
    return 2.0 * tp / (fp + 2.0 * tp + fn)


def boundary(mask: np.ndarray) -> np.ndarray:
    """Foreground voxels with a face-connected background neighbour or on the image edge."""
    mask = mask.astype(bool)
    structure = ndimage.generate_binary_structure(mask.ndim, 1)
    eroded = ndimage.binary_erosion(mask, structure=structure, border_value=0)
    return mask & ~eroded


def _spacing(spacing: tuple[float, ...] | None, ndim: int) -> tuple[float, ...]:
    spacing = tuple(float(s) for s in spacing) if spacing else (1.0,) * ndim
    if len(spacing) != ndim or any(s <= 0 for s in spacing):
        raise ParameterError(f"spacing must hold {ndim} positive values, got {spacing}")
    return spacing


def diagonal(shape: tuple[int, ...], spacing: tuple[float, ...]) -> float:
    """Penalty distance when exactly one mask is empty."""
    return math.sqrt(sum((n * s) ** 2 for n, s in zip(shape, spacing, strict=True)))


def surface_distances(source: np.ndarray, target: np.ndarray, spacing: tuple[float, ...]) -> np.ndarray:
    """Distance from every boundary voxel of ``source`` to the nearest boundary voxel of ``target``."""
    field = ndimage.distance_transform_edt(~boundary(target), sampling=spacing)
    return field[boundary(source)]


def hausdorff(
    pred: Volume | np.ndarray,
    gt: Volume | np.ndarray,
    spacing: tuple[float, ...] | None = None,
    percentile: float = 95.0,
) -> float:
    """Percentile of the concatenated boundary distances in both directions.

    ``percentile=100`` is the classical Hausdorff distance.
    """
    a, b = _pair(pred, gt)
    a, b = a.astype(bool), b.astype(bool)
    spacing = _spacing(spacing, a.ndim)
    empty_a, empty_b = not a.any(), not b.any()
    if empty_a and empty_b:
        return 0.0
    if empty_a or empty_b:
        return diagonal(a.shape, spacing)
    distances = np.concatenate([surface_distances(a, b, spacing), surface_distances(b, a, spacing)])
    return float(np.percentile(distances, percentile))


def hd95(pred: Volume | np.ndarray, gt: Volume | np.ndarray, spacing: tuple[float, ...] | None = None) -> float:
    return hausdorff(pred, gt, spacing, 95.0)


def nmse(recon: Volume | np.ndarray, gt: Volume | np.ndarray) -> float:
    """``sum((gt - recon)**2) / sum(gt**2)``."""
    a, b = _pair(recon, gt)
    a, b = a.astype(np.float64), b.astype(np.float64)
    energy = float(np.sum(b**2))
    if energy == 0.0:
        raise NumericalError("ground truth is identically zero; NMSE is undefined")
    return float(np.sum((b - a) ** 2)) / energy


def region_masks(labels: np.ndarray) -> dict[str, np.ndarray]:
    """WT / TC / ET masks from a BraTS label map."""
    unique = np.unique(labels)
    fractional = unique[unique != np.floor(unique)]
    if fractional.size:
        raise DataError(f"label values must be integers, got {fractional[:5].tolist()}", field="labels")
    values = set(unique.astype(int).tolist())
    unknown = values - BRATS_LABELS
    if unknown:
        raise DataError(
            f"unknown label values {sorted(unknown)}; expected a subset of {sorted(BRATS_LABELS)}", field="labels"
        )
    return {str(region.name): np.isin(labels, sorted(region.labels)) for region in REGIONS}


def region_report(
    pred_labels: Volume | np.ndarray,
    gt_labels: Volume | np.ndarray,
    spacing: tuple[float, ...] | None = None,
    case_id: str = "case",
    recon: Volume | np.ndarray | None = None,
    reference: Volume | np.ndarray | None = None,
) -> EvalReport:
    """Dice and HD95 for every region of one case; NMSE when a reconstruction pair is given."""
    pred, gt = _pair(pred_labels, gt_labels)
    if spacing is None and isinstance(gt_labels, Volume):
        spacing = gt_labels.spacing
    pred_masks, gt_masks = region_masks(pred), region_masks(gt)
    regions = {
        name: RegionScores(
            dice=dice(pred_masks[name], gt_masks[name]),
            hd95=hd95(pred_masks[name], gt_masks[name], spacing),
        )
        for name in gt_masks
    }
    error = nmse(recon, reference) if recon is not None and reference is not None else None
    return EvalReport(cases=[CaseReport(case_id=case_id, regions=regions, nmse=error)])


def foreground_dice(pred_labels: Volume | np.ndarray, gt_labels: Volume | np.ndarray) -> float:
    """Dice of ``labels > 0`` for binary tasks."""
    pred, gt = _pair(pred_labels, gt_labels)
    return dice(pred > 0, gt > 0)


def summary_statistics(values: list[float]) -> dict[str, float]:
    arr = np.asarray(values, dtype=np.float64)
    return {
        "mean": float(arr.mean()),
        "sd": float(arr.std(ddof=1)) if arr.size > 1 else 0.0,
        "median": float(np.percentile(arr, 50)),
        "25quantile": float(np.percentile(arr, 25)),
        "75quantile": float(np.percentile(arr, 75)),
    }


def summarize(reports: list[EvalReport]) -> EvalReport:
    """All cases of ``reports`` plus mean / sd / median / quartile rows per metric column."""
    cases = [case for report in reports for case in report.cases]
    if not cases:
        raise ParameterError("summarize needs at least one case")
    columns = list(cases[0].metric_values())
    columns = [c for c in columns if all(c in case.metric_values() for case in cases)]
    summary: dict[str, dict[str, float]] = {row: {} for row in SUMMARY_ROWS}
    for column in columns:
        stats = summary_statistics([case.metric_values()[column] for case in cases])
        for row in SUMMARY_ROWS:
            summary[row][column] = stats[row]
    return EvalReport(cases=cases, summary=summary)
