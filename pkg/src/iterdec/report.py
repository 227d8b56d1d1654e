"""Dataset-level evaluation tables.

One row per (model, dataset): mean PSNR / MSE / SSIM / MS-SSIM and the
mean estimated bit rate, always including the non-learned baseline decode
as the first row.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import codec, metrics
from .errors import ParameterError
from .estimator import EstimatorParams
from .refinement import RefinementConfig, reconstruct

BASELINE_NAME = "baseline"


@dataclass
class ReportRow:
    model: str
    dataset: str
    psnr: float
    mse: float
    ssim: float
    ms_ssim: float
    bpp: float


def evaluate(
    models: list[tuple[str, EstimatorParams]],
    images: list[tuple[str, np.ndarray]],
    quality: int,
    dataset: str = "dataset",
    k: int = 3,
    corner: str = "top-left",
) -> list[ReportRow]:
    """Baseline row plus one row per model over the same encodings."""
    if not images:
        raise ParameterError("no images to evaluate")
    codeds = [codec.encode_image(raster, quality) for _, raster in images]
    bpp = float(np.mean([c.estimated_bpp for c in codeds]))

    rows = []
    baseline_records = []
    for (image_id, raster), coded in zip(images, codeds):
        decoded = np.floor(codec.decode_baseline(coded) + 0.5)
        baseline_records.append(metrics.measure(image_id, raster, decoded, coded.estimated_bpp))
    rows.append(_aggregate(BASELINE_NAME, dataset, baseline_records, bpp))

    for name, params in models:
        cfg = RefinementConfig(k=k, d=params.d, corner=corner, kind=params.kind)
        records = []
        for (image_id, raster), coded in zip(images, codeds):
            refined = reconstruct(coded, params, cfg)
            records.append(metrics.measure(image_id, raster, refined.raster_255(), coded.estimated_bpp))
        rows.append(_aggregate(name, dataset, records, bpp))
    return rows


def _aggregate(model: str, dataset: str, records: list[metrics.MetricsRecord], bpp: float) -> ReportRow:
    return ReportRow(
        model=model,
        dataset=dataset,
        psnr=float(np.mean([r.psnr_db for r in records])),
        mse=float(np.mean([r.mse for r in records])),
        ssim=float(np.mean([r.ssim for r in records])),
        ms_ssim=float(np.mean([r.ms_ssim for r in records])),
        bpp=bpp,
    )


REPORT_COLUMNS = ("model", "dataset", "psnr", "mse", "ssim", "ms_ssim", "bpp")


def write_report_csv(rows: list[ReportRow], path, header_comment: str = "") -> None:
    lines = []
    if header_comment:
        lines.append(f"# {header_comment}")
    lines.append(",".join(REPORT_COLUMNS))
    for r in rows:
        lines.append(
            f"{r.model},{r.dataset},{r.psnr:.4f},{r.mse:.4f},{r.ssim:.4f},{r.ms_ssim:.4f},{r.bpp:.4f}"
        )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def format_report_table(rows: list[ReportRow]) -> str:
    """Aligned plain-text table."""
    header = ["Model", "Dataset", "PSNR", "MSE", "SSIM", "MS-SSIM", "bpp"]
    body = [
        [r.model, r.dataset, f"{r.psnr:.4f}", f"{r.mse:.4f}", f"{r.ssim:.4f}", f"{r.ms_ssim:.4f}", f"{r.bpp:.4f}"]
        for r in rows
    ]
    widths = [max(len(header[i]), *(len(b[i]) for b in body)) if body else len(header[i]) for i in range(len(header))]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(header)),
        "  ".join("-" * w for w in widths),
    ]
    for b in body:
        lines.append("  ".join(b[i].ljust(widths[i]) for i in range(len(b))))
    return "\n".join(lines)
