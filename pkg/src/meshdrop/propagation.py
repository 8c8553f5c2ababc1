"""First-order radio propagation: log-distance path loss, SNR prediction,
Shannon capacity, model fitting, and connectivity grids.

All functions here are pure; they share no mutable state and are safe to
call concurrently.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

HEADER_DISTANCE = "distance_m"
HEADER_PATH_LOSS = "path_loss_db"


class DegenerateFitError(ValueError):
    """Raised when a path-loss fit has no slope information."""


@dataclass(frozen=True)
class PathLossModel:
    """Log-distance attenuation model: loss(d) = pl_d0 + eta * 10 * log10(d / d0)."""

    pl_d0: float = 34.0
    eta: float = 3.83
    d0: float = 1.0

    def __post_init__(self) -> None:
        if self.d0 <= 0:
            raise ValueError(f"d0 must be > 0, got {self.d0}")
        if self.eta <= 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if self.pl_d0 < 0:
            raise ValueError(f"pl_d0 must be >= 0, got {self.pl_d0}")


@dataclass(frozen=True)
class RadioSpec:
    """A deployed or carried radio: position, transmit power, receiver noise term, bandwidth."""

    id: str
    position: tuple[float, float, float]
    tx_power: float  # dBm
    noise_level: float  # dB, signed; used verbatim in the SNR budget
    bandwidth: float  # Hz

    def __post_init__(self) -> None:
        if self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be > 0, got {self.bandwidth}")


@dataclass(frozen=True)
class SnrSample:
    """One field measurement: observed path loss at a known distance."""

    distance: float  # meters
    observed_path_loss: float  # dB

    def __post_init__(self) -> None:
        if self.distance <= 0:
            raise ValueError(f"distance must be > 0, got {self.distance}")


@dataclass
class ConnectivityGrid:
    """Raster of predicted bottleneck SNR (dB, clamped at 0), row-major from the origin corner.

    Cell (row, col) covers the square whose lower-left corner is
    origin + (col, row) * resolution; values are evaluated at cell centers.
    """

    origin: tuple[float, float]
    resolution: float
    width: int
    height: int
    cells: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.resolution <= 0:
            raise ValueError("resolution must be > 0")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("grid must have positive dimensions")
        if self.cells and len(self.cells) != self.width * self.height:
            raise ValueError("cells length must equal width * height")

    def value_at(self, row: int, col: int) -> float:
        return self.cells[row * self.width + col]

    def cell_center(self, row: int, col: int) -> tuple[float, float]:
        return (
            self.origin[0] + (col + 0.5) * self.resolution,
            self.origin[1] + (row + 0.5) * self.resolution,
        )


def path_loss(d: float, model: PathLossModel) -> float:
    """Predicted attenuation in dB at distance d (meters)."""
    if d <= 0:
        raise ValueError(f"distance must be > 0, got {d}")
    return model.pl_d0 + model.eta * 10.0 * math.log10(d / model.d0)


def predict_snr(
    tx: RadioSpec,
    rx_position: Sequence[float],
    rx_noise: float,
    model: PathLossModel,
) -> float:
    """Predicted SNR in dB at rx_position for transmitter tx.

    Budget: tx_power - path_loss(distance) - rx_noise. The noise term is
    applied with its stored sign. May return negative values; callers that
    treat SNR <= 0 as "no comms" clamp at the boundary.
    """
    d = math.dist(tx.position, tuple(rx_position))
    if d <= 0:
        raise ValueError("transmitter and receiver positions coincide")
    return tx.tx_power - path_loss(d, model) - rx_noise


def predict_snr_clamped(
    tx: RadioSpec,
    rx_position: Sequence[float],
    rx_noise: float,
    model: PathLossModel,
) -> float:
    """predict_snr with the distance clamped to the model's reference distance.

    The log-distance model is not meaningful below d0; nodes closer than
    that (including colocated ones) are evaluated as if d0 apart.
    """
    d = max(math.dist(tx.position, tuple(rx_position)), model.d0)
    return tx.tx_power - path_loss(d, model) - rx_noise


def shannon_capacity(bandwidth: float, snr_db: float) -> float:
    """Theoretical channel capacity in bits/second: B * log2(1 + SNR_linear)."""
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be > 0, got {bandwidth}")
    snr_linear = 10.0 ** (snr_db / 10.0)
    return bandwidth * math.log2(1.0 + snr_linear)


def fit_path_loss(samples: Iterable[SnrSample], d0: float) -> PathLossModel:
    """Least-squares fit of the log-distance model to observed samples.

    Regresses observed path loss against 10*log10(d / d0); the slope is the
    path-loss exponent and the intercept is the reference loss at d0.
    """
    if d0 <= 0:
        raise ValueError(f"d0 must be > 0, got {d0}")
    samples = list(samples)
    if len(samples) < 2:
        raise DegenerateFitError("need at least 2 samples")
    distances = {s.distance for s in samples}
    if len(distances) < 2:
        raise DegenerateFitError("need at least 2 distinct distances")

    x = np.array([10.0 * math.log10(s.distance / d0) for s in samples])
    y = np.array([s.observed_path_loss for s in samples])
    eta, pl_d0 = np.polyfit(x, y, 1)
    return PathLossModel(pl_d0=float(pl_d0), eta=float(eta), d0=d0)


def fit_residual_rms(samples: Iterable[SnrSample], model: PathLossModel) -> float:
    """Root-mean-square residual of samples against a fitted model, in dB."""
    residuals = [s.observed_path_loss - path_loss(s.distance, model) for s in samples]
    if not residuals:
        return 0.0
    return math.sqrt(sum(r * r for r in residuals) / len(residuals))


def read_snr_samples(path: str) -> list[SnrSample]:
    """Load samples from a CSV with header ``distance_m,path_loss_db``."""
    out: list[SnrSample] = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or HEADER_DISTANCE not in reader.fieldnames:
            raise ValueError(f"expected CSV header {HEADER_DISTANCE},{HEADER_PATH_LOSS}")
        for row in reader:
            out.append(
                SnrSample(
                    distance=float(row[HEADER_DISTANCE]),
                    observed_path_loss=float(row[HEADER_PATH_LOSS]),
                )
            )
    return out


def build_connectivity_map(
    backbone: Sequence[RadioSpec],
    backbone_bottlenecks: dict[str, float],
    origin: tuple[float, float],
    resolution: float,
    width: int,
    height: int,
    rx_noise: float,
    model: PathLossModel,
) -> ConnectivityGrid:
    """Predicted bottleneck SNR raster over a 2-D grid (evaluated in the z=0 plane).

    Each cell takes the best end-to-end figure over backbone radios: the
    per-radio value is the smaller of that radio's own backbone bottleneck
    and its predicted SNR at the cell center. Negative results clamp to 0.
    """
    if not backbone:
        raise ValueError("backbone must be non-empty")
    for radio in backbone:
        if radio.id not in backbone_bottlenecks:
            raise ValueError(f"missing backbone bottleneck for radio {radio.id!r}")

    grid = ConnectivityGrid(origin=origin, resolution=resolution, width=width, height=height)
    cells: list[float] = []
    for row in range(height):
        for col in range(width):
            cx, cy = grid.cell_center(row, col)
            best = 0.0
            for radio in backbone:
                snr = predict_snr_clamped(radio, (cx, cy, 0.0), rx_noise, model)
                best = max(best, min(backbone_bottlenecks[radio.id], snr))
            cells.append(best)
    grid.cells = cells
    return grid


def grid_to_csv(grid: ConnectivityGrid) -> str:
    """Row-major CSV raster, 2 decimal places, one grid row per line."""
    lines = []
    for row in range(grid.height):
        start = row * grid.width
        lines.append(",".join(f"{v:.2f}" for v in grid.cells[start : start + grid.width]))
    return "\n".join(lines) + "\n"


def _heat_color(value: float, vmax: float) -> str:
    # dark blue -> yellow ramp, saturating at vmax
    t = 0.0 if vmax <= 0 else min(1.0, value / vmax)
    r = int(20 + 235 * t)
    g = int(20 + 215 * t)
    b = int(90 * (1.0 - t) + 40)
    return f"#{r:02x}{g:02x}{b:02x}"


def grid_to_svg(grid: ConnectivityGrid, strong_threshold: float = 20.0, cell_px: int = 8) -> str:
    """SVG heatmap of the grid with a legend bar marking the strong-comms threshold.

    Row 0 is drawn at the bottom so the image matches map coordinates.
    """
    legend_w = 60
    w_px = grid.width * cell_px + legend_w
    h_px = grid.height * cell_px
    vmax = max(max(grid.cells, default=0.0), strong_threshold)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w_px}" height="{h_px}" '
        f'viewBox="0 0 {w_px} {h_px}">'
    ]
    for row in range(grid.height):
        y = (grid.height - 1 - row) * cell_px
        for col in range(grid.width):
            v = grid.value_at(row, col)
            parts.append(
                f'<rect x="{col * cell_px}" y="{y}" width="{cell_px}" height="{cell_px}" '
                f'fill="{_heat_color(v, vmax)}"><title>{v:.2f} dB</title></rect>'
            )
    # legend: vertical gradient bar with a marker at the strong threshold
    bar_x = grid.width * cell_px + 12
    steps = 32
    bar_h = max(h_px - 20, steps)
    for i in range(steps):
        v = vmax * (1.0 - i / (steps - 1))
        parts.append(
            f'<rect x="{bar_x}" y="{10 + i * bar_h / steps:.1f}" width="14" '
            f'height="{bar_h / steps + 0.5:.1f}" fill="{_heat_color(v, vmax)}"/>'
        )
    ty = 10 + bar_h * (1.0 - strong_threshold / vmax)
    parts.append(
        f'<line x1="{bar_x - 3}" y1="{ty:.1f}" x2="{bar_x + 17}" y2="{ty:.1f}" '
        'stroke="black" stroke-width="1.5"/>'
    )
    parts.append(
        f'<text x="{bar_x + 20}" y="{ty + 4:.1f}" font-size="10" font-family="sans-serif">'
        f"{strong_threshold:g} dB strong</text>"
    )
    parts.append(f'<text x="{bar_x + 20}" y="14" font-size="10" font-family="sans-serif">{vmax:.0f}</text>')
    parts.append(f'<text x="{bar_x + 20}" y="{10 + bar_h:.0f}" font-size="10" font-family="sans-serif">0</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
