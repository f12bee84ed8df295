"""Scalar-field rasters: CSV ingestion, synthetic fields, down-sampling, output.

Grid indices are the coordinate system: a point ``(r, c)`` is row ``r``,
column ``c`` of the fine grid. Masked cells stand for land or missing data.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, FieldFormatError


@dataclass(frozen=True, eq=False)
class FieldRaster:
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.ndim != 2 or values.shape != mask.shape:
            raise ContractError(f"values {values.shape} and mask {mask.shape} must be equal 2-D shapes")
        if not np.all(np.isfinite(values[~mask])):
            raise ContractError("unmasked values must be finite")
        values = np.where(mask, np.nan, values)
        values.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_array(cls, values, mask=None):
        values = np.asarray(values, dtype=float)
        if mask is None:
            mask = ~np.isfinite(values)
        return cls(values, mask)

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def cols(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def ocean_cells(self):
        """``(k, 2)`` integer array of unmasked ``(row, col)`` indices, row-major."""
        return np.argwhere(~self.mask)

    def is_ocean(self, point):
        r, c = (int(round(v)) for v in point)
        return 0 <= r < self.rows and 0 <= c < self.cols and not self.mask[r, c]

    def sample(self, point):
        r, c = (int(round(v)) for v in point)
        if not (0 <= r < self.rows and 0 <= c < self.cols) or self.mask[r, c]:
            raise ContractError(f"cell {(r, c)} is outside the field or masked")
        return float(self.values[r, c])

    def __eq__(self, other):
        if not isinstance(other, FieldRaster):
            return NotImplemented
        return (self.shape == other.shape and np.array_equal(self.mask, other.mask)
                and np.array_equal(self.values[~self.mask], other.values[~other.mask]))


def _parse_cell(text):
    text = text.strip()
    if not text:
        return np.nan
    try:
        v = float(text)
    except ValueError:
        return np.nan
    return v if np.isfinite(v) else np.nan


def load_csv(path):
    """Read a rectangular numeric CSV; blank or non-numeric cells are masked."""
    with open(path, encoding="utf-8", newline="") as fh:
        text = fh.read()
    if not text.strip():
        raise FieldFormatError(f"{path}: empty file")
    lines = [ln.rstrip("\r") for ln in text.split("\n")]
    if lines[-1] == "":
        lines.pop()
    # in a single-column file a blank line is a masked cell, so keep them
    if lines[0].count(",") > 0:
        while lines and not lines[-1].strip():
            lines.pop()
    rows = []
    width = None
    for lineno, line in enumerate(lines, start=1):
        fields = line.split(",")
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise FieldFormatError(
                f"{path}: row {lineno} has {len(fields)} fields, expected {width}")
        rows.append([_parse_cell(f) for f in fields])
    values = np.array(rows, dtype=float)
    return FieldRaster(values, np.isnan(values))


def _normalize(v):
    lo, hi = v.min(), v.max()
    return (v - lo) / (hi - lo) if hi > lo else np.zeros_like(v)


def synth_field(rows, cols, seed, kind="gaussian_blobs"):
    """Smooth synthetic field on ``rows x cols`` cells, normalized to ``[0, 1]``.

    ``gaussian_blobs`` sums 3-6 random isotropic bumps; ``smooth_gradient`` is
    a random tilted plane plus one bump.
    """
    if rows < 2 or cols < 2:
        raise ContractError("synthetic fields need at least 2x2 cells")
    rng = np.random.default_rng([seed, 0x5F1E1D])
    r, c = np.mgrid[0:rows, 0:cols].astype(float)
    size = min(rows, cols)

    def bump():
        r0, c0 = rng.uniform(0, rows), rng.uniform(0, cols)
        width = rng.uniform(0.08, 0.2) * size
        amp = rng.uniform(0.5, 1.0)
        return amp * np.exp(-0.5 * ((r - r0) ** 2 + (c - c0) ** 2) / width**2)

    if kind == "gaussian_blobs":
        v = sum(bump() for _ in range(int(rng.integers(3, 7))))
    elif kind == "smooth_gradient":
        theta = rng.uniform(0, 2 * np.pi)
        plane = (np.cos(theta) * r / rows + np.sin(theta) * c / cols)
        v = plane + 0.5 * bump()
    else:
        raise ContractError(f"unknown synthetic field kind {kind!r}")
    return FieldRaster(_normalize(v), np.zeros((rows, cols), dtype=bool))


def block_edges(n, k):
    """Integer edges splitting ``n`` cells into ``k`` near-equal blocks."""
    return np.linspace(0, n, k + 1).round().astype(int)


def downsample(f, rows, cols):
    """Block mean over unmasked cells; a block is masked iff fully masked."""
    if rows > f.rows or cols > f.cols or rows < 1 or cols < 1:
        raise ContractError(f"cannot downsample {f.shape} to {(rows, cols)}")
    re, ce = block_edges(f.rows, rows), block_edges(f.cols, cols)
    out = np.full((rows, cols), np.nan)
    filled = np.where(f.mask, 0.0, f.values)
    for i in range(rows):
        for j in range(cols):
            blk = (slice(re[i], re[i + 1]), slice(ce[j], ce[j + 1]))
            n = np.count_nonzero(~f.mask[blk])
            if n:
                out[i, j] = filled[blk].sum() / n
    return FieldRaster(out, np.isnan(out))


def _pgm_bytes(f):
    data = np.zeros(f.shape, dtype=np.uint8)
    ocean = ~f.mask
    if ocean.any():
        v = f.values[ocean]
        lo, hi = v.min(), v.max()
        if hi > lo:
            data[ocean] = np.round((v - lo) / (hi - lo) * 255).astype(np.uint8)
        else:
            data[ocean] = 128
    header = f"P5\n{f.cols} {f.rows}\n255\n".encode("ascii")
    return header + data.tobytes()


def write_raster(f, path, format="csv"):
    """Write ``f`` as CSV (masked cells empty) or 8-bit binary PGM."""
    if format == "csv":
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for i in range(f.rows):
                fh.write(",".join("" if f.mask[i, j] else repr(float(f.values[i, j]))
                                  for j in range(f.cols)))
                fh.write("\n")
    elif format == "pgm":
        with open(path, "wb") as fh:
            fh.write(_pgm_bytes(f))
    else:
        raise ContractError(f"unknown raster format {format!r}")


def read_pgm(path):
    """Minimal P5 reader, used to inspect written maps."""
    with open(path, "rb") as fh:
        raw = fh.read()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while raw[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while end < len(raw) and not raw[end:end + 1].isspace():
            end += 1
        tokens.append(raw[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise FieldFormatError(f"{path}: not a binary PGM")
    w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise FieldFormatError(f"{path}: unsupported maxval {maxval}")
    # exactly one whitespace byte separates the header from the raster
    data = raw[pos + 1: pos + 1 + w * h]
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w)
