"""Line-oriented text format for grid fields.

The first line is a 9-field header::

    METAPHASE-GRID 1 nx ny x0 y0 hx hy quantity

followed by ``nx`` lines of ``ny`` values each (row ``i`` holds
``values[i, :]``).  Floats are written with ``repr`` so a write/read round
trip is exact; ``nan`` marks nodes without a value.
"""

from __future__ import annotations

import numpy as np

from ..errors import FormatError
from ..grid import Grid, GridField

TAG = "METAPHASE-GRID"
VERSION = 1


def format_grid(field: GridField) -> str:
    g = field.grid
    head = [TAG, str(VERSION), str(g.nx), str(g.ny), repr(float(g.x0)), repr(float(g.y0)),
            repr(float(g.hx)), repr(float(g.hy)), field.quantity]
    lines = [" ".join(head)]
    for row in field.values:
        lines.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def write_grid(path, field: GridField) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_grid(field))


def parse_grid(text: str, source: str = "<grid>", quantity: str | None = None) -> GridField:
    """Inverse of :func:`format_grid`.

    Raises
    ------
    FormatError
        On a bad header, a value count that does not match ``nx * ny``,
        an unparsable number, or a quantity other than ``quantity``.
    """
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"{source}: empty file")
    head = lines[0].split()
    if len(head) != 9:
        raise FormatError(f"{source}: header must have 9 fields, found {len(head)}")
    if head[0] != TAG:
        raise FormatError(f"{source}: expected tag {TAG}, found {head[0]!r}")
    if head[1] != str(VERSION):
        raise FormatError(f"{source}: unsupported version {head[1]!r}")
    try:
        nx, ny = int(head[2]), int(head[3])
        x0, y0, hx, hy = map(float, head[4:8])
    except ValueError:
        raise FormatError(f"{source}: malformed header numbers") from None
    try:
        grid = Grid(nx, ny, x0, y0, hx, hy)
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}") from None
    if quantity is not None and head[8] != quantity:
        raise FormatError(f"{source}: expected quantity {quantity!r}, found {head[8]!r}")
    tokens = " ".join(lines[1:]).split()
    if len(tokens) != nx * ny:
        raise FormatError(f"{source}: expected {nx * ny} values ({nx} x {ny}), found {len(tokens)}")
    try:
        vals = np.array([float(t) for t in tokens]).reshape(nx, ny)
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}") from None
    return GridField(grid, vals, head[8])


def read_grid(path, quantity: str | None = None) -> GridField:
    with open(path, encoding="utf-8") as fh:
        return parse_grid(fh.read(), str(path), quantity)
