"""Board grid: tile types, invariant checks, and the text wire format."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np


class TileType(IntEnum):
    NEUTRAL = 0
    SLOW = 1
    BLOCK = 2
    HOME = 3
    SOURCE = 4
    DEFENDER = 5


TILE_CHARS = ".s#HSD"
_CHAR_TO_TILE = {c: TileType(i) for i, c in enumerate(TILE_CHARS)}

# tiles attackers can walk on
PASSABLE = (TileType.NEUTRAL, TileType.SLOW, TileType.HOME, TileType.SOURCE)

MIN_DIM = 6


class BoardFormatError(ValueError):
    pass


@dataclass
class Board:
    width: int
    height: int
    tiles: np.ndarray = field(repr=False)  # int8 (H, W)

    @classmethod
    def from_grid(cls, tiles):
        tiles = np.asarray(tiles, dtype=np.int8)
        h, w = tiles.shape
        return cls(width=w, height=h, tiles=tiles)

    @classmethod
    def empty(cls, width, height):
        return cls(width=width, height=height,
                   tiles=np.zeros((height, width), dtype=np.int8))

    def copy(self):
        return Board(self.width, self.height, self.tiles.copy())

    def __eq__(self, other):
        return (isinstance(other, Board) and self.width == other.width
                and self.height == other.height and np.array_equal(self.tiles, other.tiles))

    def key(self):
        """Hashable identity for deduplication."""
        return (self.width, self.height, self.tiles.tobytes())

    # ------------------------------------------------------------ queries

    def positions(self, tile_type):
        ys, xs = np.nonzero(self.tiles == int(tile_type))
        return [(int(x), int(y)) for x, y in zip(xs, ys)]

    def home(self):
        homes = self.positions(TileType.HOME)
        if len(homes) != 1:
            raise ValueError(f"board has {len(homes)} home tiles")
        return homes[0]

    def sources(self):
        return self.positions(TileType.SOURCE)

    def violations(self):
        """Named invariant violations; empty list means a valid board."""
        out = []
        if self.width < MIN_DIM or self.height < MIN_DIM:
            out.append(f"board too small: {self.width}x{self.height} (min {MIN_DIM})")
        n_home = int((self.tiles == int(TileType.HOME)).sum())
        if n_home == 0:
            out.append("no home tile")
        elif n_home > 1:
            out.append("multiple home tiles")
        n_src = int((self.tiles == int(TileType.SOURCE)).sum())
        if not 1 <= n_src <= 4:
            out.append(f"source count {n_src} outside 1..4")
        return out

    # ------------------------------------------------------------ text format

    def to_text(self):
        lines = [f"{self.width} {self.height}"]
        for row in self.tiles:
            lines.append("".join(TILE_CHARS[t] for t in row))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        lines = text.splitlines()
        if not lines:
            raise BoardFormatError("empty board text")
        head = lines[0].split()
        if len(head) != 2:
            raise BoardFormatError(f"bad header line {lines[0]!r}, expected 'W H'")
        try:
            w, h = int(head[0]), int(head[1])
        except ValueError:
            raise BoardFormatError(f"non-integer dimensions in {lines[0]!r}") from None
        if len(lines) < 1 + h:
            raise BoardFormatError(f"expected {h} rows, got {len(lines) - 1}")
        tiles = np.zeros((h, w), dtype=np.int8)
        for y in range(h):
            row = lines[1 + y]
            if len(row) != w:
                raise BoardFormatError(f"row {y + 1} has width {len(row)}, expected {w}")
            for x, ch in enumerate(row):
                try:
                    tiles[y, x] = int(_CHAR_TO_TILE[ch])
                except KeyError:
                    raise BoardFormatError(
                        f"unknown tile {ch!r} at row {y + 1}, column {x + 1}") from None
        return cls(width=w, height=h, tiles=tiles)


def read_boards(text):
    """Parse a stream of concatenated board texts separated by blank lines."""
    boards = []
    chunk = []
    for line in text.splitlines():
        if line.strip():
            chunk.append(line)
        elif chunk:
            boards.append(Board.from_text("\n".join(chunk)))
            chunk = []
    if chunk:
        boards.append(Board.from_text("\n".join(chunk)))
    return boards


def write_boards(boards):
    return "\n".join(b.to_text() for b in boards)
