"""Episodic 2D+1 packing environment.

Pieces are rectangles with a physical height; they are placed (never stacked)
on a set of boards, each with a height limit. Coordinates follow one convention
throughout the package: ``x`` indexes rows along the board length, ``y`` indexes
columns along the board width, and a piece of ``length`` L and ``width`` W covers
rows ``x..x+L-1`` and columns ``y..y+W-1``.
"""

from __future__ import annotations

import copy
from fractions import Fraction
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

INVALID_PENALTY = -8.0


class ConfigError(ValueError):
    """Raised for invalid board specs, catalogues or experiment configs."""


class UsageError(RuntimeError):
    """Raised when the environment is driven outside its contract."""


class InfeasiblePieceError(ValueError):
    """Raised when a piece cannot fit on a board at any position."""


@dataclass(frozen=True)
class PieceType:
    id: int
    width: int
    length: int
    height: float
    initial_qty: int
    name: str = ""

    def __post_init__(self):
        if self.width < 1 or self.length < 1:
            raise ConfigError(f"piece {self.id}: footprint must be at least 1x1")
        if not self.height > 0:
            raise ConfigError(f"piece {self.id}: height must be positive")
        if self.initial_qty < 0:
            raise ConfigError(f"piece {self.id}: quantity must be nonnegative")

    @property
    def area(self) -> int:
        return self.width * self.length

    @property
    def label(self) -> str:
        return self.name or f"P{self.id + 1}"


@dataclass(frozen=True)
class BoardSpec:
    width: int
    length: int
    height_limit: float

    def __post_init__(self):
        if self.width < 1 or self.length < 1:
            raise ConfigError("board dimensions must be at least 1x1")
        if not self.height_limit > 0:
            raise ConfigError("board height limit must be positive")

    @property
    def cells(self) -> int:
        return self.width * self.length


@dataclass
class BoardState:
    """Occupancy grid, accumulated height map and a label grid for rendering."""

    occupancy: np.ndarray
    height_map: np.ndarray
    labels: np.ndarray

    @classmethod
    def empty(cls, spec: BoardSpec) -> "BoardState":
        shape = (spec.length, spec.width)
        return cls(
            occupancy=np.zeros(shape, dtype=np.int32),
            height_map=np.zeros(shape, dtype=np.float64),
            labels=np.zeros(shape, dtype=np.int32),
        )

    def copy(self) -> "BoardState":
        return BoardState(self.occupancy.copy(), self.height_map.copy(), self.labels.copy())


class Action(NamedTuple):
    x: int
    y: int
    board: int
    piece: int


class StepResult(NamedTuple):
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


def check_height(piece_h: float, board_h: float) -> int:
    """Height reward for a piece on a board: 0, 1, 2, or -2 when it does not fit.

    The percentage is compared in exact rational arithmetic so that boundary
    cases such as equal heights never depend on rounding.
    """
    scaled = Fraction(piece_h) * 100
    limit = Fraction(board_h)
    if scaled <= 50 * limit:
        return 0
    if scaled <= 80 * limit:
        return 1
    if scaled <= 100 * limit:
        return 2
    return -2


def piece_fits(piece: PieceType, spec: BoardSpec) -> bool:
    return piece.length <= spec.length and piece.width <= spec.width


def clip_coords(x: int, y: int, piece: PieceType, spec: BoardSpec) -> tuple[int, int]:
    """Clamp a top-left corner so the piece footprint lies inside the board."""
    if not piece_fits(piece, spec):
        raise InfeasiblePieceError(
            f"{piece.label} ({piece.length}x{piece.width}) does not fit a "
            f"{spec.length}x{spec.width} board"
        )
    x = min(max(int(x), 0), spec.length - piece.length)
    y = min(max(int(y), 0), spec.width - piece.width)
    return x, y


def board_coverage(board: BoardState) -> float:
    """Percentage of occupied cells."""
    return 100.0 * float(np.count_nonzero(board.occupancy)) / board.occupancy.size


class PackingEnv:
    """Mutable environment state plus the step dynamics.

    A single instance must not be stepped concurrently; use :meth:`clone` to
    branch a state.
    """

    def __init__(self, specs: Sequence[BoardSpec], catalogue: Sequence[PieceType],
                 max_steps: int | None = None):
        specs = tuple(specs)
        catalogue = tuple(catalogue)
        if not specs:
            raise ConfigError("at least one board is required")
        if not catalogue:
            raise ConfigError("the piece catalogue is empty")
        for i, p in enumerate(catalogue):
            if p.id != i:
                raise ConfigError(f"piece ids must be 0..{len(catalogue) - 1} in order")
        self.specs = specs
        self.catalogue = catalogue
        self.initial = np.array([p.initial_qty for p in catalogue], dtype=np.int64)
        if max_steps is None:
            max_steps = 4 * int(self.initial.sum())
        if max_steps < 0:
            raise ConfigError("max_steps must be nonnegative")
        self.max_steps = int(max_steps)
        self.action_sizes = (
            max(s.length for s in specs),
            max(s.width for s in specs),
            len(specs),
            len(catalogue),
        )
        self.obs_size = sum(s.cells for s in specs) + len(catalogue)
        self.reset()

    def reset(self) -> np.ndarray:
        self.boards = [BoardState.empty(s) for s in self.specs]
        self.empty_cells = sum(s.cells for s in self.specs)
        self.remaining = self.initial.copy()
        self.steps_taken = 0
        self.placed = 0
        self.done = False
        return self.observation()

    def clone(self) -> "PackingEnv":
        other = copy.copy(self)
        other.boards = [b.copy() for b in self.boards]
        other.remaining = self.remaining.copy()
        return other

    @property
    def total_pieces(self) -> int:
        return int(self.initial.sum())

    @property
    def placement_rate(self) -> float:
        total = self.total_pieces
        return self.placed / total if total else 1.0

    def coverages(self) -> list[float]:
        return [board_coverage(b) for b in self.boards]

    def observation(self) -> np.ndarray:
        return encode_observation(self)

    def is_terminal(self) -> bool:
        return (self.remaining.sum() == 0 or self.empty_cells == 0
                or self.steps_taken >= self.max_steps)

    def _validate(self, action) -> Action:
        try:
            x, y, b, p = (int(a) for a in action)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"malformed action {action!r}") from exc
        action = Action(x, y, b, p)
        for value, size, name in zip(action, self.action_sizes, Action._fields):
            if not 0 <= value < size:
                raise UsageError(f"action component {name}={value} outside [0, {size})")
        return action

    def step(self, action) -> StepResult:
        if self.done:
            raise UsageError("step() called on a finished episode; call reset()")
        action = self._validate(action)
        raw_xy = (action.x, action.y)

        if self.is_terminal():
            self.done = True
            reward = float(np.mean(self.coverages()))
            info = dict(event="terminal", placement_valid=False, r_height=0, clipped_xy=raw_xy)
            return StepResult(self.observation(), reward, True, info)

        piece = self.catalogue[action.piece]
        spec = self.specs[action.board]
        self.steps_taken += 1

        if self.remaining[action.piece] == 0:
            info = dict(event="exhausted", placement_valid=False, r_height=0, clipped_xy=raw_xy)
            return StepResult(self.observation(), INVALID_PENALTY, False, info)

        r_height = check_height(piece.height, spec.height_limit)
        self.remaining[action.piece] -= 1
        if not piece_fits(piece, spec):
            info = dict(event="infeasible", placement_valid=False, r_height=r_height,
                        clipped_xy=raw_xy)
            return StepResult(self.observation(), INVALID_PENALTY, False, info)

        x, y = clip_coords(action.x, action.y, piece, spec)
        board = self.boards[action.board]
        window = (slice(x, x + piece.length), slice(y, y + piece.width))
        saved = (board.occupancy[window].copy(), board.height_map[window].copy())
        board.occupancy[window] += 1
        board.height_map[window] += piece.height
        overlap = bool((board.occupancy[window] > 1).any())

        if overlap or r_height < 0:
            board.occupancy[window], board.height_map[window] = saved
            event = "overlap" if overlap else "too_tall"
            info = dict(event=event, placement_valid=False, r_height=r_height, clipped_xy=(x, y))
            return StepResult(self.observation(), INVALID_PENALTY, False, info)

        board.labels[window] = piece.id + 1
        self.empty_cells -= piece.area
        self.placed += 1
        info = dict(event="placed", placement_valid=True, r_height=r_height, clipped_xy=(x, y))
        return StepResult(self.observation(), float(piece.area * r_height), False, info)

    def render(self) -> str:
        return render_ascii(self)


def new_env(specs: Sequence[BoardSpec], catalogue: Sequence[PieceType],
            max_steps: int | None = None) -> PackingEnv:
    return PackingEnv(specs, catalogue, max_steps)


def encode_observation(env: PackingEnv) -> np.ndarray:
    """Row-major occupancy of every board followed by remaining/initial per piece type."""
    parts = [b.occupancy.ravel() for b in env.boards]
    fractions = np.divide(env.remaining, env.initial, out=np.zeros(len(env.initial)),
                          where=env.initial > 0)
    parts.append(fractions)
    return np.concatenate(parts).astype(np.float32)


def render_ascii(env: PackingEnv) -> str:
    blocks = []
    for i, (board, spec) in enumerate(zip(env.boards, env.specs)):
        lines = [f"board {i} (h={spec.height_limit:g}, coverage {board_coverage(board):.1f}%)"]
        for row in board.labels:
            lines.append("".join(str(v) if v else "." for v in row))
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


def make_catalogue(sizes: Sequence[tuple[int, int]], heights: Sequence[float],
                   quantities: Sequence[int]) -> tuple[PieceType, ...]:
    """Build a catalogue from (length, width) footprints, heights and quantities."""
    if not len(sizes) == len(heights) == len(quantities):
        raise ConfigError("sizes, heights and quantities must have equal length")
    return tuple(
        PieceType(id=i, length=l, width=w, height=h, initial_qty=q)
        for i, ((l, w), h, q) in enumerate(zip(sizes, heights, quantities))
    )


# footprints (length, width) of P1..P4
CATALOGUE_FOOTPRINTS = ((2, 2), (2, 2), (2, 1), (2, 1))
CATALOGUE_HEIGHTS = (115.0, 75.0, 115.0, 75.0)
