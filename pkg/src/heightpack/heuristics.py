"""Classical packing baselines: MaxRects bottom-left, BFDH and NFDH.

All heuristics work on the same coordinate convention as :mod:`heightpack.env`
and their placements are replayed through the environment to score them.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .env import BoardSpec, PackingEnv, PieceType, board_coverage, check_height


class FreeRect(tuple):
    """Free rectangle ``(x, y, length, width)``; hashable and ordered."""

    __slots__ = ()

    def __new__(cls, x: int, y: int, length: int, width: int):
        return super().__new__(cls, (x, y, length, width))

    x = property(lambda self: self[0])
    y = property(lambda self: self[1])
    length = property(lambda self: self[2])
    width = property(lambda self: self[3])

    def contains(self, other: "FreeRect") -> bool:
        return (self.x <= other.x and self.y <= other.y
                and other.x + other.length <= self.x + self.length
                and other.y + other.width <= self.y + self.width)

    def intersects(self, other: "FreeRect") -> bool:
        return (self.x < other.x + other.length and other.x < self.x + self.length
                and self.y < other.y + other.width and other.y < self.y + self.width)

    def __repr__(self):
        return f"FreeRect(x={self.x}, y={self.y}, length={self.length}, width={self.width})"


class OrderingStrategy(enum.Enum):
    NONE = "none"
    DESC_HEIGHT_DESC_AREA = "desc-height"
    ASC_HEIGHT_DESC_AREA = "asc-height"

    @classmethod
    def parse(cls, value) -> "OrderingStrategy":
        if isinstance(value, cls):
            return value
        aliases = {
            "none": cls.NONE,
            "desc": cls.DESC_HEIGHT_DESC_AREA,
            "desc-height": cls.DESC_HEIGHT_DESC_AREA,
            "desc_height_desc_area": cls.DESC_HEIGHT_DESC_AREA,
            "asc": cls.ASC_HEIGHT_DESC_AREA,
            "asc-height": cls.ASC_HEIGHT_DESC_AREA,
            "asc_height_desc_area": cls.ASC_HEIGHT_DESC_AREA,
        }
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown ordering strategy {value!r}") from None


@dataclass
class PackingResult:
    method: str
    placements: list[tuple[int, int, int, int]]  # (piece id, board, x, y)
    skipped: list[int]
    coverage: list[float]
    placement_rate: float
    total_reward: float
    rewards: list[float] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps({
            "method": self.method,
            "placements": [list(p) for p in self.placements],
            "skipped": self.skipped,
            "coverage": self.coverage,
            "placement_rate": self.placement_rate,
            "total_reward": self.total_reward,
            "rewards": self.rewards,
        }, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PackingResult":
        d = json.loads(text)
        return cls(
            method=d["method"],
            placements=[tuple(p) for p in d["placements"]],
            skipped=list(d["skipped"]),
            coverage=list(d["coverage"]),
            placement_rate=d["placement_rate"],
            total_reward=d["total_reward"],
            rewards=list(d.get("rewards", [])),
        )

    def records(self) -> Iterable[str]:
        """One text record per placement."""
        for (piece, board, x, y), r in zip(self.placements, self.rewards):
            yield f"piece=P{piece + 1} board={board} x={x} y={y} reward={r:g}"


def order_pieces(catalogue: Sequence[PieceType], quantities: Sequence[int] | None = None,
                 strategy=OrderingStrategy.NONE) -> list[int]:
    """Expand the catalogue into a sequence of piece ids in processing order."""
    strategy = OrderingStrategy.parse(strategy)
    if quantities is None:
        quantities = [p.initial_qty for p in catalogue]
    types = list(catalogue)
    if strategy is OrderingStrategy.DESC_HEIGHT_DESC_AREA:
        types.sort(key=lambda p: (-p.height, -p.area, p.id))
    elif strategy is OrderingStrategy.ASC_HEIGHT_DESC_AREA:
        types.sort(key=lambda p: (p.height, -p.area, p.id))
    return [p.id for p in types for _ in range(quantities[p.id])]


class MaxRects:
    """Free space of one board as the set of maximal empty rectangles."""

    def __init__(self, length: int, width: int):
        self.length = length
        self.width = width
        self.free: set[FreeRect] = {FreeRect(0, 0, length, width)}

    def find_position(self, length: int, width: int) -> tuple[int, int] | None:
        corners = [(r.x, r.y) for r in self.free if r.length >= length and r.width >= width]
        return min(corners) if corners else None

    def place(self, x: int, y: int, length: int, width: int) -> None:
        used = FreeRect(x, y, length, width)
        out: set[FreeRect] = set()
        for r in self.free:
            if not r.intersects(used):
                out.add(r)
                continue
            if used.x > r.x:
                out.add(FreeRect(r.x, r.y, used.x - r.x, r.width))
            if used.x + used.length < r.x + r.length:
                bottom = used.x + used.length
                out.add(FreeRect(bottom, r.y, r.x + r.length - bottom, r.width))
            if used.y > r.y:
                out.add(FreeRect(r.x, r.y, r.length, used.y - r.y))
            if used.y + used.width < r.y + r.width:
                right = used.y + used.width
                out.add(FreeRect(r.x, right, r.length, r.y + r.width - right))
        self.free = _prune(out)

    def insert(self, length: int, width: int) -> tuple[int, int] | None:
        pos = self.find_position(length, width)
        if pos is not None:
            self.place(*pos, length, width)
        return pos


def _prune(rects: set[FreeRect]) -> set[FreeRect]:
    ordered = sorted(rects, key=lambda r: -r.length * r.width)
    kept: list[FreeRect] = []
    for r in ordered:
        if not any(k.contains(r) for k in kept):
            kept.append(r)
    return set(kept)


def maxrects_insert(free: set[FreeRect], piece: PieceType):
    """Bottom-left insertion into a free-rectangle set.

    Returns ``(position, new_free)``; ``position`` is None and the set is
    returned unchanged when the piece fits nowhere.
    """
    packer = MaxRects(0, 0)
    packer.free = set(free)
    pos = packer.insert(piece.length, piece.width)
    return pos, packer.free


def _finish(method: str, specs: Sequence[BoardSpec], catalogue: Sequence[PieceType],
            placements, skipped) -> PackingResult:
    env = PackingEnv(specs, catalogue)
    rewards = []
    for piece, board, x, y in placements:
        result = env.step((x, y, board, piece))
        if not result.info["placement_valid"] or result.info["clipped_xy"] != (x, y):
            raise AssertionError(f"{method}: placement {(piece, board, x, y)} rejected by env")
        rewards.append(result.reward)
    total = sum(q.initial_qty for q in catalogue)
    return PackingResult(
        method=method,
        placements=list(placements),
        skipped=list(skipped),
        coverage=[board_coverage(b) for b in env.boards],
        placement_rate=len(placements) / total if total else 1.0,
        total_reward=float(sum(rewards)),
        rewards=rewards,
    )


def run_maxrect_bl(specs: Sequence[BoardSpec], catalogue: Sequence[PieceType],
                   strategy=OrderingStrategy.NONE, eligible_boards_only: bool = False) -> PackingResult:
    """MaxRects bottom-left over the boards in index order.

    By default a piece goes to the first board with room for its footprint and is
    skipped when that board's height limit rejects it. With
    ``eligible_boards_only`` boards whose limit rejects the piece are passed over.
    """
    strategy = OrderingStrategy.parse(strategy)
    packers = [MaxRects(s.length, s.width) for s in specs]
    placements, skipped = [], []
    for pid in order_pieces(catalogue, None, strategy):
        piece = catalogue[pid]
        for b, (spec, packer) in enumerate(zip(specs, packers)):
            tall = check_height(piece.height, spec.height_limit) < 0
            if tall and eligible_boards_only:
                continue
            pos = packer.find_position(piece.length, piece.width)
            if pos is None:
                continue
            if tall:
                skipped.append(pid)
            else:
                packer.place(*pos, piece.length, piece.width)
                placements.append((pid, b, *pos))
            break
        else:
            skipped.append(pid)
    return _finish(f"maxrect-bl/{strategy.value}", specs, catalogue, placements, skipped)


@dataclass
class _Level:
    x: int
    height: int
    used: int = 0


def _level_order(catalogue: Sequence[PieceType]) -> list[int]:
    types = sorted(catalogue, key=lambda p: (-p.height, -p.length, -p.width, p.id))
    return [p.id for p in types for _ in range(p.initial_qty)]


def _run_levels(specs, catalogue, best_fit: bool) -> tuple[list, list]:
    levels: list[list[_Level]] = [[] for _ in specs]
    placements, skipped = [], []
    for pid in _level_order(catalogue):
        piece = catalogue[pid]
        for b, spec in enumerate(specs):
            if check_height(piece.height, spec.height_limit) < 0:
                continue
            board_levels = levels[b]
            candidates = board_levels if best_fit else board_levels[-1:]
            fitting = [lv for lv in candidates
                       if piece.length <= lv.height and lv.used + piece.width <= spec.width]
            if fitting:
                level = min(fitting, key=lambda lv: spec.width - lv.used)
            else:
                top = board_levels[-1].x + board_levels[-1].height if board_levels else 0
                if top + piece.length > spec.length or piece.width > spec.width:
                    continue
                level = _Level(top, piece.length)
                board_levels.append(level)
            placements.append((pid, b, level.x, level.used))
            level.used += piece.width
            break
        else:
            skipped.append(pid)
    return placements, skipped


def run_bfdh(specs: Sequence[BoardSpec], catalogue: Sequence[PieceType]) -> PackingResult:
    """Best-fit decreasing height: each piece joins the fitting level with least room left."""
    placements, skipped = _run_levels(specs, catalogue, best_fit=True)
    return _finish("bfdh", specs, catalogue, placements, skipped)


def run_nfdh(specs: Sequence[BoardSpec], catalogue: Sequence[PieceType]) -> PackingResult:
    """Next-fit decreasing height: only the newest level of a board accepts pieces."""
    placements, skipped = _run_levels(specs, catalogue, best_fit=False)
    return _finish("nfdh", specs, catalogue, placements, skipped)


def replay(specs: Sequence[BoardSpec], catalogue: Sequence[PieceType], placements):
    """Step the environment through placements; returns the env and the step results."""
    env = PackingEnv(specs, catalogue)
    results = [env.step((x, y, board, piece)) for piece, board, x, y in placements]
    return env, results


HEURISTICS = {
    "maxrect-bl": run_maxrect_bl,
    "bfdh": run_bfdh,
    "nfdh": run_nfdh,
}
