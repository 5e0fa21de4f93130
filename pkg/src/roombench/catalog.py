"""Asset catalog: furniture categories with tag vocabulary, sampleable
dimension ranges, box-composite shape templates, and surface slots for
stacking relations.

Every asset lives in a local frame with the footprint centered at the
origin, the floor at z = 0, and the facing direction along +x. Templates
are expressed as fractions of the sampled (dx, dy, dz) so one shape serves
the whole dimension range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import RoomBenchError
from .geometry import OrientedBox


@dataclass(frozen=True)
class BoxPart:
    """One box of a composite shape, as fractions of the sampled dims.

    offset is the part-center position: x/y relative to the footprint
    center in units of dx/dy, z relative to the floor in units of dz.
    size is the part's full extent in units of the sampled dims.
    """

    offset: tuple[float, float, float]
    size: tuple[float, float, float]

    def to_box(self, dims: tuple[float, float, float]) -> tuple[np.ndarray, np.ndarray]:
        """Local-frame (center, half_extents) for sampled dims."""
        dx, dy, dz = dims
        center = np.array([self.offset[0] * dx, self.offset[1] * dy, self.offset[2] * dz])
        half = np.array([self.size[0] * dx, self.size[1] * dy, self.size[2] * dz]) / 2.0
        return center, half


@dataclass(frozen=True)
class SurfaceSlot:
    """A horizontal rectangle on an asset that can seat stacked children."""

    name: str
    height_fraction: float  # slot plane height in units of dz
    size: tuple[float, float]  # rectangle extent in units of (dx, dy)
    offset: tuple[float, float] = (0.0, 0.0)  # rectangle center in units of (dx, dy)
    clear_height_fraction: float | None = None  # headroom above the plane, units of dz


@dataclass(frozen=True)
class AssetSpec:
    category: str
    tags: frozenset[str]
    dimension_ranges: tuple[tuple[float, float], tuple[float, float], tuple[float, float]]
    parts: tuple[BoxPart, ...]
    surface_slots: tuple[SurfaceSlot, ...] = ()

    def __post_init__(self):
        if not (1 <= len(self.parts) <= 8):
            raise ValueError(f"{self.category}: composite needs 1-8 parts, got {len(self.parts)}")
        for lo, hi in self.dimension_ranges:
            if lo <= 0 or lo > hi:
                raise ValueError(f"{self.category}: bad dimension range [{lo},{hi}]")

    @property
    def top_slot(self) -> SurfaceSlot | None:
        if not self.surface_slots:
            return None
        return max(self.surface_slots, key=lambda s: s.height_fraction)


def _solid() -> tuple[BoxPart, ...]:
    return (BoxPart((0.0, 0.0, 0.5), (1.0, 1.0, 1.0)),)


def _legged_table() -> tuple[BoxPart, ...]:
    top_t = 0.08
    leg_w = 0.08
    leg_off = 0.5 - leg_w / 2.0
    parts = [BoxPart((0.0, 0.0, 1.0 - top_t / 2.0), (1.0, 1.0, top_t))]
    for sx in (-leg_off, leg_off):
        for sy in (-leg_off, leg_off):
            parts.append(BoxPart((sx, sy, (1.0 - top_t) / 2.0), (leg_w, leg_w, 1.0 - top_t)))
    return tuple(parts)


def _chair() -> tuple[BoxPart, ...]:
    seat_h = 0.5  # seat plane as a fraction of chair height
    return (
        BoxPart((0.0, 0.0, seat_h - 0.04), (1.0, 1.0, 0.08)),  # seat slab
        BoxPart((-0.46, 0.0, (1.0 + seat_h) / 2.0), (0.08, 1.0, 1.0 - seat_h)),  # backrest
        BoxPart((0.21, -0.42, seat_h / 2.0 - 0.04), (0.08, 0.08, seat_h - 0.08)),
        BoxPart((0.21, 0.42, seat_h / 2.0 - 0.04), (0.08, 0.08, seat_h - 0.08)),
        BoxPart((-0.42, -0.42, seat_h / 2.0 - 0.04), (0.08, 0.08, seat_h - 0.08)),
        BoxPart((-0.42, 0.42, seat_h / 2.0 - 0.04), (0.08, 0.08, seat_h - 0.08)),
    )


def _sofa() -> tuple[BoxPart, ...]:
    return (
        BoxPart((0.05, 0.0, 0.25), (0.9, 0.8, 0.5)),  # base cushion block
        BoxPart((-0.425, 0.0, 0.5), (0.15, 1.0, 1.0)),  # backrest
        BoxPart((0.075, -0.45, 0.35), (0.85, 0.1, 0.7)),  # armrest
        BoxPart((0.075, 0.45, 0.35), (0.85, 0.1, 0.7)),
    )


def _bed() -> tuple[BoxPart, ...]:
    return (
        BoxPart((0.035, 0.0, 0.35), (0.93, 1.0, 0.7)),  # frame + mattress
        BoxPart((-0.475, 0.0, 0.5), (0.05, 1.0, 1.0)),  # headboard
    )


def _monitor() -> tuple[BoxPart, ...]:
    return (
        BoxPart((0.0, 0.0, 0.075), (0.35, 0.6, 0.15)),  # stand base
        BoxPart((-0.1, 0.0, 0.6), (0.3, 0.08, 0.8)),  # panel (faces +x)
    )


def _bookshelf() -> tuple[BoxPart, ...]:
    side_w = 0.06
    shelf_t = 0.04
    return (
        BoxPart((0.0, -0.5 + side_w / 2.0, 0.5), (1.0, side_w, 1.0)),
        BoxPart((0.0, 0.5 - side_w / 2.0, 0.5), (1.0, side_w, 1.0)),
        BoxPart((-0.5 + 0.03, 0.0, 0.5), (0.06, 1.0, 1.0)),  # back panel
        BoxPart((0.0, 0.0, shelf_t / 2.0), (1.0, 1.0, shelf_t)),
        BoxPart((0.0, 0.0, 0.5), (1.0, 1.0, shelf_t)),
        BoxPart((0.0, 0.0, 1.0 - shelf_t / 2.0), (1.0, 1.0, shelf_t)),
    )


def _lamp() -> tuple[BoxPart, ...]:
    return (
        BoxPart((0.0, 0.0, 0.025), (0.9, 0.9, 0.05)),  # base plate
        BoxPart((0.0, 0.0, 0.45), (0.12, 0.12, 0.8)),  # pole
        BoxPart((0.0, 0.0, 0.925), (1.0, 1.0, 0.15)),  # shade
    )


def _plant() -> tuple[BoxPart, ...]:
    return (
        BoxPart((0.0, 0.0, 0.15), (0.6, 0.6, 0.3)),  # pot
        BoxPart((0.0, 0.0, 0.65), (1.0, 1.0, 0.7)),  # foliage block
    )


def _tv() -> tuple[BoxPart, ...]:
    return (
        BoxPart((0.0, 0.0, 0.05), (0.5, 0.4, 0.1)),  # foot
        BoxPart((-0.05, 0.0, 0.55), (0.5, 1.0, 0.9)),  # panel
    )


_DEFAULT_SPECS: tuple[AssetSpec, ...] = (
    AssetSpec(
        "dining_table", frozenset({"Table", "Surface", "Large"}),
        ((1.4, 2.2), (0.9, 1.2), (0.72, 0.78)), _legged_table(),
        (SurfaceSlot("top", 1.0, (0.95, 0.95)),),
    ),
    AssetSpec(
        "table", frozenset({"Table", "Surface"}),
        ((0.9, 1.6), (0.7, 1.1), (0.70, 0.78)), _legged_table(),
        (SurfaceSlot("top", 1.0, (0.95, 0.95)),),
    ),
    AssetSpec(
        "side_table", frozenset({"Table", "Surface", "Small"}),
        ((0.4, 0.6), (0.4, 0.6), (0.45, 0.6)), _legged_table(),
        (SurfaceSlot("top", 1.0, (0.95, 0.95)),),
    ),
    AssetSpec(
        "desk", frozenset({"Table", "Surface", "Workspace"}),
        ((1.1, 1.8), (0.55, 0.8), (0.72, 0.76)),
        (
            BoxPart((0.0, 0.0, 0.96), (1.0, 1.0, 0.08)),
            BoxPart((0.0, -0.47, 0.46), (0.9, 0.06, 0.92)),
            BoxPart((0.0, 0.47, 0.46), (0.9, 0.06, 0.92)),
        ),
        (SurfaceSlot("top", 1.0, (0.96, 0.96)),),
    ),
    AssetSpec(
        "chair", frozenset({"Seating"}),
        ((0.45, 0.55), (0.45, 0.55), (0.82, 0.95)), _chair(),
    ),
    AssetSpec(
        "stool", frozenset({"Seating", "Small"}),
        ((0.35, 0.45), (0.35, 0.45), (0.45, 0.55)), _solid(),
    ),
    AssetSpec(
        "armchair", frozenset({"Seating", "Large"}),
        ((0.75, 0.95), (0.75, 0.9), (0.7, 0.9)), _sofa(),
    ),
    AssetSpec(
        "sofa", frozenset({"Seating", "Large"}),
        ((1.6, 2.2), (0.85, 1.0), (0.7, 0.85)), _sofa(),
    ),
    AssetSpec(
        "bed", frozenset({"Large"}),
        ((1.9, 2.1), (1.4, 1.8), (0.85, 1.1)), _bed(),
    ),
    AssetSpec(
        "wardrobe", frozenset({"Storage", "Large", "Tall"}),
        ((0.9, 1.5), (0.55, 0.65), (1.8, 2.2)), _solid(),
    ),
    AssetSpec(
        "bookshelf", frozenset({"Storage", "Tall", "Surface"}),
        ((0.7, 1.1), (0.28, 0.38), (1.4, 2.0)), _bookshelf(),
        (
            SurfaceSlot("top", 1.0, (0.9, 0.85)),
            SurfaceSlot("shelf", 0.5 + 0.02, (0.8, 0.8), (0.04, 0.0), clear_height_fraction=0.44),
        ),
    ),
    AssetSpec(
        "cabinet", frozenset({"Storage", "Surface"}),
        ((0.8, 1.2), (0.4, 0.55), (0.8, 1.1)), _solid(),
        (SurfaceSlot("top", 1.0, (0.95, 0.9)),),
    ),
    AssetSpec(
        "dresser", frozenset({"Storage", "Surface"}),
        ((1.0, 1.4), (0.45, 0.55), (0.75, 0.95)), _solid(),
        (SurfaceSlot("top", 1.0, (0.95, 0.9)),),
    ),
    AssetSpec(
        "nightstand", frozenset({"Storage", "Surface", "Small"}),
        ((0.4, 0.55), (0.35, 0.5), (0.45, 0.6)), _solid(),
        (SurfaceSlot("top", 1.0, (0.95, 0.9)),),
    ),
    AssetSpec(
        "tv_stand", frozenset({"Storage", "Surface"}),
        ((1.1, 1.7), (0.35, 0.45), (0.4, 0.55)), _solid(),
        (SurfaceSlot("top", 1.0, (0.97, 0.95)),),
    ),
    AssetSpec(
        "monitor", frozenset({"Electronics", "Small"}),
        ((0.14, 0.2), (0.52, 0.66), (0.42, 0.52)), _monitor(),
    ),
    AssetSpec(
        "tv", frozenset({"Electronics"}),
        ((0.18, 0.25), (0.95, 1.3), (0.55, 0.8)), _tv(),
    ),
    AssetSpec(
        "keyboard", frozenset({"Electronics", "Small"}),
        ((0.13, 0.17), (0.36, 0.46), (0.03, 0.04)), _solid(),
    ),
    AssetSpec(
        "laptop", frozenset({"Electronics", "Small"}),
        ((0.22, 0.26), (0.3, 0.36), (0.02, 0.03)), _solid(),
    ),
    AssetSpec(
        "lamp", frozenset({"Lighting"}),
        ((0.3, 0.4), (0.3, 0.4), (1.3, 1.7)), _lamp(),
    ),
    AssetSpec(
        "plant", frozenset({"Decor"}),
        ((0.3, 0.5), (0.3, 0.5), (0.8, 1.5)), _plant(),
    ),
    AssetSpec(
        "mirror", frozenset({"Decor", "Tall"}),
        ((0.05, 0.08), (0.4, 0.6), (1.5, 1.8)), _solid(),
    ),
    AssetSpec(
        "vase", frozenset({"Decor", "Small"}),
        ((0.1, 0.16), (0.1, 0.16), (0.2, 0.4)), _solid(),
    ),
    AssetSpec(
        "cup", frozenset({"Tableware", "Small"}),
        ((0.07, 0.1), (0.07, 0.1), (0.09, 0.12)), _solid(),
    ),
    AssetSpec(
        "plate", frozenset({"Tableware", "Small"}),
        ((0.2, 0.28), (0.2, 0.28), (0.02, 0.03)), _solid(),
    ),
    AssetSpec(
        "book", frozenset({"Decor", "Small"}),
        ((0.15, 0.24), (0.11, 0.17), (0.03, 0.06)), _solid(),
    ),
)


class AssetCatalog:
    """Immutable category registry with the tag vocabulary derived from it."""

    def __init__(self, specs: tuple[AssetSpec, ...] = _DEFAULT_SPECS):
        self.entries: dict[str, AssetSpec] = {}
        for spec in specs:
            if spec.category in self.entries:
                raise RoomBenchError(f"duplicate catalog category {spec.category!r}")
            self.entries[spec.category] = spec
        self.categories = frozenset(self.entries)
        self.tags = frozenset(tag for spec in specs for tag in spec.tags)

    def __contains__(self, category: str) -> bool:
        return category in self.entries

    def get(self, category: str) -> AssetSpec:
        try:
            return self.entries[category]
        except KeyError:
            raise RoomBenchError(f"unknown asset category {category!r}") from None

    def knows_name(self, name: str) -> bool:
        return name in self.categories or name in self.tags

    def matching_categories(self, category: str, tags: frozenset[str]) -> list[str]:
        """Categories matched by a (category-or-'any', required-tags) pair, sorted."""
        out = []
        for name, spec in self.entries.items():
            if category != "any" and name != category:
                continue
            if tags and not tags <= spec.tags:
                continue
            out.append(name)
        return sorted(out)

    def dimension_ranges(
        self,
        category: str,
        overrides: dict[str, tuple[tuple[float, float], ...]] | None = None,
    ) -> tuple[tuple[float, float], ...]:
        ranges = self.get(category).dimension_ranges
        if overrides and category in overrides:
            ranges = overrides[category]
        return ranges

    def sample_dims(
        self,
        rng: np.random.Generator,
        category: str,
        overrides: dict[str, tuple[tuple[float, float], ...]] | None = None,
    ) -> tuple[float, float, float]:
        ranges = self.dimension_ranges(category, overrides)
        return tuple(float(rng.uniform(lo, hi)) for lo, hi in ranges)


_default: AssetCatalog | None = None


def default_catalog() -> AssetCatalog:
    global _default
    if _default is None:
        _default = AssetCatalog()
    return _default


def part_world_boxes(
    spec: AssetSpec,
    dims: tuple[float, float, float],
    x: float,
    y: float,
    z: float,
    yaw: float,
) -> list[OrientedBox]:
    """Composite part boxes in world coordinates for a posed instance."""
    c, s = math.cos(yaw), math.sin(yaw)
    boxes = []
    for part in spec.parts:
        center, half = part.to_box(dims)
        wx = x + center[0] * c - center[1] * s
        wy = y + center[0] * s + center[1] * c
        boxes.append(OrientedBox((wx, wy, float(z + center[2])), (float(half[0]), float(half[1]), float(half[2])), yaw))
    return boxes
