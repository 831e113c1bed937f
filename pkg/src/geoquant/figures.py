"""Data-generating settings behind the reference contour figures."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measure import (DiscreteMeasure, Gaussian, Mixture, PointMass, UniformSegment,
                      UniformTriangle, from_points, sample)

EXTREME_LEVELS = (0.9, 0.95, 0.99, 0.995)
CENTRAL_LEVELS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
TRIANGLE_LEVELS = (0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99)
CONTINUOUS_LEVELS = (0.25, 0.3, 0.4, 0.5, 0.6, 0.7, 0.75, 0.8, 0.9, 0.95, 0.99)
SAMPLE_SIZE = 1000

_HORIZONTAL = UniformSegment((-1.0, 0.0), (1.0, 0.0))


def _segment_panels():
    return [
        Mixture(((0.5, _HORIZONTAL), (0.5, UniformSegment((0.0, -1.0), (0.0, 1.0))))),
        Mixture(((0.5, _HORIZONTAL), (0.5, UniformSegment((0.0, -0.5), (0.0, 0.5))))),
        Mixture(((0.5, _HORIZONTAL), (0.5, UniformSegment((0.0, -0.05), (0.0, 0.05))))),
        Mixture(((0.5, _HORIZONTAL), (0.5, PointMass((0.0, 0.0))))),
    ]


def _dirac_panels():
    return [
        Mixture(((0.5, _HORIZONTAL), (0.5, PointMass((0.0, 1.0))))),
        Mixture(((2.0 / 3.0, _HORIZONTAL), (1.0 / 3.0, PointMass((0.0, 2.0 / 3.0))))),
        Mixture(((5.0 / 6.0, _HORIZONTAL), (1.0 / 6.0, PointMass((0.0, 1.0 / 3.0))))),
        _HORIZONTAL,
    ]


TRIANGLES = {
    "threedirac_1": ((-1.0, -1.0 / math.sqrt(3.0)), (1.0, -1.0 / math.sqrt(3.0)),
                     (0.0, math.sqrt(3.0) - 1.0 / math.sqrt(3.0))),
    "threedirac_2": ((-1.0, -1.0 / 3.0), (1.0, -1.0 / 3.0), (0.0, 2.0 / 3.0)),
    "threedirac_3": ((-1.0 / 3.0, -2.0 / 3.0), (2.0 / 3.0, -2.0 / 3.0), (-1.0 / 3.0, 4.0 / 3.0)),
    "threedirac_4": ((0.0, -1.0 / 3.0), (1.0, -1.0 / 3.0), (-1.0, 2.0 / 3.0)),
}

_A = (0.0, 1.0)
_B = (math.sqrt(3.0) / 2.0, -0.5)
_C = (-math.sqrt(3.0) / 2.0, -0.5)

CONTINUOUS = {
    "continuous_1": Mixture(((0.5, UniformSegment(_A, _C)), (0.5, UniformSegment(_B, _C)))),
    "continuous_2": UniformTriangle((_A, _B, _C)),
    "continuous_3": Gaussian((0.0, 0.0), ((2.0 / 16.0, 1.0 / 16.0), (1.0 / 16.0, 1.0 / 16.0))),
    "continuous_4": Mixture((
        (3.0 / 8.0, Gaussian((-1.5, 0.0), ((1.25, -1.0), (-1.0, 1.25)))),
        (3.0 / 8.0, Gaussian((1.5, 0.0), ((1.25, 1.0), (1.0, 1.25)))),
        (1.0 / 4.0, Gaussian((0.0, -1.25), ((1.0, 0.0), (0.0, 0.25)))),
    )),
}


@dataclass(frozen=True)
class Panel:
    name: str
    measure: DiscreteMeasure
    regs: tuple
    levels: tuple


def panel_seed(seed: int, panel: int) -> list:
    return [int(seed), int(panel)]


def extreme_panel_measure(k: int, seed: int, dirac: bool = False) -> DiscreteMeasure:
    """Sample for panel ``k`` (0-based) of the segment-mixture or Dirac-mixture figures."""
    gens = _dirac_panels() if dirac else _segment_panels()
    return sample(gens[k], SAMPLE_SIZE, panel_seed(seed, k))


FIGURE_NAMES = ("extreme1to4", "extreme5to8", "central1to4", "central5to8",
                *TRIANGLES, *CONTINUOUS)


def panels(name: str, seed: int) -> list[Panel]:
    """All panels of one figure, in left-to-right order."""
    roman = ("i", "ii", "iii", "iv")
    if name in ("extreme1to4", "extreme5to8", "central1to4", "central5to8"):
        dirac = name.endswith("5to8")
        if name.startswith("extreme"):
            regs, levels = ("geometric", "power:5", "power:10"), EXTREME_LEVELS
        else:
            regs, levels = ("geometric", "power:2", "power:5"), CENTRAL_LEVELS
        return [Panel(f"{name}_{roman[k]}", extreme_panel_measure(k, seed, dirac), regs, levels)
                for k in range(4)]
    if name in TRIANGLES:
        return [Panel(name, from_points(np.array(TRIANGLES[name])),
                      ("geometric", "power:2", "power:4"), TRIANGLE_LEVELS)]
    if name in CONTINUOUS:
        return [Panel(name, sample(CONTINUOUS[name], SAMPLE_SIZE, panel_seed(seed, 0)),
                      ("geometric", "power:1", "power:2", "power:5"), CONTINUOUS_LEVELS)]
    raise KeyError(name)
