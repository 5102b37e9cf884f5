from __future__ import annotations

from typing import Iterable

import numpy as np
from scipy import ndimage

from .errors import InstanceValidationError
from .instance import (
    Direction,
    PairwiseKind,
    PairwiseSpec,
    TomographyInstance,
    build_lattice_rays,
    parse_directions,
    project,
)


GENERATOR_NAME = "box-blur-threshold"
DEFAULT_SMOOTHING = 2


def random_image(seed: int, width: int, height: int, k: int, smoothing: int = DEFAULT_SMOOTHING) -> np.ndarray:
    """Blob-like ``height x width`` image with labels in ``[0, k-1]``.

    Uniform noise is box-blurred with radius ``smoothing`` and cut into ``k`` bins
    of equal pixel count by rank, so every label appears once ``width*height >= k``.
    """
    if k < 2:
        raise InstanceValidationError("must be >= 2", field="k")
    if smoothing < 0:
        raise InstanceValidationError("must be >= 0", field="smoothing")
    rng = np.random.default_rng(seed)
    noise = rng.random((height, width))
    blurred = ndimage.uniform_filter(noise, size=2 * smoothing + 1, mode="wrap")
    flat = blurred.reshape(-1)
    ranks = np.empty(flat.size, dtype=np.int64)
    ranks[np.argsort(flat, kind="stable")] = np.arange(flat.size)
    return (ranks * k // flat.size).reshape(height, width)


def generate_random_instance(
    seed: int,
    width: int,
    height: int,
    k: int = 3,
    directions: Iterable[str | Direction] | str = "hv",
    smoothing: int = DEFAULT_SMOOTHING,
) -> tuple[TomographyInstance, np.ndarray]:
    """Random instance with zero unaries, TV (``|x_u - x_v|``) pairwise costs and exact ray sums."""
    image = random_image(seed, width, height, k, smoothing)
    wanted = parse_directions(directions)
    rays = tuple(build_lattice_rays(width, height, wanted))
    metadata = {
        "generator": GENERATOR_NAME,
        "seed": int(seed),
        "smoothing": int(smoothing),
        "directions": sorted(direction.value for direction in wanted),
    }
    blank = TomographyInstance(
        width=width,
        height=height,
        k=k,
        unary=np.zeros((width * height, k)),
        pairwise=PairwiseSpec(PairwiseKind.ABSDIFF, 1.0),
        rays=rays,
        metadata=metadata,
    )
    ground_truth = image.reshape(-1)
    return blank.with_targets(project(blank, ground_truth).tolist()), ground_truth
