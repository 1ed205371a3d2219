"""Shared fixtures: synthetic image corpora written as PGM files."""

import numpy as np
import pytest

from mtt import pgm


def blob_images(seed, n_base, h=32, w=32, variants=2):
    """Smooth Gaussian-blob patterns in [0, 1]; each base pattern appears
    ``variants`` times with a mild brightness/contrast tweak, so every
    image has a close relative in any half-split of the pool."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:h, 0:w]
    images = []
    for _ in range(n_base):
        base = np.zeros((h, w))
        for _ in range(4):
            cy, cx = rng.uniform(0, h), rng.uniform(0, w)
            width = rng.uniform(3, 10)
            base += rng.uniform(0.3, 1.0) * np.exp(
                -((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * width**2)
            )
        base = (base - base.min()) / (base.max() - base.min())
        images.append(base)
        for _ in range(variants - 1):
            tweak = base * rng.uniform(0.85, 1.15) + rng.uniform(-0.05, 0.05)
            images.append(np.clip(tweak, 0.0, 1.0))
    return images


def low_rank_images(seed, count, rank, h=8, w=8):
    """Images whose columns all live in one ``rank``-dimensional space.

    The constant direction is part of the basis so that the per-image
    [0, 1] normalisation (a shift plus a scale) stays inside the span.
    """
    rng = np.random.default_rng(seed)
    raw = np.hstack([np.ones((h, 1)), rng.standard_normal((h, rank - 1))])
    basis = np.linalg.qr(raw)[0]
    images = []
    for _ in range(count):
        coeff = rng.uniform(-1.0, 1.0, size=(rank, w))
        img = basis @ coeff
        img = (img - img.min()) / (img.max() - img.min())
        images.append(img)
    return images


def write_corpus(directory, images):
    directory.mkdir(parents=True, exist_ok=True)
    for i, img in enumerate(images):
        pgm.write_pgm(directory / f"img_{i:03d}.pgm", img)
    return directory


@pytest.fixture(scope="session")
def blob_corpus(tmp_path_factory):
    """20 smooth 32 x 32 images (10 bases x 2 variants) on disk."""
    root = tmp_path_factory.mktemp("corpus_blob")
    return write_corpus(root, blob_images(seed=7, n_base=10))


@pytest.fixture(scope="session")
def low_rank_corpus(tmp_path_factory):
    """10 exactly low-rank 8 x 8 images (rank 4 before quantisation)."""
    root = tmp_path_factory.mktemp("corpus_lowrank")
    return write_corpus(root, low_rank_images(seed=3, count=10, rank=4))
