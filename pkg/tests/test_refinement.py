import numpy as np
import pytest

from citygen.diffusion import BlockGenerator
from citygen.errors import ConfigurationError
from citygen.fields import SemanticField, class_fractions
from citygen.painting import PaintGenerator
from citygen.refinement import RefineStage, refine_cascade, refine_stage, upsample_nn

from conftest import random_field


def chebyshev_boundary_distance(grid):
    h, w = grid.shape
    boundary = np.zeros((h, w), dtype=bool)
    boundary[:-1] |= grid[:-1] != grid[1:]
    boundary[1:] |= grid[1:] != grid[:-1]
    boundary[:, :-1] |= grid[:, :-1] != grid[:, 1:]
    boundary[:, 1:] |= grid[:, 1:] != grid[:, :-1]
    points = np.argwhere(boundary)
    dist = np.full((h, w), np.inf)
    for r in range(h):
        for c in range(w):
            if len(points):
                dist[r, c] = np.abs(points - (r, c)).max(axis=1).min()
    return dist


class TestUpsample:
    def test_factor_one_is_identity(self, toy_fields):
        assert upsample_nn(toy_fields[0], 1) is toy_fields[0]

    def test_single_pixel_replication(self, palette):
        field = SemanticField(np.array([[3]]), palette)
        up = upsample_nn(field, 2)
        assert up.grid.tolist() == [[3, 3], [3, 3]]

    def test_class_fractions_invariant(self, toy_fields):
        for factor in (2, 3):
            up = upsample_nn(toy_fields[0], factor)
            assert class_fractions(up) == class_fractions(toy_fields[0])

    def test_rejects_bad_factor(self, toy_fields):
        with pytest.raises(ConfigurationError):
            upsample_nn(toy_fields[0], 0)


def stage64(tag="S128", radius=2):
    return RefineStage(tag, dilate_radius=radius, window_side=64)


class TestRefineStage:
    def test_uniform_input_equals_plain_upsample(self, untrained_paint, palette):
        field = SemanticField(np.full((32, 32), 2, dtype=np.int32), palette)
        out = refine_stage(field, stage64(), untrained_paint, seed=0)
        assert (out.grid == 2).all()
        assert out.shape == (64, 64)

    def test_far_pixels_unchanged(self, untrained_paint, palette):
        coarse = np.random.default_rng(0).integers(0, 8, (4, 4))
        field = SemanticField(np.repeat(np.repeat(coarse, 8, 0), 8, 1), palette)
        stage = stage64(radius=2)
        out = refine_stage(field, stage, untrained_paint, seed=1)
        up = upsample_nn(field, 2)
        dist = chebyshev_boundary_distance(up.grid)
        far = dist > stage.dilate_radius
        assert far.any()
        assert np.array_equal(out.grid[far], up.grid[far])

    def test_untrained_stage_model_required(self, palette):
        field = SemanticField(np.zeros((32, 32), dtype=np.int32), palette)
        with pytest.raises(ConfigurationError):
            refine_stage(field, stage64(), PaintGenerator(), seed=0)

    def test_side_divisibility_enforced(self, untrained_paint, palette):
        field = SemanticField(np.zeros((24, 24), dtype=np.int32), palette)
        with pytest.raises(ConfigurationError):
            refine_stage(field, stage64(), untrained_paint, seed=0)


@pytest.fixture(scope="module")
def diagonal_paint(palette):
    """Inpaint model trained on two-class diagonal half-planes (side 32)."""
    rng = np.random.default_rng(0)
    fields = []
    for _ in range(48):
        offset = int(rng.integers(-8, 9))
        lo, hi = (0, 3) if rng.random() < 0.5 else (3, 0)
        rows, cols = np.mgrid[0:32, 0:32]
        grid = np.where(rows - cols + offset > 0, lo, hi).astype(np.int32)
        fields.append(SemanticField(grid, palette))
    block = BlockGenerator(
        timesteps=50, train_side=32, base_width=8, depth=1, batch_size=8, epochs=0, seed=0
    ).fit(fields)
    return PaintGenerator(block=block, mode="inpaint", epochs=25, batch_size=8, seed=0).fit(fields)


def boundary_direction_changes(grid):
    """Count direction changes of the traced two-class boundary b(col)."""
    h, w = grid.shape
    top = grid[0]
    b = np.argmax(grid != top[None, :].repeat(h, 0), axis=0).astype(float)
    b[(grid == grid[0][None, :]).all(axis=0)] = h
    steps = np.diff(b)
    changes = 0
    for i in range(1, len(steps)):
        if steps[i] != steps[i - 1]:
            changes += 1
    return changes


class TestBoundarySmoothness:
    def test_refined_diagonal_no_more_stairsteps(self, diagonal_paint, palette):
        rows, cols = np.mgrid[0:16, 0:16]
        field = SemanticField(np.where(rows - cols > 0, 0, 3).astype(np.int32), palette)
        stage = RefineStage("S128", dilate_radius=2, window_side=32)
        up = upsample_nn(field, 2)
        refined = refine_stage(field, stage, diagonal_paint, seed=3)
        assert boundary_direction_changes(refined.grid) <= boundary_direction_changes(up.grid)


@pytest.fixture(scope="module")
def stage_models(untrained_block):
    m256 = PaintGenerator(mode="inpaint").init_from_block(untrained_block)
    m256.scale_tag_ = "S256"
    m128 = PaintGenerator(mode="inpaint").init_from_block(untrained_block)
    return {"S256": m256, "S128": m128}


@pytest.fixture(scope="module")
def stages():
    return (
        RefineStage("S256", dilate_radius=2, window_side=64),
        RefineStage("S128", dilate_radius=3, window_side=64),
    )


class TestRefineCascade:
    def test_side_quadruples(self, stage_models, stages, palette):
        field = random_field(np.random.default_rng(2), palette, 32, 32)
        out = refine_cascade(field, stage_models, seed=0, stages=stages)
        assert out.shape == (128, 128)

    def test_uniform_fixed_point(self, stage_models, stages, palette):
        field = SemanticField(np.full((32, 32), 5, dtype=np.int32), palette)
        out = refine_cascade(field, stage_models, seed=0, stages=stages)
        assert (out.grid == 5).all()

    def test_deterministic(self, stage_models, stages, palette):
        field = random_field(np.random.default_rng(4), palette, 32, 32)
        a = refine_cascade(field, stage_models, seed=7, stages=stages)
        b = refine_cascade(field, stage_models, seed=7, stages=stages)
        assert a == b

    def test_missing_model_rejected(self, stages, palette):
        field = random_field(np.random.default_rng(5), palette, 32, 32)
        with pytest.raises(ConfigurationError):
            refine_cascade(field, {}, seed=0, stages=stages)
