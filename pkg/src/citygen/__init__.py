"""Infinite, controllable city layout generation.

Pipeline: one-hot diffusion block generation, blended-diffusion inpainting
and outpainting, sliding-tile canvas expansion, multi-scale boundary
refinement, per-class height synthesis, and voxel lifting, exposed through a
CLI and an HTTP service.
"""

__version__ = "0.1.0"

from .datasets import (
    CleaningPolicy,
    CropSpec,
    ToyCityStyle,
    clean_filter,
    crop_patches,
    make_toy_city,
    postprocess_render,
)
from .diffusion import BlockGenerator, ancestral_sample, eps_loss
from .errors import CityGenError, ConfigurationError, DataError
from .fields import (
    OneHotField,
    Palette,
    PaletteClass,
    SemanticField,
    class_fractions,
    decode_argmax,
    default_palette,
    encode_one_hot,
    field_to_rgb,
    load_field_png,
    palette_map_nearest,
    save_field_png,
)
from .heights import (
    BuildingInstance,
    BuildingType,
    HeightConfig,
    HeightField,
    NaturalHeight,
    assign_building_heights,
    building_instances,
    class_mask,
    compose_height_field,
    default_height_config,
    synth_class_heights,
)
from .metrics import FeatureSpec, ScoreReport, extract_features, fid, kid, score_sets
from .painting import (
    PaintGenerator,
    PaintTask,
    blended_step,
    edge_repaint_mask,
    outpaint_mask,
    paint_sample,
    sketch_to_task,
)
from .refinement import RefineStage, refine_cascade, refine_stage, upsample_nn
from .schedule import NoiseSchedule, forward_noise, make_schedule
from .tiling import CanvasPlan, TileJob, execute_plan, expand_from, plan_canvas
from .voxels import VoxelLayout, export_voxels, import_voxels, lift_to_voxels
