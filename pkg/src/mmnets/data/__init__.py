"""Synthetic multi-modal datasets and image file I/O."""

from .scenes import (
    SceneConfig, SceneObject, SceneDescriptor, TripletSample, DatasetSplit,
    gen_scene_descriptor, gen_scene_triplet, render_scene, make_splits,
    class_geometry, class_palette, BACKGROUND_CLASS, BACKGROUND_DEPTH,
)
from .opponent import (
    OpponentConfig, OpponentSample, OpponentSplit,
    gen_opponent_sample, make_opponent_splits, class_template,
)
from .imageio import (
    ImageFormatError, write_pgm, write_ppm, write_raw,
    read_pgm, read_ppm, read_raw, load_image,
)
