"""CRVOS: real-time semi-supervised video object segmentation, desk-scale core."""

from crvos._core import (  # noqa: F401
    Network,
    __version__,
    boundary_f,
    build_clue,
    downsample_mask,
    evaluate,
    generate_synthetic,
    jaccard,
    make_coord_channels,
    nll_loss,
    train_clip,
)
