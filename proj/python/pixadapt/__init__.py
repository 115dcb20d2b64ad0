"""Few-shot pixel-feature localization: file formats, adapters, and metrics."""

from ._pixadapt import (
    PixadaptError,
    basic_localize,
    filter_components,
    interpolate_patch_grid,
    iou,
    l2_normalize,
    landmark_from_mask,
    localization_accuracy,
    mock_refine,
    read_feature_map,
    read_label_mask,
    run_cli,
    select_prompts,
    synth_scenario,
    write_feature_map,
    write_label_mask,
)

__all__ = [
    "PixadaptError",
    "basic_localize",
    "filter_components",
    "interpolate_patch_grid",
    "iou",
    "l2_normalize",
    "landmark_from_mask",
    "localization_accuracy",
    "mock_refine",
    "read_feature_map",
    "read_label_mask",
    "run_cli",
    "select_prompts",
    "synth_scenario",
    "write_feature_map",
    "write_label_mask",
]
