"""Joint dental disease detection and anatomy segmentation."""

from ._dentalx import (
    Box,
    ConfigError,
    DataError,
    Detection,
    GroundTruthBox,
    Model,
    NumericalError,
    ShapeError,
    anatomy_name,
    box_iou,
    compute_ap,
    compute_seg_metrics,
    default_rules,
    disease_names,
    domain_rule_filter,
    export_dataset,
    generate_scene,
    nms,
    run_cli,
)

__all__ = [
    "Box",
    "ConfigError",
    "DataError",
    "Detection",
    "GroundTruthBox",
    "Model",
    "NumericalError",
    "ShapeError",
    "anatomy_name",
    "box_iou",
    "compute_ap",
    "compute_seg_metrics",
    "default_rules",
    "disease_names",
    "domain_rule_filter",
    "export_dataset",
    "generate_scene",
    "nms",
    "run_cli",
    "main",
]


def main() -> int:
    import sys

    code, out, err = run_cli(sys.argv[1:])
    sys.stdout.write(out)
    sys.stderr.write(err)
    return code
