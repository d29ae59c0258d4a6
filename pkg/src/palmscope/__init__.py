"""Coconut leaflet infestation scoring, caterpillar counting and detection evaluation."""

__version__ = "0.1.0"

from .annot import (AnnotationParseError, BoxAnnotation, PolygonAnnotation, convert_box_document,
                    parse_via_polygons, parse_yolo_boxes, rasterize_polygon)
from .counter import (ComponentLabels, CountParams, binarize, connected_components,
                      count_caterpillars_classical, erode, gaussian_blur, otsu_threshold)
from .detect import Detection, count_caterpillars_detections, filter_rois, iou, nms
from .evaluate import (ConfusionCounts, PrCurve, average_precision, classification_metrics,
                       count_agreement, mean_average_precision)
from .imgcore import HsvPixel, HsvRange, in_range, load_image, rgb_to_gray, rgb_to_hsv, save_png
from .nnref import conv2d, dense_forward, max_pool, relu
from .prep import augment_image, normalize_pixels, resize_image
from .severity import (ClusterResult, ColorScheme, NoLeafError, ProgressionReport, compute_progression,
                       crop_segment, kmeans_cluster, quantize_colors)

__all__ = [
    "AnnotationParseError", "BoxAnnotation", "PolygonAnnotation", "convert_box_document",
    "parse_via_polygons", "parse_yolo_boxes", "rasterize_polygon", "ComponentLabels", "CountParams",
    "binarize", "connected_components", "count_caterpillars_classical", "erode", "gaussian_blur",
    "otsu_threshold", "Detection", "count_caterpillars_detections", "filter_rois", "iou", "nms",
    "ConfusionCounts", "PrCurve", "average_precision", "classification_metrics", "count_agreement",
    "mean_average_precision", "HsvPixel", "HsvRange", "in_range", "load_image", "rgb_to_gray", "rgb_to_hsv",
    "save_png", "conv2d", "dense_forward", "max_pool", "relu", "augment_image", "normalize_pixels",
    "resize_image", "ClusterResult", "ColorScheme", "NoLeafError", "ProgressionReport", "compute_progression",
    "crop_segment", "kmeans_cluster", "quantize_colors",
]
