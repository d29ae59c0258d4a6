"""
Detections, matching and average precision
==========================================

Detector output is a list of scored boxes. We suppress duplicates, count
confident detections, match against ground truth at IoU >= 0.5, and score
the ranking with all-point average precision.
"""

from palmscope.annot import BoxAnnotation
from palmscope.detect import Detection, count_caterpillars_detections, filter_rois, iou, nms
from palmscope.evaluate import average_precision, classification_metrics, detection_confusion

truth = [BoxAnnotation(0, (0, 0, 10, 10)), BoxAnnotation(0, (30, 0, 40, 10))]
dets = [
    Detection((0, 0, 10, 10), 0, 0.97),
    Detection((1, 0, 11, 10), 0, 0.93),   # near-duplicate of the first
    Detection((30, 0, 40, 10), 0, 0.91),
    Detection((60, 0, 70, 10), 0, 0.40),  # nothing there
]
print("IoU of the duplicate pair: %.3f" % iou(dets[0].box, dets[1].box))
print("after NMS:", [d.confidence for d in nms(dets, 0.5)])
print("confident count:", count_caterpillars_detections(dets, conf_cut=0.9))

###############################################################################
# Without NMS the duplicate becomes a false positive.

m = filter_rois(dets, truth, 0.5)
print("TP flags in confidence order:", m.flags)
print(classification_metrics(detection_confusion(dets, truth, 0)))

curve, ap = average_precision({"sheet": dets}, {"sheet": truth}, 0)
print("PR points:", curve.points())
print("AP = %.4f" % ap)
