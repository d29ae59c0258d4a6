"""
Polygon annotations and YOLO boxes
==================================

Leaflet outlines usually arrive as a VGG Image Annotator export. Here we
build one by hand, parse it, and rasterize the polygon into a mask.
"""

import json

import numpy as np

from palmscope.annot import box_to_yolo_line, parse_via_polygons, parse_yolo_boxes, rasterize_polygon

# A VIA 2.x export keys each image by filename + size and stores every
# polygon as two parallel coordinate lists.
export = {
    "leaf.png1234": {
        "filename": "leaf.png",
        "size": 1234,
        "regions": [
            {"shape_attributes": {"name": "polygon",
                                  "all_points_x": [2, 14, 8],
                                  "all_points_y": [2, 2, 12]},
             "region_attributes": {"label": "leaflet"}},
            # circles are not polygons, they get skipped and counted
            {"shape_attributes": {"name": "circle", "cx": 5, "cy": 5, "r": 2},
             "region_attributes": {"label": "spot"}},
        ],
    }
}
result = parse_via_polygons(json.dumps(export))
print("polygons:", len(result.annotations), "skipped shapes:", result.skipped_shapes)

###############################################################################
# A pixel belongs to the mask when its center lies inside the polygon
# (even-odd rule).

poly = result.annotations[0]
mask = rasterize_polygon(poly, 16, 14)
for row in mask:
    print("".join("#" if v else "." for v in row))
print("mask pixels:", int(mask.sum()))

###############################################################################
# Boxes go the other way: pixel corners to normalized YOLO lines and back.

boxes = parse_yolo_boxes("0 0.5 0.5 0.25 0.5\n", 64, 32)
print(boxes[0].box, "->", box_to_yolo_line(boxes[0], 64, 32))
assert np.allclose(boxes[0].box, (24, 8, 40, 24))
