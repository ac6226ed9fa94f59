"""Black plastic (PS/ABS) sorting pipeline: segmentation, preprocessing,
a small AlexNet-style CNN trained from scratch, and an experiment harness."""

__version__ = "0.1.0"
