"""Style-based dating of handwritten document images.

Pipeline: binarize page images, optionally expand the training set with
elastic character-level distortions, extract textural contour histograms
and junction-ray descriptors, quantize descriptors against a year-chained
codebook, and date pages with linear one-vs-all classifiers evaluated by
mean absolute error and cumulative score.
"""

__version__ = "0.1.0"
