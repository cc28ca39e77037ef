"""Quality assessment for digitized microscopy slides.

The package tiles a whole-slide raster into fixed-size patches, classifies
every patch into one of eight region classes with a small depthwise-separable
CNN (or classical HOG / color-LBP baselines), turns the per-tile labels into
an information-density heat map, and emits a machine-readable assessment
report with staining / density / damage verdicts.
"""

__version__ = "0.1.0"
