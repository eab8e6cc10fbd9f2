"""High-resolution image anomaly detection via autoregressive token prediction.

Token grids extracted from an image at several resolutions are flattened in
four scan orders, a state-space sequence model predicts each token from
context that ends m grid lines earlier, and the squared prediction error --
averaged over the four directions and summed across resolutions -- is the
anomaly map.
"""

from .errors import AradError, DataError, NumericError, UsageError

__version__ = "0.1.0"

__all__ = ["AradError", "DataError", "NumericError", "UsageError", "__version__"]
