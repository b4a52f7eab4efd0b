"""Bridge real videos to the training engine.

Runs a pretrained image backbone (classification head removed) over
deterministically sampled frames and writes PCFV feature files plus a
manifest. The engine consumes these files through its own reader; this
package shares only the on-disk formats with it, not code.
"""

from .pcfv import write_feature_file
from .sampling import select_frame_indices, subsample_eval

__version__ = "0.1.0"

__all__ = ["write_feature_file", "select_frame_indices", "subsample_eval", "__version__"]
