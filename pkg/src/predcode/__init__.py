"""predcode: predictive-coding recurrence over per-frame features for action recognition.

The package is organized as a small library plus a CLI (``predcode``):

- ``tensor``      float64 arrays with tape-based reverse-mode gradients
- ``prednet``     the 2-layer error-propagation recurrence (convLSTM units)
- ``fusion``      per-step max-pool fusion, classification, score averaging
- ``encoder``     built-in trainable frame encoder for desk-scale runs
- ``data``        frame samplers, PCFV feature files, the synthetic motion benchmark
- ``optim``       SGD with momentum/weight decay and the plateau LR schedule
- ``training``    loss assembly, epoch loop, checkpointing
- ``evaluation``  accuracy / top-k / confusion metrics
- ``report``      metrics.json, confusion.csv/.ppm and matplotlib figures
- ``cli``         gen-data / train / eval / gradcheck / inspect subcommands
"""

from .tensor import GradientTape, Tensor

__version__ = "0.1.0"

__all__ = ["Tensor", "GradientTape", "__version__"]
