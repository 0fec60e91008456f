"""Hot numerical kernels with a compiled core and a numpy fallback.

The Cython extension ``_ckernels`` is used when it was built; otherwise the
numpy implementations in ``_numpy`` are used. Setting the environment
variable ``TPA_YIELD_PURE_PYTHON=1`` forces the fallback.

Both backends expose the same four functions (see the note below on which
one the dispatcher takes for ``mlp_loss_grad``):

mlp_loss_grad
    Loss and backpropagated gradients of the two-layer perceptron.
anfis_forward
    Layer-by-layer ANFIS forward pass over a batch.
anfis_premise_grad
    Loss and gradient w.r.t. every bell-membership parameter.
subclust_potential
    Initial mountain potential of every point for subtractive clustering.
"""

import os

from . import _numpy

numpy_backend = _numpy

try:
    if os.environ.get("TPA_YIELD_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure-python kernels requested")
    from . import _ckernels as _active
    compiled_backend = _active
except ImportError:
    _active = _numpy
    compiled_backend = None

BACKEND = _active.NAME

# The MLP pass is two matrix products plus an elementwise tanh; numpy's BLAS
# and SIMD tanh beat the compiled loop at every shape benchmarked, so the
# dispatcher keeps the numpy version. The compiled one remains reachable
# through ``compiled_backend`` and is benchmarked alongside.
mlp_loss_grad = _numpy.mlp_loss_grad
anfis_forward = _active.anfis_forward
anfis_premise_grad = _active.anfis_premise_grad
subclust_potential = _active.subclust_potential

__all__ = [
    "BACKEND",
    "compiled_backend",
    "numpy_backend",
    "mlp_loss_grad",
    "anfis_forward",
    "anfis_premise_grad",
    "subclust_potential",
]
