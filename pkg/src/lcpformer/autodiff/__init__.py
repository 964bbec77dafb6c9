from lcpformer.autodiff.tensor import Tape, Tensor, active_tape, backward  # noqa: F401
