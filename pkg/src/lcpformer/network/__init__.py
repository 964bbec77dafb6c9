from lcpformer.network.config import ModelConfig, preset  # noqa: F401
from lcpformer.network.model import LCPFormer, forward, param_init  # noqa: F401
from lcpformer.network.params import LCPFormerParams, param_count  # noqa: F401
