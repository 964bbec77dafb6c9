from lcpformer.data.config import RunConfig, read_config, write_config  # noqa: F401
from lcpformer.data.dataset import DatasetSpec, Sample  # noqa: F401
