from lcpformer.training.optim import OptimizerState, adamw_step, cosine_lr, sgd_step  # noqa: F401
