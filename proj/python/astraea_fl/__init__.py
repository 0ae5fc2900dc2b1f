"""Python bindings for the astraea federated learning simulator."""

from ._core import (
    AstraeaError,
    ConfigError,
    DivergenceError,
    FormatError,
    ModelArch,
    NumericError,
    ShortageError,
    __version__,
    apportion,
    augmentation_plan,
    default_config,
    fedavg_aggregate,
    forward,
    init_params,
    kld,
    kld_to_uniform,
    loss_and_grad,
    predict,
    proposition_check,
    reschedule,
    run,
    traffic_astraea_round,
    traffic_fedavg_round,
)
