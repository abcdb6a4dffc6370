"""Learned Lyapunov certificates and their robustness bounds."""

from lyapcert._core import (
    CertificateNet,
    MlpArchitecture,
    PendulumParams,
    binomial,
    eval_V,
    gen_bound,
    grad_x_V,
    init_params,
    nested_sum_count,
    peak_t_exp,
    pendulum_rollout,
    run,
    unflatten,
)

__all__ = [
    "CertificateNet",
    "MlpArchitecture",
    "PendulumParams",
    "binomial",
    "eval_V",
    "gen_bound",
    "grad_x_V",
    "init_params",
    "nested_sum_count",
    "peak_t_exp",
    "pendulum_rollout",
    "run",
    "unflatten",
]
